#include "doctest.h"

#include "mirrorfill/gradsuite.hpp"

using namespace mirrorfill;

TEST_CASE("gradient suite passes for seeds 0-4")
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        for (const auto& e : run_gradient_suite(seed)) {
            INFO("seed " << seed << ": " << e.name << " rel err " << e.max_rel_error);
            CHECK(e.passed());
        }
    }
}
