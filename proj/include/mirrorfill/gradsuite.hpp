#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mirrorfill {

struct GradSuiteEntry {
    std::string name;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    std::size_t checked = 0;

    bool passed() const { return checked > 0 && max_rel_error < tolerance; }
};

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kNetworkGradTolerance = 1e-3;

/// Central-difference checks in double precision, inputs drawn from `seed`:
/// the warp (source and flow), every loss term, and one end-to-end pass of a
/// width-4 model at 32 x 32 (flow, light and rec weights).
std::vector<GradSuiteEntry> run_gradient_suite(std::uint64_t seed);

}  // namespace mirrorfill
