#pragma once

// Little-endian helpers shared by the flow and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "mirrorfill/errors.hpp"

namespace mirrorfill::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename U>
void put(std::ostream& os, U v)
{
    os.write(reinterpret_cast<const char*>(&v), sizeof(U));
}

/// Reads with an explicit offset counter so format errors can name it.
class Reader {
public:
    explicit Reader(std::istream& is) : is_(is) {}

    template <typename U>
    U get(const char* what)
    {
        U v{};
        read_bytes(&v, sizeof(U), what);
        return v;
    }

    void read_bytes(void* dst, std::size_t n, const char* what)
    {
        is_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) {
            throw FormatError(std::string("truncated input reading ") + what + " at offset " +
                              std::to_string(offset_));
        }
        offset_ += n;
    }

    std::uint64_t offset() const { return offset_; }

private:
    std::istream& is_;
    std::uint64_t offset_ = 0;
};

}  // namespace mirrorfill::detail
