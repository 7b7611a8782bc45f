#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mirrorfill/tensor.hpp"

namespace mirrorfill {

struct NamedArray {
    std::string name;
    Tensor<float> data;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// SYMC layout: "SYMC", u32 version, u32 count, then per array u16 name
/// length, name, u8 rank, u32 dims[rank], float32 payload (little endian).
std::string serialize_checkpoint(const std::vector<NamedArray>& arrays);
std::vector<NamedArray> deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path);

/// Finds an array by name; throws FormatError when missing.
const NamedArray& find_array(const std::vector<NamedArray>& arrays, const std::string& name);

/// Stores a 64-bit value exactly as four 16-bit limbs in a float array.
Tensor<float> pack_u64(std::uint64_t v);
std::uint64_t unpack_u64(const Tensor<float>& t);
Tensor<float> pack_double(double v);
double unpack_double(const Tensor<float>& t);

}  // namespace mirrorfill
