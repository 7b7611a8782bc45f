#include "mirrorfill/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "binary_io.hpp"

namespace mirrorfill {
namespace {

constexpr char kMagic[4] = {'S', 'Y', 'M', 'C'};

}  // namespace

std::string serialize_checkpoint(const std::vector<NamedArray>& arrays)
{
    std::ostringstream os(std::ios::binary);
    os.write(kMagic, 4);
    detail::put<std::uint32_t>(os, kCheckpointVersion);
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(arrays.size()));
    for (const NamedArray& a : arrays) {
        if (a.name.size() > std::numeric_limits<std::uint16_t>::max()) {
            throw ValidationError("checkpoint array name too long: " + a.name.substr(0, 32) + "...");
        }
        if (a.data.rank() > 255) {
            throw ValidationError("checkpoint array rank too large: " + a.name);
        }
        detail::put<std::uint16_t>(os, static_cast<std::uint16_t>(a.name.size()));
        os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
        detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(a.data.rank()));
        for (int d : a.data.shape()) {
            detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        }
        os.write(reinterpret_cast<const char*>(a.data.data()),
                 static_cast<std::streamsize>(a.data.size() * sizeof(float)));
    }
    return os.str();
}

std::vector<NamedArray> deserialize_checkpoint(const std::string& bytes)
{
    std::istringstream is(bytes, std::ios::binary);
    detail::Reader r(is);
    char magic[4];
    r.read_bytes(magic, 4, "magic");
    if (!std::equal(magic, magic + 4, kMagic)) {
        throw FormatError("not a SYMC checkpoint (bad magic at offset 0)");
    }
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version) + " at offset 4");
    }
    const auto count = r.get<std::uint32_t>("array count");
    std::vector<NamedArray> out;
    for (std::uint32_t k = 0; k < count; ++k) {
        NamedArray a;
        const auto len = r.get<std::uint16_t>("name length");
        a.name.resize(len);
        r.read_bytes(a.name.data(), len, "name");
        const std::uint64_t rank_offset = r.offset();
        const auto rank = r.get<std::uint8_t>("rank");
        if (rank == 0) {
            throw FormatError("array '" + a.name + "' has rank 0 at offset " + std::to_string(rank_offset));
        }
        Shape shape;
        std::uint64_t n = 1;
        for (int d = 0; d < rank; ++d) {
            const std::uint64_t dim_offset = r.offset();
            const auto dim = r.get<std::uint32_t>("dimension");
            if (dim == 0 || dim > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
                throw FormatError("array '" + a.name + "' has invalid dimension at offset " +
                                  std::to_string(dim_offset));
            }
            n *= dim;
            if (n * sizeof(float) > bytes.size()) {
                throw FormatError("array '" + a.name + "' payload exceeds file size at offset " +
                                  std::to_string(dim_offset));
            }
            shape.push_back(static_cast<int>(dim));
        }
        std::vector<float> data(n);
        r.read_bytes(data.data(), n * sizeof(float), "payload");
        a.data = Tensor<float>(std::move(shape), std::move(data));
        out.push_back(std::move(a));
    }
    if (is.peek() != std::char_traits<char>::eof()) {
        throw FormatError("trailing bytes after last array at offset " + std::to_string(r.offset()));
    }
    return out;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays)
{
    const std::string bytes = serialize_checkpoint(arrays);
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw ValidationError("cannot write checkpoint " + path.string());
    }
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) {
        throw ValidationError("failed writing checkpoint " + path.string());
    }
}

std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw ValidationError("cannot open checkpoint " + path.string());
    }
    std::ostringstream buf;
    buf << is.rdbuf();
    return deserialize_checkpoint(buf.str());
}

const NamedArray& find_array(const std::vector<NamedArray>& arrays, const std::string& name)
{
    for (const NamedArray& a : arrays) {
        if (a.name == name) {
            return a;
        }
    }
    throw FormatError("checkpoint has no array named '" + name + "'");
}

Tensor<float> pack_u64(std::uint64_t v)
{
    Tensor<float> t(Shape{4});
    for (int k = 0; k < 4; ++k) {
        t[k] = static_cast<float>((v >> (16 * k)) & 0xFFFF);
    }
    return t;
}

std::uint64_t unpack_u64(const Tensor<float>& t)
{
    if (t.size() != 4) {
        throw FormatError("packed integer must have 4 limbs");
    }
    std::uint64_t v = 0;
    for (int k = 0; k < 4; ++k) {
        const float limb = t[k];
        if (!(limb >= 0.0f && limb <= 65535.0f) || limb != std::floor(limb)) {
            throw FormatError("packed integer limb out of range");
        }
        v |= static_cast<std::uint64_t>(limb) << (16 * k);
    }
    return v;
}

Tensor<float> pack_double(double v)
{
    return pack_u64(std::bit_cast<std::uint64_t>(v));
}

double unpack_double(const Tensor<float>& t)
{
    return std::bit_cast<double>(unpack_u64(t));
}

}  // namespace mirrorfill
