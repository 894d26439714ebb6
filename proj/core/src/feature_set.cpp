#include "partco/feature_set.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace partco {

namespace {

constexpr char kMagic[4] = {'P', 'T', 'C', 'F'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is, std::size_t& offset, const char* what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (is.gcount() != 4)
        throw FormatError(std::string("truncated while reading ") + what, offset);
    offset += 4;
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(os, bits);
}

}  // namespace

DenseMatrix FeatureSet::image_matrix(std::size_t image) const {
    DenseMatrix m(patches_per_image, dim);
    std::memcpy(m.data().data(), data.data() + image * patches_per_image * dim,
                patches_per_image * dim * sizeof(double));
    return m;
}

void FeatureSet::validate() const {
    if (data.size() != num_images * patches_per_image * dim)
        throw ValidationError("FeatureSet: data length does not match declared shape");
    const auto side = static_cast<std::size_t>(std::lround(std::sqrt(
        static_cast<double>(patches_per_image))));
    if (side * side != patches_per_image)
        throw ValidationError("FeatureSet: patches_per_image " +
                              std::to_string(patches_per_image) + " is not a perfect square");
    for (double v : data)
        if (!std::isfinite(v)) throw ValidationError("FeatureSet: non-finite value");
}

void write_features(const FeatureSet& fs, const std::filesystem::path& path) {
    fs.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("write_features: cannot open " + path.string());
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<std::uint32_t>(fs.num_images));
    put_u32(os, static_cast<std::uint32_t>(fs.patches_per_image));
    put_u32(os, static_cast<std::uint32_t>(fs.dim));
    for (double v : fs.data) put_f32(os, static_cast<float>(v));
    if (!os) throw IoError("write_features: write failed for " + path.string());
}

FeatureSet read_features(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("read_features: cannot open " + path.string());

    std::size_t offset = 0;
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4) throw FormatError("truncated magic", offset);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad magic, expected PTCF", 0);
    offset += 4;

    const std::uint32_t version = get_u32(is, offset, "version");
    if (version != kVersion)
        throw FormatError("unsupported version " + std::to_string(version), offset - 4);
    const std::uint32_t m = get_u32(is, offset, "num_images");
    const std::uint32_t n = get_u32(is, offset, "patches_per_image");
    const std::uint32_t d = get_u32(is, offset, "dim");

    FeatureSet fs(m, n, d);
    for (std::size_t i = 0; i < fs.data.size(); ++i) {
        const std::uint32_t bits = get_u32(is, offset, "payload");
        float f;
        std::memcpy(&f, &bits, 4);
        fs.data[i] = static_cast<double>(f);
    }
    fs.validate();
    return fs;
}

}  // namespace partco
