#include "amp/dataset.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "AMPD/AMPC serialization assumes a little-endian host");

namespace amp {

namespace {

constexpr char kMagic[4] = {'A', 'M', 'P', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

void put_f32(std::string& out, float v) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    out.append(buf, 4);
}

std::uint32_t get_u32(const std::string& in, std::size_t& off) {
    std::uint32_t v;
    std::memcpy(&v, in.data() + off, 4);
    off += 4;
    return v;
}

float get_f32(const std::string& in, std::size_t& off) {
    float v;
    std::memcpy(&v, in.data() + off, 4);
    off += 4;
    return v;
}

} // namespace

void write_ampd(const Dataset& data, const std::string& path) {
    if (data.samples.empty() || data.classes < 1)
        throw EmptyDataset("write_ampd: nothing to write");

    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(data.size()));
    put_u32(out, static_cast<std::uint32_t>(data.classes));
    put_u32(out, static_cast<std::uint32_t>(data.channels));
    put_u32(out, static_cast<std::uint32_t>(data.height));
    put_u32(out, static_cast<std::uint32_t>(data.width));
    for (const Sample& s : data.samples) {
        if (s.label < 0 || s.label >= data.classes)
            throw BadLabel("write_ampd: label out of range");
        put_u32(out, static_cast<std::uint32_t>(s.label + 1));
    }
    for (const Sample& s : data.samples) {
        if (s.raw.depth != data.channels || s.raw.height != data.height ||
            s.raw.width != data.width)
            throw BadShape("write_ampd: inhomogeneous sample shape");
        // Column-major over (channel, location) == location-major, channel fastest.
        for (Eigen::Index l = 0; l < s.raw.values.cols(); ++l)
            for (Eigen::Index d = 0; d < s.raw.values.rows(); ++d)
                put_f32(out, static_cast<float>(s.raw.values(d, l)));
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file || !file.write(out.data(), static_cast<std::streamsize>(out.size())))
        throw IOFailure("write_ampd: cannot write " + path);
}

Dataset read_ampd(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file)
        throw IOFailure("read_ampd: cannot open " + path);
    std::string in((std::istreambuf_iterator<char>(file)),
                   std::istreambuf_iterator<char>());

    if (in.size() < 28 || std::memcmp(in.data(), kMagic, 4) != 0)
        throw CorruptDataset("read_ampd: bad magic");
    std::size_t off = 4;
    if (get_u32(in, off) != kVersion)
        throw CorruptDataset("read_ampd: unsupported version");
    const std::uint32_t n = get_u32(in, off);
    const std::uint32_t classes = get_u32(in, off);
    const std::uint32_t channels = get_u32(in, off);
    const std::uint32_t height = get_u32(in, off);
    const std::uint32_t width = get_u32(in, off);
    if (n == 0 || classes == 0 || channels == 0 || height == 0 || width == 0)
        throw CorruptDataset("read_ampd: zero dimension");

    const std::size_t expected =
        28 + 4ull * n + 4ull * n * channels * height * width;
    if (in.size() != expected)
        throw CorruptDataset("read_ampd: file length mismatch");

    Dataset data;
    data.classes = static_cast<int>(classes);
    data.channels = static_cast<int>(channels);
    data.height = static_cast<int>(height);
    data.width = static_cast<int>(width);
    data.samples.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint32_t label = get_u32(in, off);
        if (label < 1 || label > classes)
            throw CorruptDataset("read_ampd: label out of range");
        data.samples[i].label = static_cast<int>(label) - 1;
    }
    for (std::uint32_t i = 0; i < n; ++i) {
        FeatureTensor raw(static_cast<int>(channels), static_cast<int>(height),
                          static_cast<int>(width));
        for (Eigen::Index l = 0; l < raw.values.cols(); ++l)
            for (Eigen::Index d = 0; d < raw.values.rows(); ++d)
                raw.values(d, l) = static_cast<double>(get_f32(in, off));
        data.samples[i].raw = std::move(raw);
    }
    return data;
}

} // namespace amp
