#pragma once

#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

namespace spinloop::mnist {

inline constexpr std::size_t kImagePixels = 28 * 28;

struct MnistSet {
    std::size_t count = 0;
    std::vector<std::uint8_t> images;  // count * 784, row-major
    std::vector<std::uint8_t> labels;  // count entries, 0-9

    std::span<const std::uint8_t> image(std::size_t i) const {
        return {images.data() + i * kImagePixels, kImagePixels};
    }
    std::uint8_t label(std::size_t i) const { return labels[i]; }
};

namespace detail {

/// Reads a whole file through zlib; gzopen passes uncompressed files through
/// untouched, which covers both plain IDX and .gz variants.
inline std::vector<std::uint8_t> read_file(const std::string& path) {
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("cannot open file: " + path);
    std::vector<std::uint8_t> out;
    std::uint8_t buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof(buf))) > 0) out.insert(out.end(), buf, buf + n);
    const bool read_error = n < 0;
    gzclose(f);
    if (read_error) throw std::runtime_error("read/decompress error in file: " + path);
    return out;
}

inline std::uint32_t read_be_u32(const std::vector<std::uint8_t>& b, std::size_t off) {
    return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
           (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

inline void require_size(const std::vector<std::uint8_t>& b, std::size_t expected,
                         const std::string& path) {
    if (b.size() != expected) {
        std::ostringstream msg;
        msg << "truncated or oversized IDX file '" << path << "': expected " << expected
            << " bytes, got " << b.size();
        throw std::runtime_error(msg.str());
    }
}

}  // namespace detail

/// Parses the standard IDX pair: big-endian u32 magic (0x00000803 images,
/// 0x00000801 labels), count, 28x28 dimensions, then raw bytes.
inline MnistSet load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = detail::read_file(images_path);
    if (img.size() < 16) throw std::runtime_error("truncated IDX image header: " + images_path);
    if (detail::read_be_u32(img, 0) != 0x00000803u)
        throw std::runtime_error("bad IDX image magic in " + images_path);
    const std::uint32_t n_images = detail::read_be_u32(img, 4);
    const std::uint32_t rows = detail::read_be_u32(img, 8);
    const std::uint32_t cols = detail::read_be_u32(img, 12);
    if (rows != 28 || cols != 28)
        throw std::runtime_error("unexpected IDX image dimensions (want 28x28) in " + images_path);
    detail::require_size(img, 16 + std::size_t(n_images) * kImagePixels, images_path);

    const auto lab = detail::read_file(labels_path);
    if (lab.size() < 8) throw std::runtime_error("truncated IDX label header: " + labels_path);
    if (detail::read_be_u32(lab, 0) != 0x00000801u)
        throw std::runtime_error("bad IDX label magic in " + labels_path);
    const std::uint32_t n_labels = detail::read_be_u32(lab, 4);
    detail::require_size(lab, 8 + std::size_t(n_labels), labels_path);

    if (n_images != n_labels) {
        std::ostringstream msg;
        msg << "image/label count mismatch: " << n_images << " images vs " << n_labels
            << " labels";
        throw std::runtime_error(msg.str());
    }

    MnistSet set;
    set.count = n_images;
    set.images.assign(img.begin() + 16, img.end());
    set.labels.assign(lab.begin() + 8, lab.end());
    for (auto l : set.labels)
        if (l > 9) throw std::runtime_error("label out of range 0-9 in " + labels_path);
    return set;
}

}  // namespace spinloop::mnist
