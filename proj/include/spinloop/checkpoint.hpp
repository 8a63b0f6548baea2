#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "spinloop/mlp.hpp"

namespace spinloop::nettrain {

// SPINMLP1 checkpoint: 8-byte magic, little-endian u32 layer count, then per
// layer u32 rows, u32 cols, row-major f64 weights, f64 biases (cols entries).

inline constexpr std::array<char, 8> kCheckpointMagic = {'S', 'P', 'I', 'N', 'M', 'L', 'P', '1'};

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<std::uint8_t, 4> b = {std::uint8_t(v), std::uint8_t(v >> 8),
                                           std::uint8_t(v >> 16), std::uint8_t(v >> 24)};
    out.write(reinterpret_cast<const char*>(b.data()), 4);
}

inline std::uint32_t get_u32(std::istream& in) {
    std::array<std::uint8_t, 4> b{};
    in.read(reinterpret_cast<char*>(b.data()), 4);
    if (!in) throw std::runtime_error("SPINMLP1: truncated header field");
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

inline void put_f64(std::ostream& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    std::array<std::uint8_t, 8> b{};
    for (int i = 0; i < 8; ++i) b[i] = std::uint8_t(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b.data()), 8);
}

inline double get_f64(std::istream& in) {
    std::array<std::uint8_t, 8> b{};
    in.read(reinterpret_cast<char*>(b.data()), 8);
    if (!in) throw std::runtime_error("SPINMLP1: truncated payload");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace detail

inline void write_checkpoint(const Mlp& mlp, std::ostream& out) {
    mlp.validate();
    out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
    detail::put_u32(out, static_cast<std::uint32_t>(mlp.layer_count()));
    for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
        const auto& w = mlp.weights[l];
        detail::put_u32(out, static_cast<std::uint32_t>(w.rows()));
        detail::put_u32(out, static_cast<std::uint32_t>(w.cols()));
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) detail::put_f64(out, w(i, j));
        for (Eigen::Index j = 0; j < mlp.biases[l].size(); ++j)
            detail::put_f64(out, mlp.biases[l][j]);
    }
}

inline Mlp read_checkpoint(std::istream& in) {
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kCheckpointMagic)
        throw std::runtime_error("SPINMLP1: bad magic (not a checkpoint file)");
    const std::uint32_t n_layers = detail::get_u32(in);
    if (n_layers == 0 || n_layers > 64)
        throw std::runtime_error("SPINMLP1: implausible layer count");
    Mlp mlp;
    for (std::uint32_t l = 0; l < n_layers; ++l) {
        const std::uint32_t rows = detail::get_u32(in);
        const std::uint32_t cols = detail::get_u32(in);
        Matrix w(rows, cols);
        for (std::uint32_t i = 0; i < rows; ++i)
            for (std::uint32_t j = 0; j < cols; ++j) w(i, j) = detail::get_f64(in);
        Vector b(cols);
        for (std::uint32_t j = 0; j < cols; ++j) b[j] = detail::get_f64(in);
        mlp.weights.push_back(std::move(w));
        mlp.biases.push_back(std::move(b));
    }
    mlp.validate();
    return mlp;
}

inline void save_checkpoint(const Mlp& mlp, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    write_checkpoint(mlp, out);
    if (!out) throw std::runtime_error("write error on checkpoint: " + path);
}

inline Mlp load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    return read_checkpoint(in);
}

}  // namespace spinloop::nettrain
