#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace spinloop {

/// Dense row-major 0/1 matrix; rows are time-steps, columns are lines.
struct BinaryMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> data;

    BinaryMatrix() = default;
    BinaryMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0) {}

    std::uint8_t operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::uint8_t& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }

    const std::uint8_t* row(std::size_t r) const { return data.data() + r * cols; }
    std::uint8_t* row(std::size_t r) { return data.data() + r * cols; }

    std::uint64_t count_ones() const {
        std::uint64_t n = 0;
        for (auto v : data) n += v;
        return n;
    }
};

}  // namespace spinloop
