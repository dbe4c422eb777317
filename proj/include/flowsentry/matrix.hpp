#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace flowsentry {

// Dense row-major feature matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(values.data() + r * cols, cols);
    }
    std::span<double> row(std::size_t r) {
        return std::span<double>(values.data() + r * cols, cols);
    }

    void append_row(std::span<const double> row_values) {
        values.insert(values.end(), row_values.begin(), row_values.end());
        ++rows;
    }
};

} // namespace flowsentry
