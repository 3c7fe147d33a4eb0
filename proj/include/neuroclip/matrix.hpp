#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "neuroclip/errors.hpp"

namespace neuroclip {

// Dense row-major [rows x cols] matrix of doubles. Channel-major signals
// throughout: row = channel, col = time sample.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), v_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) return Matrix();
        Matrix m(rows.size(), rows[0].size());
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != m.cols_)
                throw ShapeError("Matrix::from_rows: ragged rows");
            for (std::size_t c = 0; c < m.cols_; ++c) m(r, c) = rows[r][c];
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return v_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return v_[r * cols_ + c]; }

    double* row_ptr(std::size_t r) { return v_.data() + r * cols_; }
    const double* row_ptr(std::size_t r) const { return v_.data() + r * cols_; }

    std::vector<double>& flat() { return v_; }
    const std::vector<double>& flat() const { return v_; }

    bool operator==(const Matrix& o) const {
        return rows_ == o.rows_ && cols_ == o.cols_ && v_ == o.v_;
    }

    std::string shape_str() const {
        return "[" + std::to_string(rows_) + " x " + std::to_string(cols_) + "]";
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> v_;
};

}  // namespace neuroclip
