#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vegn/error.hpp"

namespace vegn {

// Dense row-major matrix of 64-bit floats. Everything in the engine is rank-2:
// scalars are 1x1, column vectors n x 1, row vectors 1 x n.
class Tensor {
public:
    Tensor() = default;

    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
        : rows_(rows), cols_(cols), data_(std::move(values)) {
        if (data_.size() != rows_ * cols_) {
            throw Error(ErrorKind::dimension,
                        "tensor: " + std::to_string(data_.size()) + " values for shape " +
                            std::to_string(rows_) + "x" + std::to_string(cols_));
        }
    }

    static Tensor scalar(double v) { return Tensor(1, 1, std::vector<double>{v}); }

    static Tensor column(std::vector<double> values) {
        const std::size_t n = values.size();
        return Tensor(n, 1, std::move(values));
    }

    static Tensor row(std::vector<double> values) {
        const std::size_t n = values.size();
        return Tensor(1, n, std::move(values));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double item() const {
        if (size() != 1) {
            throw Error(ErrorKind::contract, "item() requires a scalar tensor, got " + shape_str());
        }
        return data_[0];
    }

    bool same_shape(const Tensor& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    std::string shape_str() const {
        return std::to_string(rows_) + "x" + std::to_string(cols_);
    }

    bool all_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    Tensor& operator+=(const Tensor& other) {
        if (!same_shape(other)) {
            throw Error(ErrorKind::dimension,
                        "accumulate: shape " + shape_str() + " vs " + other.shape_str());
        }
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.rows(), t.cols()); }

inline Tensor random_uniform(std::size_t rows, std::size_t cols, double lo, double hi,
                             std::mt19937_64& rng) {
    Tensor t(rows, cols);
    std::uniform_real_distribution<double> dist(lo, hi);
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

inline Tensor random_normal(std::size_t rows, std::size_t cols, double mean, double sd,
                            std::mt19937_64& rng) {
    Tensor t(rows, cols);
    std::normal_distribution<double> dist(mean, sd);
    for (auto& v : t.values()) v = dist(rng);
    return t;
}

// Plain value-level kernels shared by the tape ops and non-differentiable paths.

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw Error(ErrorKind::dimension,
                    "matmul: inner dimensions disagree: " + a.shape_str() + " vs " + b.shape_str());
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c(m, n);
    const double* ad = a.data();
    const double* bd = b.data();
    double* cd = c.data();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = ad + i * k;
        double* crow = cd + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = bd + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

inline Tensor transpose(const Tensor& a) {
    Tensor t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

inline double sigmoid_value(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace vegn
