#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace tailor::nn {

// Dense row-major tensor of doubles. Rank is dynamic; the layer kernels in
// this project only ever use rank 2 (batch, features) and rank 4
// (batch, channels, h, w).
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel(shape) != static_cast<std::int64_t>(data.size()))
            throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static std::int64_t numel(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("Tensor: dims must be positive");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        auto n = numel(s);
        return Tensor(std::move(s), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    }

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    double& operator()(int i) { return data[static_cast<std::size_t>(i)]; }
    double operator()(int i) const { return data[static_cast<std::size_t>(i)]; }

    double& operator()(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    double operator()(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

    double& operator()(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }
    double operator()(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x];
    }

    double& operator()(int b, int c, int y, int x) {
        return data[((static_cast<std::size_t>(b) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }
    double operator()(int b, int c, int y, int x) const {
        return data[((static_cast<std::size_t>(b) * shape[1] + c) * shape[2] + y) * shape[3] + x];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + ")";
    }
};

inline void axpy(double a, const Tensor& x, Tensor& y) {
    for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] += a * x.data[i];
}

}  // namespace tailor::nn
