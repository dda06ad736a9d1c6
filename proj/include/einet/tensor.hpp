// Copyright 2026 EINet Authors
// Dense row-major double tensor used by the autodiff graph and DSP code.
//
// Licensed under the Apache License, Version 2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "einet/common.hpp"

namespace einet {

struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
    }
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != numel_of(shape))
            throw ContractError("Tensor: data size does not match shape");
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor row(std::vector<double> d) {
        int n = static_cast<int>(d.size());
        return Tensor({1, n}, std::move(d));
    }
    static Tensor randn(std::vector<int> s, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(s));
        for (double& x : t.data) x = rng.gaussian() * stddev;
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }
    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double x : data)
            if (!std::isfinite(x)) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (double x : data) m = std::max(m, std::abs(x));
        return m;
    }
};

}  // namespace einet
