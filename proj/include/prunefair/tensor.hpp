#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "prunefair/errors.hpp"

namespace prunefair {

/// Dense row-major tensor of doubles.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> values;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0)
        : shape(std::move(dims)), values(element_count(shape), fill) {}

    Tensor(std::vector<std::size_t> dims, std::vector<double> data)
        : shape(std::move(dims)), values(std::move(data)) {
        if (element_count(shape) != values.size())
            throw DimensionError("tensor shape " + shape_string(shape) + " does not match " +
                                 std::to_string(values.size()) + " values");
    }

    static std::size_t element_count(const std::vector<std::size_t>& dims) {
        if (dims.empty())
            return 0;
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
    }

    static std::string shape_string(const std::vector<std::size_t>& dims) {
        std::string s = "(";
        for (std::size_t i = 0; i < dims.size(); ++i) {
            if (i)
                s += ", ";
            s += std::to_string(dims[i]);
        }
        return s + ")";
    }

    std::size_t size() const noexcept { return values.size(); }
    bool empty() const noexcept { return values.empty(); }

    double& operator[](std::size_t i) noexcept { return values[i]; }
    double operator[](std::size_t i) const noexcept { return values[i]; }

    std::span<double> span() noexcept { return values; }
    std::span<const double> span() const noexcept { return values; }

    bool all_finite() const noexcept {
        for (double v : values)
            if (!std::isfinite(v))
                return false;
        return true;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace prunefair
