#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <vector>

namespace proxbo {

/// Dense row-major array of doubles with a small runtime shape.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
        : shape(std::move(s)), data(count(shape), fill) {}
    Tensor(std::initializer_list<std::size_t> s, double fill = 0.0)
        : Tensor(std::vector<std::size_t>(s), fill) {}

    static std::size_t count(const std::vector<std::size_t>& s) {
        return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
    }

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double& at(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

    std::span<double> row(std::size_t i) {
        const std::size_t w = size() / shape[0];
        return {data.data() + i * w, w};
    }
    std::span<const double> row(std::size_t i) const {
        const std::size_t w = size() / shape[0];
        return {data.data() + i * w, w};
    }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace proxbo
