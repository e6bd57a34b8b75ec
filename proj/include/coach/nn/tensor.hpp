#pragma once

#include "coach/errors.hpp"

#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace coach::nn {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Dense row-major tensor. Most operations view it as a matrix whose
/// column count is the last dimension.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(shape_numel(shape), fill) {}
    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != shape_numel(shape))
            throw ContractViolation("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                                    shape_str(shape));
    }

    [[nodiscard]] std::size_t size() const { return data.size(); }
    [[nodiscard]] std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
    [[nodiscard]] std::size_t rows() const { return cols() == 0 ? 0 : data.size() / cols(); }

    T& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
    T* row(std::size_t r) { return data.data() + r * cols(); }
    const T* row(std::size_t r) const { return data.data() + r * cols(); }

    template <typename U>
    [[nodiscard]] Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.assign(data.begin(), data.end());
        return out;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <typename T>
Tensor<T> matrix(std::size_t r, std::size_t c, T fill = T(0)) {
    return Tensor<T>({r, c}, fill);
}

}  // namespace coach::nn
