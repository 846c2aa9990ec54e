#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dirl/errors.hpp"

namespace dirl {

// (batch, channels, height, width). Everything in this codebase is a 4-axis
// tensor; scalars are 1x1x1x1.
struct Shape {
    std::int64_t n = 0, c = 0, h = 0, w = 0;

    std::int64_t numel() const { return n * c * h * w; }
    bool operator==(const Shape&) const = default;

    std::string str() const {
        std::ostringstream os;
        os << "(" << n << "," << c << "," << h << "," << w << ")";
        return os.str();
    }
};

template <class T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s) : shape_(s), data_(static_cast<std::size_t>(s.numel()), T(0)) {
        if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0)
            throw ShapeError("negative dimension in " + s.str());
    }
    Tensor(Shape s, T fill) : Tensor(s) { std::fill(data_.begin(), data_.end(), fill); }
    Tensor(Shape s, std::vector<T> data) : shape_(s), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != s.numel())
            throw ShapeError("data size " + std::to_string(data_.size()) + " does not match " + s.str());
    }

    static Tensor scalar(T v) { return Tensor(Shape{1, 1, 1, 1}, std::vector<T>{v}); }

    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return shape_.numel(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
        return data_[static_cast<std::size_t>(index(n, c, h, w))];
    }
    const T& at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return data_[static_cast<std::size_t>(index(n, c, h, w))];
    }

    std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    bool empty() const { return data_.empty(); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    T sum() const { return std::accumulate(data_.begin(), data_.end(), T(0)); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out(shape_);
        for (std::int64_t i = 0; i < numel(); ++i) out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
        return out;
    }

private:
    Shape shape_{0, 0, 0, 0};
    std::vector<T> data_;
};

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": " + a.shape().str() + " vs " + b.shape().str());
}

}  // namespace dirl
