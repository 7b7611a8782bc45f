#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "mirrorfill/errors.hpp"

namespace mirrorfill {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape)
{
    std::size_t n = 1;
    for (int d : shape) {
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major array. Images and feature maps are C x H x W; conv
/// weights are Cout x Cin x K x K; scalars have shape {1}.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill)
    {
        for (int d : shape_) {
            if (d < 1) {
                throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape_));
            }
        }
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data))
    {
        if (data_.size() != shape_numel(shape_)) {
            throw DimensionError("data size does not match shape " + shape_str(shape_));
        }
    }

    static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

    const Shape& shape() const { return shape_; }
    int dim(std::size_t i) const { return shape_.at(i); }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    // CHW accessors; valid only for rank-3 tensors.
    int channels() const { return shape_[0]; }
    int height() const { return shape_[1]; }
    int width() const { return shape_[2]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> span() { return data_; }
    std::span<const T> span() const { return data_; }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(int c, int i, int j) { return data_[(static_cast<std::size_t>(c) * shape_[1] + i) * shape_[2] + j]; }
    const T& at(int c, int i, int j) const
    {
        return data_[(static_cast<std::size_t>(c) * shape_[1] + i) * shape_[2] + j];
    }

    T item() const
    {
        if (data_.size() != 1) {
            throw DimensionError("item() on tensor of shape " + shape_str(shape_));
        }
        return data_[0];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    template <typename U>
    Tensor<U> cast() const
    {
        std::vector<U> out(data_.begin(), data_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    Tensor reshaped(Shape shape) const
    {
        if (shape_numel(shape) != data_.size()) {
            throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        }
        return Tensor(std::move(shape), data_);
    }

    bool all_finite() const
    {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    T min_value() const { return *std::min_element(data_.begin(), data_.end()); }
    T max_value() const { return *std::max_element(data_.begin(), data_.end()); }

    double sum() const { return std::accumulate(data_.begin(), data_.end(), 0.0); }
    double mean() const { return sum() / static_cast<double>(data_.size()); }

    friend bool operator==(const Tensor& a, const Tensor& b) { return a.shape_ == b.shape_ && a.data_ == b.data_; }

private:
    Shape shape_;
    std::vector<T> data_;
};

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what)
{
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
    }
    return m;
}

/// Elementwise map into a new tensor.
template <typename T, typename F>
Tensor<T> map(const Tensor<T>& a, F&& f)
{
    Tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = f(a[i]);
    }
    return out;
}

}  // namespace mirrorfill
