#pragma once

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <vector>

#include "pointtrack/common.hpp"

namespace pointtrack {

/// Dense row-major n-d array. Data is shared on copy; use clone() for a deep copy.
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        alloc(numel_of(shape_));
        std::fill(data_.get(), data_.get() + size_, T(0));
    }

    Tensor(std::vector<int64_t> shape, std::vector<T> values) : shape_(std::move(shape)) {
        PTK_CHECK_SHAPE(static_cast<int64_t>(values.size()) == numel_of(shape_),
                        "tensor data size ", values.size(), " does not match shape");
        alloc(static_cast<int64_t>(values.size()));
        std::copy(values.begin(), values.end(), data_.get());
    }

    /// Allocation without the zero fill; caller promises to write every element.
    static Tensor uninit(std::vector<int64_t> shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.alloc(numel_of(t.shape_));
        return t;
    }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, T value) {
        Tensor t = uninit(std::move(shape));
        std::fill(t.data_.get(), t.data_.get() + t.size_, value);
        return t;
    }

    static Tensor scalar(T value) { return Tensor({1}, {value}); }

    static int64_t numel_of(const std::vector<int64_t>& shape) {
        int64_t n = 1;
        for (int64_t d : shape) {
            PTK_CHECK_SHAPE(d >= 0, "negative dimension in shape");
            n *= d;
        }
        return n;
    }

    bool defined() const { return static_cast<bool>(data_); }
    int64_t numel() const { return size_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    const std::vector<int64_t>& shape() const { return shape_; }

    int64_t dim(int i) const {
        if (i < 0) i += ndim();
        PTK_CHECK_SHAPE(i >= 0 && i < ndim(), "dim index ", i, " out of range");
        return shape_[static_cast<size_t>(i)];
    }

    T* data() { return data_.get(); }
    const T* data() const { return data_.get(); }

    T& operator[](int64_t i) { return data_.get()[i]; }
    const T& operator[](int64_t i) const { return data_.get()[i]; }

    template <typename... Ix>
    T& at(Ix... ix) {
        return data_.get()[offset_of(ix...)];
    }
    template <typename... Ix>
    const T& at(Ix... ix) const {
        return data_.get()[offset_of(ix...)];
    }

    /// Shares data; only the shape changes.
    Tensor reshape(std::vector<int64_t> new_shape) const {
        PTK_CHECK_SHAPE(numel_of(new_shape) == numel(), "reshape numel mismatch");
        Tensor t;
        t.shape_ = std::move(new_shape);
        t.data_ = data_;
        t.size_ = size_;
        return t;
    }

    Tensor clone() const {
        Tensor t = uninit(shape_);
        std::copy(data_.get(), data_.get() + size_, t.data_.get());
        return t;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out = Tensor<U>::uninit(shape_);
        for (int64_t i = 0; i < size_; ++i) out[i] = static_cast<U>(data_.get()[i]);
        return out;
    }

    void fill(T value) { std::fill(data_.get(), data_.get() + size_, value); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (int64_t i = 0; i < size_; ++i)
            if (!std::isfinite(static_cast<double>(data_.get()[i]))) return false;
        return true;
    }

    T max_abs() const {
        T m = T(0);
        for (int64_t i = 0; i < size_; ++i) m = std::max(m, std::abs(data_.get()[i]));
        return m;
    }

  private:
    template <typename... Ix>
    int64_t offset_of(Ix... ix) const {
        const int64_t idx[] = {static_cast<int64_t>(ix)...};
        const int n = sizeof...(Ix);
        PTK_CHECK_SHAPE(n == ndim(), "index arity ", n, " vs ndim ", ndim());
        int64_t off = 0;
        for (int i = 0; i < n; ++i) off = off * shape_[static_cast<size_t>(i)] + idx[i];
        return off;
    }

    std::vector<int64_t> shape_;
    std::shared_ptr<std::vector<T>> data_;
};

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace pointtrack
