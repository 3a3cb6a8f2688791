// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <new>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace fad {

/// 64-byte-aligned storage. Keeping every buffer identically aligned pins the
/// SIMD kernel paths inside Eigen, which is what makes repeated runs
/// bit-identical at -O3.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
    }
    void deallocate(T* p, size_t) noexcept { ::operator delete(p, kAlign); }

    // resize() leaves trivial scalars default-initialized; buffers that are
    // written before being read skip a full zeroing pass this way.
    template <typename U>
    void construct(U* p) noexcept {
        ::new (static_cast<void*>(p)) U;
    }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const {
        return true;
    }
};

template <typename T>
using AlignedVec = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major tensor of scalars. Images and activations use NCHW order.
template <typename S>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(count(shape_), S(0));
    }

    Tensor(std::initializer_list<int> shape) : Tensor(std::vector<int>(shape)) {}

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

    /// Allocation without the zero fill; every element must be written before
    /// it is read. Reserved for hot paths that fully overwrite the buffer.
    static Tensor uninitialized(std::vector<int> shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_.resize(count(t.shape_));
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }

    S& operator[](size_t i) { return data_[i]; }
    const S& operator[](size_t i) const { return data_[i]; }

    S& at4(int a, int b, int c, int d) {
        return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    const S& at4(int a, int b, int c, int d) const {
        return data_[((static_cast<size_t>(a) * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
    }
    S& at2(int a, int b) { return data_[static_cast<size_t>(a) * shape_[1] + b]; }
    const S& at2(int a, int b) const { return data_[static_cast<size_t>(a) * shape_[1] + b]; }

    void fill(S v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(S(0)); }

    void reshape(std::vector<int> shape) {
        if (count(shape) != data_.size())
            throw std::invalid_argument("tensor reshape changes element count");
        shape_ = std::move(shape);
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Converts element type (float <-> double), preserving shape.
    template <typename T>
    Tensor<T> cast() const {
        Tensor<T> out(shape_);
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<T>(data_[i]);
        return out;
    }

    Tensor& operator+=(const Tensor& other) {
        require_same_shape(other, "+=");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
        return *this;
    }

    Tensor& operator-=(const Tensor& other) {
        require_same_shape(other, "-=");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
        return *this;
    }

    Tensor& operator*=(S v) {
        for (auto& x : data_) x *= v;
        return *this;
    }

    void add_scaled(const Tensor& other, S scale) {
        require_same_shape(other, "add_scaled");
        for (size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
    }

private:
    static size_t count(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw std::invalid_argument("negative tensor dimension");
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    void require_same_shape(const Tensor& other, const char* op) const {
        if (!same_shape(other))
            throw std::invalid_argument(std::string("tensor shape mismatch in ") + op);
    }

    std::vector<int> shape_;
    AlignedVec<S> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

/// Named float32 tensor, the unit of checkpoint serialization.
struct TensorRecord {
    std::string name;
    TensorF value;
};

/// Named view over a parameter and its gradient inside a model.
template <typename S>
struct ParamRef {
    std::string name;
    Tensor<S>* value = nullptr;
    Tensor<S>* grad = nullptr;
};

template <typename S>
std::string shape_string(const Tensor<S>& t) {
    std::string s = "(";
    for (int i = 0; i < t.ndim(); ++i) {
        if (i) s += ",";
        s += std::to_string(t.shape()[static_cast<size_t>(i)]);
    }
    return s + ")";
}

}  // namespace fad
