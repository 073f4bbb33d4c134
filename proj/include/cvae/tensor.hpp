#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvae {

/// 64-byte-aligned allocator. Uniform buffer alignment keeps vectorized code
/// paths (loop peeling in particular) identical across allocations, which
/// makes results bitwise reproducible run to run.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::size_t alignment = 64;

    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(alignment)));
    }
    void deallocate(T* p, std::size_t) noexcept {
        ::operator delete(p, std::align_val_t(alignment));
    }
    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const { return true; }
    template <typename U>
    bool operator!=(const AlignedAllocator<U>&) const { return false; }
};

/// Dense row-major tensor of doubles. Shapes are small integer vectors,
/// e.g. {N, C, H, W} for image batches or {N, D} for latent batches.
class Tensor {
public:
    using Buffer = std::vector<double, AlignedAllocator<double>>;

    Tensor() = default;

    explicit Tensor(std::vector<int> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(std::vector<int> shape, const std::vector<double>& data)
        : shape_(std::move(shape)), data_(data.begin(), data.end()) {
        if (static_cast<int64_t>(data_.size()) != count(shape_))
            throw std::invalid_argument("Tensor: data size does not match shape");
    }

    static Tensor full(std::vector<int> shape, double v) {
        Tensor t(std::move(shape));
        t.fill(v);
        return t;
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    /// Value of a size-1 tensor.
    double item() const {
        if (size() != 1) throw std::logic_error("Tensor::item on non-scalar");
        return data_[0];
    }

    Tensor reshaped(std::vector<int> shape) const {
        if (count(shape) != size())
            throw std::invalid_argument("Tensor::reshaped: element count mismatch");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = data_;
        return t;
    }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (size_t i = 0; i < shape_.size(); ++i)
            os << (i ? "," : "") << shape_[i];
        os << ']';
        return os.str();
    }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    Buffer data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    a.shape_str() + " vs " + b.shape_str());
}

}  // namespace cvae
