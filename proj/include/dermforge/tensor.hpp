#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dermforge/errors.hpp"
#include "dermforge/threading.hpp"

namespace dermforge {

// When enabled, numeric kernels verify their outputs are finite and throw
// StateError otherwise. Off by default; tests and the gradcheck command turn
// it on.
inline std::atomic<bool>& checked_mode_flag() {
    static std::atomic<bool> flag{false};
    return flag;
}
inline void set_checked_mode(bool on) { checked_mode_flag().store(on); }
inline bool checked_mode() { return checked_mode_flag().load(); }

inline std::string shape_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

// Dense row-major tensor. Image batches use NCHW layout throughout.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(check_count(shape_), T(0));
    }

    Tensor(std::vector<int> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (check_count(shape_) != data_.size())
            throw ShapeError("Tensor: data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_string(shape_));
    }

    static Tensor full(std::vector<int> shape, T value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int dim(size_t i) const { return shape_.at(i); }
    size_t rank() const { return shape_.size(); }
    size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](size_t i) { return data_[i]; }
    const T& operator[](size_t i) const { return data_[i]; }

    T& at2(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
    const T& at2(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }

    T& at4(int n, int c, int h, int w) {
        return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at4(int n, int c, int h, int w) const {
        return data_[((static_cast<size_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    Tensor reshape(std::vector<int> new_shape) const {
        if (check_count(new_shape) != data_.size())
            throw ShapeError("reshape: element count mismatch, " + shape_string(shape_) + " -> " +
                             shape_string(new_shape));
        Tensor out;
        out.shape_ = std::move(new_shape);
        out.data_ = data_;
        return out;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out = Tensor<U>(shape_);
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    static size_t check_count(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw ShapeError("Tensor: dimensions must be positive, got " + shape_string(shape));
            n *= static_cast<size_t>(d);
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

template <typename T>
inline void debug_check_finite(const Tensor<T>& t, const char* where) {
    if (!checked_mode()) return;
    for (size_t i = 0; i < t.size(); ++i) {
        if (!std::isfinite(static_cast<double>(t[i])))
            throw StateError(std::string(where) + ": non-finite element at flat index " + std::to_string(i));
    }
}

// C = A * B for row-major rank-2 tensors. Parallel over rows of A; each
// output element is accumulated in a fixed k-order, so results are
// bit-reproducible for any thread count.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: expects rank-2 operands, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dimensions differ, " + shape_string(a.shape()) + " x " +
                         shape_string(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor<T> c({m, n});
    const T* ap = a.data();
    const T* bp = b.data();
    T* cp = c.data();
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int i = 0; i < m; ++i) {
        T* crow = cp + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const T av = ap[static_cast<size_t>(i) * k + kk];
            if (av == T(0)) continue;
            const T* brow = bp + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    debug_check_finite(c, "matmul");
    return c;
}

// C = A^T * B with A (k,m), B (k,n). Same determinism scheme as matmul.
template <typename T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
        throw ShapeError("matmul_tn: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
    const int k = a.dim(0), m = a.dim(1), n = b.dim(1);
    Tensor<T> c({m, n});
    const T* ap = a.data();
    const T* bp = b.data();
    T* cp = c.data();
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int i = 0; i < m; ++i) {
        T* crow = cp + static_cast<size_t>(i) * n;
        for (int kk = 0; kk < k; ++kk) {
            const T av = ap[static_cast<size_t>(kk) * m + i];
            if (av == T(0)) continue;
            const T* brow = bp + static_cast<size_t>(kk) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    debug_check_finite(c, "matmul_tn");
    return c;
}

// C = A * B^T with A (m,k), B (n,k). Rows of both operands are contiguous.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(1))
        throw ShapeError("matmul_nt: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
    Tensor<T> c({m, n});
    const T* ap = a.data();
    const T* bp = b.data();
    T* cp = c.data();
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int i = 0; i < m; ++i) {
        const T* arow = ap + static_cast<size_t>(i) * k;
        T* crow = cp + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = bp + static_cast<size_t>(j) * k;
            T acc = T(0);
            for (int kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            crow[j] = acc;
        }
    }
    debug_check_finite(c, "matmul_nt");
    return c;
}

enum class ReduceMode { sum, mean, max };

// Reduce over the given axes (removed from the output shape). A full
// reduction yields a rank-0 tensor holding one element.
template <typename T>
Tensor<T> reduce(const Tensor<T>& t, std::vector<int> axes, ReduceMode mode) {
    const auto& shape = t.shape();
    std::vector<bool> reduced(shape.size(), false);
    for (int ax : axes) {
        if (ax < 0 || ax >= static_cast<int>(shape.size()))
            throw ShapeError("reduce: axis " + std::to_string(ax) + " invalid for " + shape_string(shape));
        reduced[ax] = true;
    }
    std::vector<int> out_shape;
    for (size_t i = 0; i < shape.size(); ++i)
        if (!reduced[i]) out_shape.push_back(shape[i]);

    size_t out_count = 1;
    for (int d : out_shape) out_count *= static_cast<size_t>(d);
    size_t reduce_count = t.size() / std::max<size_t>(out_count, 1);

    Tensor<T> out;
    out = out_shape.empty() ? Tensor<T>(std::vector<int>{}, std::vector<T>{T(0)}) : Tensor<T>(out_shape);
    if (mode == ReduceMode::max) out.fill(std::numeric_limits<T>::lowest());

    // Strides of the input, and the output stride each input axis maps to.
    std::vector<size_t> in_stride(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        in_stride[i] = in_stride[i + 1] * static_cast<size_t>(shape[i + 1]);
    std::vector<size_t> out_stride_for_axis(shape.size(), 0);
    size_t os = 1;
    for (int i = static_cast<int>(shape.size()) - 1; i >= 0; --i) {
        if (!reduced[i]) {
            out_stride_for_axis[i] = os;
            os *= static_cast<size_t>(shape[i]);
        }
    }

    for (size_t flat = 0; flat < t.size(); ++flat) {
        size_t rem = flat, out_idx = 0;
        for (size_t d = 0; d < shape.size(); ++d) {
            size_t coord = rem / in_stride[d];
            rem %= in_stride[d];
            if (!reduced[d]) out_idx += coord * out_stride_for_axis[d];
        }
        T v = t[flat];
        if (mode == ReduceMode::max)
            out[out_idx] = std::max(out[out_idx], v);
        else
            out[out_idx] += v;
    }
    if (mode == ReduceMode::mean) {
        for (size_t i = 0; i < out.size(); ++i) out[i] /= static_cast<T>(reduce_count);
    }
    debug_check_finite(out, "reduce");
    return out;
}

template <typename T>
Tensor<T> reduce_all(const Tensor<T>& t, ReduceMode mode) {
    std::vector<int> axes(t.rank());
    std::iota(axes.begin(), axes.end(), 0);
    return reduce(t, axes, mode);
}

}  // namespace dermforge
