#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "dermforge/rng.hpp"
#include "dermforge/tensor.hpp"
#include "dermforge/threading.hpp"

// Per-layer numeric kernels. Forward functions cache whatever the matching
// backward needs; all loops that run in parallel write disjoint outputs with
// fixed per-element accumulation order, keeping results bit-reproducible.

namespace dermforge {

enum class Activation { none, relu, softmax };
enum class PoolPadding { valid, same };

inline int conv_out_dim(int in, int kernel, int stride, int pad) {
    return (in + 2 * pad - kernel) / stride + 1;
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
    for (size_t i = 0; i < t.size(); ++i)
        if (t[i] < T(0)) t[i] = T(0);
}

// dy masked by the forward output: units that were clamped pass no gradient.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& y) {
    Tensor<T> dx(dy.shape());
    for (size_t i = 0; i < dy.size(); ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
    return dx;
}

// x (N,C,H,W) -> patches (N*OH*OW, C*k*k), zero-padded. Row r corresponds to
// output position (n, oh, ow) in row-major order.
template <typename T>
Tensor<T> im2col(const Tensor<T>& x, int kernel, int stride, int pad) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = conv_out_dim(h, kernel, stride, pad);
    const int ow = conv_out_dim(w, kernel, stride, pad);
    if (oh <= 0 || ow <= 0)
        throw ShapeError("im2col: kernel " + std::to_string(kernel) + " does not fit input " +
                         shape_string(x.shape()));
    const int patch = c * kernel * kernel;
    Tensor<T> cols({n * oh * ow, patch});
    const T* xp = x.data();
    T* cp = cols.data();
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int row = 0; row < n * oh * ow; ++row) {
        const int ow_i = row % ow;
        const int oh_i = (row / ow) % oh;
        const int n_i = row / (ow * oh);
        T* dst = cp + static_cast<size_t>(row) * patch;
        for (int ci = 0; ci < c; ++ci) {
            for (int ky = 0; ky < kernel; ++ky) {
                const int y = oh_i * stride + ky - pad;
                for (int kx = 0; kx < kernel; ++kx) {
                    const int xx = ow_i * stride + kx - pad;
                    T v = T(0);
                    if (y >= 0 && y < h && xx >= 0 && xx < w)
                        v = xp[((static_cast<size_t>(n_i) * c + ci) * h + y) * w + xx];
                    *dst++ = v;
                }
            }
        }
    }
    return cols;
}

// Scatter-add of patch gradients back onto the input. Parallel over batch
// entries only: every patch of one image is handled by the same thread.
template <typename T>
Tensor<T> col2im(const Tensor<T>& cols, const std::vector<int>& x_shape, int kernel, int stride, int pad) {
    const int n = x_shape[0], c = x_shape[1], h = x_shape[2], w = x_shape[3];
    const int oh = conv_out_dim(h, kernel, stride, pad);
    const int ow = conv_out_dim(w, kernel, stride, pad);
    const int patch = c * kernel * kernel;
    Tensor<T> dx(x_shape);
    const T* cp = cols.data();
    T* xp = dx.data();
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int n_i = 0; n_i < n; ++n_i) {
        for (int oh_i = 0; oh_i < oh; ++oh_i) {
            for (int ow_i = 0; ow_i < ow; ++ow_i) {
                const size_t row = (static_cast<size_t>(n_i) * oh + oh_i) * ow + ow_i;
                const T* src = cp + row * patch;
                for (int ci = 0; ci < c; ++ci) {
                    for (int ky = 0; ky < kernel; ++ky) {
                        const int y = oh_i * stride + ky - pad;
                        for (int kx = 0; kx < kernel; ++kx) {
                            const int xx = ow_i * stride + kx - pad;
                            if (y >= 0 && y < h && xx >= 0 && xx < w)
                                xp[((static_cast<size_t>(n_i) * c + ci) * h + y) * w + xx] += *src;
                            ++src;
                        }
                    }
                }
            }
        }
    }
    return dx;
}

// Cross-correlation (no kernel flip) with bias. w is (Cout,Cin,k,k), b (Cout).
// Activation is fused. When x_col_cache is given the im2col matrix is kept
// for the backward pass.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride, int pad,
                         Activation act = Activation::none, Tensor<T>* x_col_cache = nullptr) {
    if (x.rank() != 4 || w.rank() != 4)
        throw ShapeError("conv2d: expects 4-d input and weights");
    if (x.dim(1) != w.dim(1))
        throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) + " != weight channels " +
                         std::to_string(w.dim(1)));
    const int n = x.dim(0), cout = w.dim(0), kernel = w.dim(2);
    const int oh = conv_out_dim(x.dim(2), kernel, stride, pad);
    const int ow = conv_out_dim(x.dim(3), kernel, stride, pad);

    Tensor<T> cols = im2col(x, kernel, stride, pad);
    // (Cout,Cin,k,k) -> (Cin*k*k, Cout)
    const int patch = w.dim(1) * kernel * kernel;
    Tensor<T> wmat({patch, cout});
    for (int o = 0; o < cout; ++o)
        for (int p = 0; p < patch; ++p)
            wmat.at2(p, o) = w[static_cast<size_t>(o) * patch + p];

    Tensor<T> ymat = matmul(cols, wmat);  // (N*OH*OW, Cout)

    Tensor<T> y({n, cout, oh, ow});
    const T* yp = ymat.data();
    T* out = y.data();
    const T* bp = b.data();
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int n_i = 0; n_i < n; ++n_i) {
        for (int o = 0; o < cout; ++o) {
            const T bias = bp[o];
            for (int s = 0; s < oh * ow; ++s) {
                T v = yp[(static_cast<size_t>(n_i) * oh * ow + s) * cout + o] + bias;
                if (act == Activation::relu && v < T(0)) v = T(0);
                out[(static_cast<size_t>(n_i) * cout + o) * oh * ow + s] = v;
            }
        }
    }
    if (x_col_cache) *x_col_cache = std::move(cols);
    debug_check_finite(y, "conv2d_forward");
    return y;
}

template <typename T>
struct Conv2dGrads {
    Tensor<T> dx, dw, db;
};

// dy is the gradient at the conv output *after* the fused activation was
// already undone by the caller (i.e. pre-activation gradient).
template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& dy, const Tensor<T>& x_col, const std::vector<int>& x_shape,
                               const Tensor<T>& w, int stride, int pad, bool need_dx) {
    const int n = dy.dim(0), cout = dy.dim(1), oh = dy.dim(2), ow = dy.dim(3);
    const int kernel = w.dim(2);
    const int patch = w.dim(1) * kernel * kernel;

    // dy (N,Cout,OH,OW) -> (N*OH*OW, Cout), matching im2col row order.
    Tensor<T> dymat({n * oh * ow, cout});
    const T* dp = dy.data();
    T* dm = dymat.data();
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int n_i = 0; n_i < n; ++n_i)
        for (int o = 0; o < cout; ++o)
            for (int s = 0; s < oh * ow; ++s)
                dm[(static_cast<size_t>(n_i) * oh * ow + s) * cout + o] =
                    dp[(static_cast<size_t>(n_i) * cout + o) * oh * ow + s];

    Conv2dGrads<T> g;
    Tensor<T> dwmat = matmul_tn(x_col, dymat);  // (patch, Cout)
    g.dw = Tensor<T>(std::vector<int>{cout, w.dim(1), kernel, kernel});
    for (int o = 0; o < cout; ++o)
        for (int p = 0; p < patch; ++p)
            g.dw[static_cast<size_t>(o) * patch + p] = dwmat.at2(p, o);

    g.db = Tensor<T>(std::vector<int>{cout});
    for (int r = 0; r < n * oh * ow; ++r)
        for (int o = 0; o < cout; ++o) g.db[o] += dm[static_cast<size_t>(r) * cout + o];

    if (need_dx) {
        Tensor<T> wmat({patch, cout});
        for (int o = 0; o < cout; ++o)
            for (int p = 0; p < patch; ++p)
                wmat.at2(p, o) = w[static_cast<size_t>(o) * patch + p];
        Tensor<T> dcols = matmul_nt(dymat, wmat);  // (N*OH*OW, patch)
        g.dx = col2im(dcols, x_shape, kernel, stride, pad);
    }
    return g;
}

inline int pool_out_dim(int in, int pool, int stride, PoolPadding pad) {
    if (pad == PoolPadding::valid) return (in - pool) / stride + 1;
    return (in + stride - 1) / stride;  // ceil(in / stride)
}

// Max pooling; windows clip at the border in same-padding mode, which is
// equivalent to padding with -inf. argmax records the flat input index of
// each window winner for gradient routing.
template <typename T>
Tensor<T> maxpool_forward(const Tensor<T>& x, int pool, int stride, PoolPadding pad,
                          std::vector<int32_t>* argmax = nullptr) {
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int oh = pool_out_dim(h, pool, stride, pad);
    const int ow = pool_out_dim(w, pool, stride, pad);
    if (oh <= 0 || ow <= 0) throw ShapeError("maxpool: window does not fit input " + shape_string(x.shape()));
    // same-padding splits the overhang Keras-style: excess goes right/bottom.
    int pad_top = 0, pad_left = 0;
    if (pad == PoolPadding::same) {
        pad_top = std::max((oh - 1) * stride + pool - h, 0) / 2;
        pad_left = std::max((ow - 1) * stride + pool - w, 0) / 2;
    }
    Tensor<T> y({n, c, oh, ow});
    if (argmax) argmax->assign(y.size(), -1);
    const T* xp = x.data();
    T* yp = y.data();
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int nc = 0; nc < n * c; ++nc) {
        const T* plane = xp + static_cast<size_t>(nc) * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                T best = std::numeric_limits<T>::lowest();
                int32_t best_idx = -1;
                for (int ky = 0; ky < pool; ++ky) {
                    const int yy = oy * stride + ky - pad_top;
                    if (yy < 0 || yy >= h) continue;
                    for (int kx = 0; kx < pool; ++kx) {
                        const int xx = ox * stride + kx - pad_left;
                        if (xx < 0 || xx >= w) continue;
                        T v = plane[yy * w + xx];
                        if (v > best) {
                            best = v;
                            best_idx = static_cast<int32_t>(static_cast<size_t>(nc) * h * w + yy * w + xx);
                        }
                    }
                }
                const size_t out_idx = (static_cast<size_t>(nc) * oh + oy) * ow + ox;
                yp[out_idx] = best;
                if (argmax) (*argmax)[out_idx] = best_idx;
            }
        }
    }
    return y;
}

// Routes each upstream gradient element to its window winner. Serial scatter
// keeps overlapping-window accumulation order fixed.
template <typename T>
Tensor<T> maxpool_backward(const Tensor<T>& dy, const std::vector<int32_t>& argmax,
                           const std::vector<int>& x_shape) {
    Tensor<T> dx(x_shape);
    for (size_t i = 0; i < dy.size(); ++i) {
        if (argmax[i] >= 0) dx[argmax[i]] += dy[i];
    }
    return dx;
}

template <typename T>
struct BatchNormCache {
    Tensor<T> xhat;            // normalized input, needed for dgamma and dx
    std::vector<T> inv_std;    // per channel, 1/sqrt(var+eps)
    std::vector<T> batch_mean;
    std::vector<T> batch_var;
};

// Per-channel batch normalization over (N,H,W). Training mode normalizes with
// batch statistics (biased variance) and reports the updated moving averages
// through new_moving_*; the caller decides when to commit them. Inference
// mode uses the stored moving statistics.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                            const Tensor<T>& moving_mean, const Tensor<T>& moving_var, bool training,
                            T momentum, T eps, BatchNormCache<T>* cache = nullptr,
                            Tensor<T>* new_moving_mean = nullptr, Tensor<T>* new_moving_var = nullptr) {
    if (x.rank() != 4) throw ShapeError("batchnorm: expects NCHW input");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (gamma.dim(0) != c)
        throw ShapeError("batchnorm: channel mismatch, input has " + std::to_string(c) + ", params " +
                         std::to_string(gamma.dim(0)));
    const size_t plane = static_cast<size_t>(h) * w;
    const size_t per_channel = static_cast<size_t>(n) * plane;
    Tensor<T> y(x.shape());
    if (cache) {
        cache->xhat = Tensor<T>(x.shape());
        cache->inv_std.assign(c, T(0));
        cache->batch_mean.assign(c, T(0));
        cache->batch_var.assign(c, T(0));
    }
    if (training && new_moving_mean) *new_moving_mean = Tensor<T>(std::vector<int>{c});
    if (training && new_moving_var) *new_moving_var = Tensor<T>(std::vector<int>{c});

    const T* xp = x.data();
    T* yp = y.data();
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int ci = 0; ci < c; ++ci) {
        T mean, var;
        if (training) {
            // fixed (n, spatial) accumulation order per channel
            T sum = T(0);
            for (int n_i = 0; n_i < n; ++n_i) {
                const T* src = xp + (static_cast<size_t>(n_i) * c + ci) * plane;
                for (size_t s = 0; s < plane; ++s) sum += src[s];
            }
            mean = sum / static_cast<T>(per_channel);
            T sq = T(0);
            for (int n_i = 0; n_i < n; ++n_i) {
                const T* src = xp + (static_cast<size_t>(n_i) * c + ci) * plane;
                for (size_t s = 0; s < plane; ++s) {
                    const T d = src[s] - mean;
                    sq += d * d;
                }
            }
            var = sq / static_cast<T>(per_channel);
            if (new_moving_mean) (*new_moving_mean)[ci] = momentum * moving_mean[ci] + (T(1) - momentum) * mean;
            if (new_moving_var) (*new_moving_var)[ci] = momentum * moving_var[ci] + (T(1) - momentum) * var;
        } else {
            mean = moving_mean[ci];
            var = moving_var[ci];
        }
        const T inv_std = T(1) / std::sqrt(var + eps);
        const T g = gamma[ci], bta = beta[ci];
        for (int n_i = 0; n_i < n; ++n_i) {
            const size_t base = (static_cast<size_t>(n_i) * c + ci) * plane;
            for (size_t s = 0; s < plane; ++s) {
                const T xh = (xp[base + s] - mean) * inv_std;
                if (cache) cache->xhat[base + s] = xh;
                yp[base + s] = g * xh + bta;
            }
        }
        if (cache) {
            cache->inv_std[ci] = inv_std;
            cache->batch_mean[ci] = mean;
            cache->batch_var[ci] = var;
        }
    }
    debug_check_finite(y, "batchnorm_forward");
    return y;
}

template <typename T>
struct BatchNormGrads {
    Tensor<T> dx, dgamma, dbeta;
};

template <typename T>
BatchNormGrads<T> batchnorm_backward(const Tensor<T>& dy, const BatchNormCache<T>& cache,
                                     const Tensor<T>& gamma) {
    const int n = dy.dim(0), c = dy.dim(1), h = dy.dim(2), w = dy.dim(3);
    const size_t plane = static_cast<size_t>(h) * w;
    const T m = static_cast<T>(static_cast<size_t>(n) * plane);
    BatchNormGrads<T> g;
    g.dx = Tensor<T>(dy.shape());
    g.dgamma = Tensor<T>(std::vector<int>{c});
    g.dbeta = Tensor<T>(std::vector<int>{c});
    const T* dp = dy.data();
    const T* xh = cache.xhat.data();
    T* dxp = g.dx.data();
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int ci = 0; ci < c; ++ci) {
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (int n_i = 0; n_i < n; ++n_i) {
            const size_t base = (static_cast<size_t>(n_i) * c + ci) * plane;
            for (size_t s = 0; s < plane; ++s) {
                sum_dy += dp[base + s];
                sum_dy_xhat += dp[base + s] * xh[base + s];
            }
        }
        g.dgamma[ci] = sum_dy_xhat;
        g.dbeta[ci] = sum_dy;
        const T scale = gamma[ci] * cache.inv_std[ci];
        for (int n_i = 0; n_i < n; ++n_i) {
            const size_t base = (static_cast<size_t>(n_i) * c + ci) * plane;
            for (size_t s = 0; s < plane; ++s)
                dxp[base + s] = scale * (dp[base + s] - sum_dy / m - xh[base + s] * sum_dy_xhat / m);
        }
    }
    return g;
}

// Inverted dropout: survivors are scaled by 1/(1-rate) so inference is the
// identity. mask holds the applied factor per element (0 or the scale).
template <typename T>
Tensor<T> dropout_forward(const Tensor<T>& x, double rate, Rng* rng, bool training,
                          Tensor<T>* mask = nullptr) {
    if (rate < 0.0 || rate >= 1.0) throw ArgumentError("dropout: rate must be in [0,1)");
    if (!training || rate == 0.0) {
        if (mask && training) *mask = Tensor<T>::full(x.shape(), T(1));
        return x;
    }
    if (!rng) throw StateError("dropout: training mode with rate > 0 requires an rng");
    const T scale = static_cast<T>(1.0 / (1.0 - rate));
    Tensor<T> y(x.shape());
    Tensor<T> m(x.shape());
    for (size_t i = 0; i < x.size(); ++i) {
        const bool keep = rng->next_double() >= rate;
        m[i] = keep ? scale : T(0);
        y[i] = x[i] * m[i];
    }
    if (mask) *mask = std::move(m);
    return y;
}

template <typename T>
Tensor<T> dropout_backward(const Tensor<T>& dy, const Tensor<T>& mask) {
    Tensor<T> dx(dy.shape());
    for (size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * mask[i];
    return dx;
}

// y = x*w + b with optional fused activation. w is (in,out), b (out).
template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                        Activation act = Activation::none) {
    if (x.rank() != 2 || x.dim(1) != w.dim(0))
        throw ShapeError("dense: input " + shape_string(x.shape()) + " incompatible with weights " +
                         shape_string(w.shape()));
    Tensor<T> y = matmul(x, w);
    const int n = y.dim(0), units = y.dim(1);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < units; ++j) y.at2(i, j) += b[j];
    if (act == Activation::relu) relu_inplace(y);
    debug_check_finite(y, "dense_forward");
    return y;
}

template <typename T>
struct DenseGrads {
    Tensor<T> dx, dw, db;
};

// dy is the pre-activation gradient; x is the layer input.
template <typename T>
DenseGrads<T> dense_backward(const Tensor<T>& dy, const Tensor<T>& x, const Tensor<T>& w) {
    DenseGrads<T> g;
    g.dw = matmul_tn(x, dy);
    g.dx = matmul_nt(dy, w);
    g.db = Tensor<T>(std::vector<int>{dy.dim(1)});
    for (int i = 0; i < dy.dim(0); ++i)
        for (int j = 0; j < dy.dim(1); ++j) g.db[j] += dy.at2(i, j);
    return g;
}

// Row-wise softmax with max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax: expects rank-2 logits");
    Tensor<T> y(logits.shape());
    const int n = logits.dim(0), k = logits.dim(1);
    for (int i = 0; i < n; ++i) {
        T mx = logits.at2(i, 0);
        for (int j = 1; j < k; ++j) mx = std::max(mx, logits.at2(i, j));
        T sum = T(0);
        for (int j = 0; j < k; ++j) {
            const T e = std::exp(logits.at2(i, j) - mx);
            y.at2(i, j) = e;
            sum += e;
        }
        for (int j = 0; j < k; ++j) y.at2(i, j) /= sum;
    }
    debug_check_finite(y, "softmax");
    return y;
}

// Jacobian-vector product of softmax: dx_i = y_i * (dy_i - sum_k dy_k y_k).
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& dy, const Tensor<T>& y) {
    Tensor<T> dx(dy.shape());
    const int n = dy.dim(0), k = dy.dim(1);
    for (int i = 0; i < n; ++i) {
        T dot = T(0);
        for (int j = 0; j < k; ++j) dot += dy.at2(i, j) * y.at2(i, j);
        for (int j = 0; j < k; ++j) dx.at2(i, j) = y.at2(i, j) * (dy.at2(i, j) - dot);
    }
    return dx;
}

}  // namespace dermforge
