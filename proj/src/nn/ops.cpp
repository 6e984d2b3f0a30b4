#include "mangacolor/nn/ops.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <string>

#include "mangacolor/error.hpp"

namespace mangacolor::nn {

namespace {

void require_rank(const Tensor& t, int rank, const char* what) {
    if (t.rank() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
    }
}

struct ConvGeometry {
    int n, c, h, w, o, k, ho, wo, stride, pad;
    int col_rows() const { return c * k * k; }
    int col_cols() const { return ho * wo; }
};

ConvGeometry conv_geometry(const Shape& x, const Shape& weight, int stride, int pad) {
    if (x.size() != 4 || weight.size() != 4) throw ShapeError("conv2d expects 4-d input and weight");
    if (weight[1] != x[1]) {
        throw ShapeError("conv2d channel mismatch: input " + shape_string(x) + ", weight " + shape_string(weight));
    }
    if (weight[2] != weight[3]) throw ShapeError("conv2d expects square kernels");
    if (stride < 1 || pad < 0) throw InvalidArgument("conv2d: bad stride or padding");
    ConvGeometry g{x[0], x[1], x[2], x[3], weight[0], weight[2], 0, 0, stride, pad};
    g.ho = (g.h + 2 * pad - g.k) / stride + 1;
    g.wo = (g.w + 2 * pad - g.k) / stride + 1;
    if (g.ho < 1 || g.wo < 1) throw ShapeError("conv2d output would be empty for input " + shape_string(x));
    return g;
}

bool is_pointwise(const ConvGeometry& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

// Reductions in double over eight interleaved lanes, combined in a fixed
// order: vectorizable and still bit-reproducible.
double sum_of(const float* p, std::size_t n) {
    double acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int k = 0; k < 8; ++k) acc[k] += p[i + k];
    }
    for (; i < n; ++i) acc[i % 8] += p[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

double dot_of(const float* a, const float* b, std::size_t n) {
    double acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int k = 0; k < 8; ++k) acc[k] += static_cast<double>(a[i + k]) * b[i + k];
    }
    for (; i < n; ++i) acc[i % 8] += static_cast<double>(a[i]) * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

double squared_deviation_sum(const float* p, std::size_t n, double mean) {
    double acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (int k = 0; k < 8; ++k) {
            const double d = p[i + k] - mean;
            acc[k] += d * d;
        }
    }
    for (; i < n; ++i) {
        const double d = p[i] - mean;
        acc[i % 8] += d * d;
    }
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// Output columns [lo, hi) whose input column ox*stride - pad + kj is inside [0, w).
void valid_range(const ConvGeometry& g, int kj, int& lo, int& hi) {
    const int off = kj - g.pad;
    lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
    hi = g.w - 1 - off < 0 ? 0 : std::min(g.wo, (g.w - 1 - off) / g.stride + 1);
    lo = std::min(lo, hi);
}

void im2col(const float* x, const ConvGeometry& g, float* col) {
    const int cols = g.col_cols();
    for (int c = 0; c < g.c; ++c) {
        const float* xc = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ki = 0; ki < g.k; ++ki) {
            for (int kj = 0; kj < g.k; ++kj) {
                float* row = col + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * cols;
                int lo, hi;
                valid_range(g, kj, lo, hi);
                const int off = kj - g.pad;
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    float* out = row + static_cast<std::size_t>(oy) * g.wo;
                    if (iy < 0 || iy >= g.h) {
                        std::fill(out, out + g.wo, 0.0f);
                        continue;
                    }
                    const float* xr = xc + static_cast<std::size_t>(iy) * g.w + off;
                    std::fill(out, out + lo, 0.0f);
                    if (g.stride == 1) {
                        std::copy(xr + lo, xr + hi, out + lo);
                    } else {
                        for (int ox = lo; ox < hi; ++ox) out[ox] = xr[ox * g.stride];
                    }
                    std::fill(out + hi, out + g.wo, 0.0f);
                }
            }
        }
    }
}

void col2im(const float* col, const ConvGeometry& g, float* dx) {
    const int cols = g.col_cols();
    for (int c = 0; c < g.c; ++c) {
        float* xc = dx + static_cast<std::size_t>(c) * g.h * g.w;
        for (int ki = 0; ki < g.k; ++ki) {
            for (int kj = 0; kj < g.k; ++kj) {
                const float* row = col + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * cols;
                int lo, hi;
                valid_range(g, kj, lo, hi);
                const int off = kj - g.pad;
                for (int oy = 0; oy < g.ho; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    if (iy < 0 || iy >= g.h) continue;
                    float* xr = xc + static_cast<std::size_t>(iy) * g.w + off;
                    const float* in = row + static_cast<std::size_t>(oy) * g.wo;
                    for (int ox = lo; ox < hi; ++ox) xr[ox * g.stride] += in[ox];
                }
            }
        }
    }
}

}  // namespace

Shape conv2d_output_shape(const Shape& x, const Shape& weight, int stride, int pad) {
    const auto g = conv_geometry(x, weight, stride, pad);
    return {g.n, g.o, g.ho, g.wo};
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad) {
    const auto g = conv_geometry(x.shape(), weight.shape(), stride, pad);
    if (bias.size() != static_cast<std::size_t>(g.o)) throw ShapeError("conv2d bias length mismatch");
    Tensor y({g.n, g.o, g.ho, g.wo});
    const int kdim = g.col_rows();
    const int cols = g.col_cols();
    std::vector<float> col(is_pointwise(g) ? 0 : static_cast<std::size_t>(kdim) * cols);
    for (int n = 0; n < g.n; ++n) {
        const float* xn = x.ptr() + static_cast<std::size_t>(n) * g.c * g.h * g.w;
        float* yn = y.ptr() + static_cast<std::size_t>(n) * g.o * cols;
        for (int o = 0; o < g.o; ++o) std::fill(yn + static_cast<std::size_t>(o) * cols, yn + static_cast<std::size_t>(o + 1) * cols, bias[o]);
        const float* src = xn;
        if (!is_pointwise(g)) {
            im2col(xn, g, col.data());
            src = col.data();
        }
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, g.o, cols, kdim, 1.0f, weight.ptr(), kdim, src,
                    cols, 1.0f, yn, cols);
    }
    return y;
}

Tensor conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& gy, int stride, int pad,
                       std::span<float> grad_weight, std::span<float> grad_bias, bool need_dx) {
    const auto g = conv_geometry(x.shape(), weight.shape(), stride, pad);
    if (gy.shape() != Shape{g.n, g.o, g.ho, g.wo}) throw ShapeError("conv2d_backward: gradient shape mismatch");
    if (grad_weight.size() != weight.size() || grad_bias.size() != static_cast<std::size_t>(g.o)) {
        throw ShapeError("conv2d_backward: gradient buffer size mismatch");
    }
    const int kdim = g.col_rows();
    const int cols = g.col_cols();
    Tensor dx;
    if (need_dx) dx = Tensor(x.shape());
    std::vector<float> col(is_pointwise(g) ? 0 : static_cast<std::size_t>(kdim) * cols);
    std::vector<float> gcol(need_dx && !is_pointwise(g) ? static_cast<std::size_t>(kdim) * cols : 0);
    for (int n = 0; n < g.n; ++n) {
        const float* xn = x.ptr() + static_cast<std::size_t>(n) * g.c * g.h * g.w;
        const float* gyn = gy.ptr() + static_cast<std::size_t>(n) * g.o * cols;
        for (int o = 0; o < g.o; ++o) {
            grad_bias[o] += static_cast<float>(sum_of(gyn + static_cast<std::size_t>(o) * cols, cols));
        }
        const float* src = xn;
        if (!is_pointwise(g)) {
            im2col(xn, g, col.data());
            src = col.data();
        }
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, g.o, kdim, cols, 1.0f, gyn, cols, src, cols, 1.0f,
                    grad_weight.data(), kdim);
        if (need_dx) {
            float* dxn = dx.ptr() + static_cast<std::size_t>(n) * g.c * g.h * g.w;
            if (is_pointwise(g)) {
                cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kdim, cols, g.o, 1.0f, weight.ptr(), kdim,
                            gyn, cols, 0.0f, dxn, cols);
            } else {
                cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kdim, cols, g.o, 1.0f, weight.ptr(), kdim,
                            gyn, cols, 0.0f, gcol.data(), cols);
                col2im(gcol.data(), g, dxn);
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------

namespace {

void check_bn_params(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    require_rank(x, 4, "batch_norm");
    const auto c = static_cast<std::size_t>(x.dim(1));
    if (gamma.size() != c || beta.size() != c) {
        throw ShapeError("batch_norm: parameter length does not match " + std::to_string(c) + " channels");
    }
}

Tensor bn_apply(const Tensor& x, const Tensor& gamma, const Tensor& beta, const std::vector<double>& mean,
                const std::vector<double>& inv_std, BatchNormCache* cache) {
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Tensor y(x.shape());
    if (cache) cache->xhat = Tensor(x.shape());
    for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * hw;
            const float* xp = x.ptr() + base;
            float* yp = y.ptr() + base;
            float* hp = cache ? cache->xhat.ptr() + base : nullptr;
            const double m = mean[ch], inv = inv_std[ch];
            const float gm = gamma[ch], bt = beta[ch];
            for (std::size_t i = 0; i < hw; ++i) {
                const float xh = static_cast<float>((xp[i] - m) * inv);
                yp[i] = gm * xh + bt;
                if (hp) hp[i] = xh;
            }
        }
    }
    if (cache) cache->inv_std = inv_std;
    return y;
}

}  // namespace

Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                        Tensor& running_var, BatchNormCache* cache) {
    check_bn_params(x, gamma, beta);
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    const double count = static_cast<double>(n) * hw;
    std::vector<double> mean(c, 0.0), var(c, 0.0), inv_std(c);
    for (int ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int b = 0; b < n; ++b) s += sum_of(x.ptr() + (static_cast<std::size_t>(b) * c + ch) * hw, hw);
        mean[ch] = s / count;
        double v = 0.0;
        for (int b = 0; b < n; ++b) {
            v += squared_deviation_sum(x.ptr() + (static_cast<std::size_t>(b) * c + ch) * hw, hw, mean[ch]);
        }
        var[ch] = v / count;
        inv_std[ch] = 1.0 / std::sqrt(var[ch] + kBatchNormEps);
        const double unbiased = count > 1 ? var[ch] * count / (count - 1) : var[ch];
        running_mean[ch] = static_cast<float>(kBatchNormMomentum * running_mean[ch] + (1.0 - kBatchNormMomentum) * mean[ch]);
        running_var[ch] = static_cast<float>(kBatchNormMomentum * running_var[ch] + (1.0 - kBatchNormMomentum) * unbiased);
    }
    Tensor y = bn_apply(x, gamma, beta, mean, inv_std, cache);
    if (cache) cache->batch_stats = true;
    return y;
}

Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                       const Tensor& running_var, BatchNormCache* cache) {
    check_bn_params(x, gamma, beta);
    const int c = x.dim(1);
    std::vector<double> mean(c), inv_std(c);
    for (int ch = 0; ch < c; ++ch) {
        mean[ch] = running_mean[ch];
        inv_std[ch] = 1.0 / std::sqrt(static_cast<double>(running_var[ch]) + kBatchNormEps);
    }
    Tensor y = bn_apply(x, gamma, beta, mean, inv_std, cache);
    if (cache) cache->batch_stats = false;
    return y;
}

Tensor batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& gy,
                           std::span<float> grad_gamma, std::span<float> grad_beta) {
    require_same_shape(cache.xhat, gy, "batch_norm_backward");
    const int n = gy.dim(0), c = gy.dim(1);
    const std::size_t hw = static_cast<std::size_t>(gy.dim(2)) * gy.dim(3);
    const double count = static_cast<double>(n) * hw;
    Tensor dx(gy.shape());
    for (int ch = 0; ch < c; ++ch) {
        double sum_g = 0.0, sum_gx = 0.0;
        for (int b = 0; b < n; ++b) {
            const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * hw;
            sum_g += sum_of(gy.ptr() + base, hw);
            sum_gx += dot_of(gy.ptr() + base, cache.xhat.ptr() + base, hw);
        }
        grad_gamma[ch] += static_cast<float>(sum_gx);
        grad_beta[ch] += static_cast<float>(sum_g);
        const double scale = gamma[ch] * cache.inv_std[ch];
        const double mean_g = sum_g / count, mean_gx = sum_gx / count;
        for (int b = 0; b < n; ++b) {
            const std::size_t base = (static_cast<std::size_t>(b) * c + ch) * hw;
            const float* gp = gy.ptr() + base;
            const float* hp = cache.xhat.ptr() + base;
            float* dp = dx.ptr() + base;
            if (cache.batch_stats) {
                for (std::size_t i = 0; i < hw; ++i) dp[i] = static_cast<float>(scale * (gp[i] - mean_g - hp[i] * mean_gx));
            } else {
                for (std::size_t i = 0; i < hw; ++i) dp[i] = static_cast<float>(scale * gp[i]);
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------

namespace {
thread_local ActivationPatternProbe* active_probe = nullptr;
}

ActivationPatternProbe::ActivationPatternProbe() : previous_(active_probe) { active_probe = this; }

ActivationPatternProbe::~ActivationPatternProbe() { active_probe = previous_; }

Tensor relu(const Tensor& x) {
    Tensor y(x.shape());
    const float* xp = x.ptr();
    float* yp = y.ptr();
    for (std::size_t i = 0; i < x.size(); ++i) yp[i] = xp[i] > 0.0f ? xp[i] : 0.0f;
    if (ActivationPatternProbe* probe = active_probe) {
        std::uint64_t h = probe->hash_;
        for (std::size_t i = 0; i < x.size(); ++i) {
            h ^= xp[i] > 0.0f ? 0x9eu : 0x3bu;
            h *= 1099511628211ull;
        }
        probe->hash_ = h;
    }
    return y;
}

Tensor relu_backward(const Tensor& y, const Tensor& gy) {
    require_same_shape(y, gy, "relu_backward");
    Tensor dx(y.shape());
    const float* yp = y.ptr();
    const float* gp = gy.ptr();
    float* dp = dx.ptr();
    for (std::size_t i = 0; i < y.size(); ++i) dp[i] = yp[i] > 0.0f ? gp[i] : 0.0f;
    return dx;
}

Tensor sigmoid(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x[i]))));
    return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& gy) {
    require_same_shape(y, gy, "sigmoid_backward");
    Tensor dx(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) dx[i] = gy[i] * y[i] * (1.0f - y[i]);
    return dx;
}

// ---------------------------------------------------------------------------

Tensor upsample2x_nearest(const Tensor& x) {
    require_rank(x, 4, "upsample2x_nearest");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({n, c, 2 * h, 2 * w});
    for (int p = 0; p < n * c; ++p) {
        const float* src = x.ptr() + static_cast<std::size_t>(p) * h * w;
        float* dst = y.ptr() + static_cast<std::size_t>(p) * 4 * h * w;
        for (int oy = 0; oy < 2 * h; ++oy) {
            for (int ox = 0; ox < 2 * w; ++ox) dst[static_cast<std::size_t>(oy) * 2 * w + ox] = src[(oy / 2) * w + ox / 2];
        }
    }
    return y;
}

Tensor upsample2x_nearest_backward(const Tensor& gy) {
    require_rank(gy, 4, "upsample2x_nearest_backward");
    const int n = gy.dim(0), c = gy.dim(1), h = gy.dim(2) / 2, w = gy.dim(3) / 2;
    Tensor dx({n, c, h, w});
    for (int p = 0; p < n * c; ++p) {
        const float* src = gy.ptr() + static_cast<std::size_t>(p) * 4 * h * w;
        float* dst = dx.ptr() + static_cast<std::size_t>(p) * h * w;
        for (int oy = 0; oy < 2 * h; ++oy) {
            for (int ox = 0; ox < 2 * w; ++ox) dst[(oy / 2) * w + ox / 2] += src[static_cast<std::size_t>(oy) * 2 * w + ox];
        }
    }
    return dx;
}

namespace {

// Output index d of a doubled axis samples source position d/2 - 1/4:
// even d mixes (d/2 - 1, d/2) with weights (1/4, 3/4), odd d mixes
// (d/2, d/2 + 1) with (3/4, 1/4). Indices clamp at the borders.
struct BilinearTaps {
    int i0, i1;
    float w0, w1;
};

BilinearTaps bilinear_taps(int d, int in) {
    const int i = d / 2;
    if (d % 2 == 0) return {std::max(i - 1, 0), i, 0.25f, 0.75f};
    return {i, std::min(i + 1, in - 1), 0.75f, 0.25f};
}

}  // namespace

Tensor upsample2x_bilinear(const Tensor& x) {
    require_rank(x, 4, "upsample2x_bilinear");
    const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({n, c, 2 * h, 2 * w});
    std::vector<float> rows(static_cast<std::size_t>(h) * 2 * w);
    for (int p = 0; p < n * c; ++p) {
        const float* src = x.ptr() + static_cast<std::size_t>(p) * h * w;
        float* dst = y.ptr() + static_cast<std::size_t>(p) * 4 * h * w;
        for (int r = 0; r < h; ++r) {
            for (int ox = 0; ox < 2 * w; ++ox) {
                const auto t = bilinear_taps(ox, w);
                rows[static_cast<std::size_t>(r) * 2 * w + ox] = t.w0 * src[r * w + t.i0] + t.w1 * src[r * w + t.i1];
            }
        }
        for (int oy = 0; oy < 2 * h; ++oy) {
            const auto t = bilinear_taps(oy, h);
            for (int ox = 0; ox < 2 * w; ++ox) {
                dst[static_cast<std::size_t>(oy) * 2 * w + ox] =
                    t.w0 * rows[static_cast<std::size_t>(t.i0) * 2 * w + ox] + t.w1 * rows[static_cast<std::size_t>(t.i1) * 2 * w + ox];
            }
        }
    }
    return y;
}

Tensor upsample2x_bilinear_backward(const Tensor& gy) {
    require_rank(gy, 4, "upsample2x_bilinear_backward");
    const int n = gy.dim(0), c = gy.dim(1), h = gy.dim(2) / 2, w = gy.dim(3) / 2;
    Tensor dx({n, c, h, w});
    std::vector<float> rows(static_cast<std::size_t>(h) * 2 * w);
    for (int p = 0; p < n * c; ++p) {
        const float* src = gy.ptr() + static_cast<std::size_t>(p) * 4 * h * w;
        float* dst = dx.ptr() + static_cast<std::size_t>(p) * h * w;
        std::fill(rows.begin(), rows.end(), 0.0f);
        for (int oy = 0; oy < 2 * h; ++oy) {
            const auto t = bilinear_taps(oy, h);
            for (int ox = 0; ox < 2 * w; ++ox) {
                const float g = src[static_cast<std::size_t>(oy) * 2 * w + ox];
                rows[static_cast<std::size_t>(t.i0) * 2 * w + ox] += t.w0 * g;
                rows[static_cast<std::size_t>(t.i1) * 2 * w + ox] += t.w1 * g;
            }
        }
        for (int r = 0; r < h; ++r) {
            for (int ox = 0; ox < 2 * w; ++ox) {
                const auto t = bilinear_taps(ox, w);
                const float g = rows[static_cast<std::size_t>(r) * 2 * w + ox];
                dst[r * w + t.i0] += t.w0 * g;
                dst[r * w + t.i1] += t.w1 * g;
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------------------

Tensor fully_connected(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(x, 2, "fully_connected");
    require_rank(weight, 2, "fully_connected weight");
    const int n = x.dim(0), in = x.dim(1), out = weight.dim(0);
    if (weight.dim(1) != in || bias.size() != static_cast<std::size_t>(out)) {
        throw ShapeError("fully_connected: input " + shape_string(x.shape()) + " vs weight " +
                         shape_string(weight.shape()));
    }
    Tensor y({n, out});
    for (int b = 0; b < n; ++b) std::copy(bias.data().begin(), bias.data().end(), y.ptr() + static_cast<std::size_t>(b) * out);
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, n, out, in, 1.0f, x.ptr(), in, weight.ptr(), in, 1.0f,
                y.ptr(), out);
    return y;
}

Tensor fully_connected_backward(const Tensor& x, const Tensor& weight, const Tensor& gy,
                                std::span<float> grad_weight, std::span<float> grad_bias, bool need_dx) {
    const int n = x.dim(0), in = x.dim(1), out = weight.dim(0);
    if (gy.shape() != Shape{n, out}) throw ShapeError("fully_connected_backward: gradient shape mismatch");
    for (int o = 0; o < out; ++o) {
        double s = 0.0;
        for (int b = 0; b < n; ++b) s += gy[static_cast<std::size_t>(b) * out + o];
        grad_bias[o] += static_cast<float>(s);
    }
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, out, in, n, 1.0f, gy.ptr(), out, x.ptr(), in, 1.0f,
                grad_weight.data(), in);
    Tensor dx;
    if (need_dx) {
        dx = Tensor({n, in});
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, n, in, out, 1.0f, gy.ptr(), out, weight.ptr(), in,
                    0.0f, dx.ptr(), in);
    }
    return dx;
}

// ---------------------------------------------------------------------------

Tensor concat_channels(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) throw InvalidArgument("concat_channels: nothing to concatenate");
    const Tensor& first = *parts.front();
    require_rank(first, 4, "concat_channels");
    int channels = 0;
    for (const Tensor* t : parts) {
        require_rank(*t, 4, "concat_channels");
        if (t->dim(0) != first.dim(0) || t->dim(2) != first.dim(2) || t->dim(3) != first.dim(3)) {
            throw ShapeError("concat_channels: " + shape_string(t->shape()) + " does not match " +
                             shape_string(first.shape()));
        }
        channels += t->dim(1);
    }
    const int n = first.dim(0);
    const std::size_t hw = static_cast<std::size_t>(first.dim(2)) * first.dim(3);
    Tensor y({n, channels, first.dim(2), first.dim(3)});
    for (int b = 0; b < n; ++b) {
        float* dst = y.ptr() + static_cast<std::size_t>(b) * channels * hw;
        for (const Tensor* t : parts) {
            const std::size_t len = static_cast<std::size_t>(t->dim(1)) * hw;
            const float* src = t->ptr() + static_cast<std::size_t>(b) * len;
            dst = std::copy(src, src + len, dst);
        }
    }
    return y;
}

std::vector<Tensor> concat_channels_backward(const Tensor& gy, const std::vector<int>& channels) {
    require_rank(gy, 4, "concat_channels_backward");
    const int n = gy.dim(0);
    const std::size_t hw = static_cast<std::size_t>(gy.dim(2)) * gy.dim(3);
    int total = 0;
    for (int c : channels) total += c;
    if (total != gy.dim(1)) throw ShapeError("concat_channels_backward: channel split does not add up");
    std::vector<Tensor> out;
    for (int c : channels) out.emplace_back(Shape{n, c, gy.dim(2), gy.dim(3)});
    for (int b = 0; b < n; ++b) {
        const float* src = gy.ptr() + static_cast<std::size_t>(b) * total * hw;
        for (std::size_t k = 0; k < channels.size(); ++k) {
            const std::size_t len = static_cast<std::size_t>(channels[k]) * hw;
            std::copy(src, src + len, out[k].ptr() + static_cast<std::size_t>(b) * len);
            src += len;
        }
    }
    return out;
}

Tensor broadcast_spatial(const Tensor& v, int height, int width) {
    require_rank(v, 2, "broadcast_spatial");
    const int n = v.dim(0), c = v.dim(1);
    const std::size_t hw = static_cast<std::size_t>(height) * width;
    Tensor y({n, c, height, width});
    for (int p = 0; p < n * c; ++p) std::fill(y.ptr() + p * hw, y.ptr() + (p + 1) * hw, v[p]);
    return y;
}

Tensor broadcast_spatial_backward(const Tensor& gy) {
    require_rank(gy, 4, "broadcast_spatial_backward");
    const int n = gy.dim(0), c = gy.dim(1);
    const std::size_t hw = static_cast<std::size_t>(gy.dim(2)) * gy.dim(3);
    Tensor dv({n, c});
    for (int p = 0; p < n * c; ++p) {
        dv[p] = static_cast<float>(sum_of(gy.ptr() + p * hw, hw));
    }
    return dv;
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank(x, 4, "global_avg_pool");
    const int n = x.dim(0), c = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
    Tensor y({n, c});
    for (int p = 0; p < n * c; ++p) {
        y[p] = static_cast<float>(sum_of(x.ptr() + p * hw, hw) / static_cast<double>(hw));
    }
    return y;
}

Tensor global_avg_pool_backward(const Tensor& gy, int height, int width) {
    require_rank(gy, 2, "global_avg_pool_backward");
    const int n = gy.dim(0), c = gy.dim(1);
    const std::size_t hw = static_cast<std::size_t>(height) * width;
    Tensor dx({n, c, height, width});
    for (int p = 0; p < n * c; ++p) {
        const float g = static_cast<float>(gy[p] / static_cast<double>(hw));
        std::fill(dx.ptr() + p * hw, dx.ptr() + (p + 1) * hw, g);
    }
    return dx;
}

// ---------------------------------------------------------------------------

double mse_loss(const Tensor& pred, const Tensor& target, Tensor* grad) {
    require_same_shape(pred, target, "mse_loss");
    const double n = static_cast<double>(pred.size());
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - target[i];
        s += d * d;
    }
    if (grad) {
        *grad = Tensor(pred.shape());
        for (std::size_t i = 0; i < pred.size(); ++i) {
            (*grad)[i] = static_cast<float>(2.0 * (static_cast<double>(pred[i]) - target[i]) / n);
        }
    }
    return s / n;
}

double sigmoid_cross_entropy(const Tensor& logits, float label, Tensor* grad) {
    const double n = static_cast<double>(logits.size());
    if (logits.empty()) throw ShapeError("sigmoid_cross_entropy: no logits");
    double s = 0.0;
    if (grad) *grad = Tensor(logits.shape());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double z = logits[i];
        s += std::max(z, 0.0) - z * label + std::log1p(std::exp(-std::abs(z)));
        if (grad) (*grad)[i] = static_cast<float>((1.0 / (1.0 + std::exp(-z)) - label) / n);
    }
    return s / n;
}

double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad) {
    require_rank(logits, 2, "softmax_cross_entropy");
    const int n = logits.dim(0), k = logits.dim(1);
    if (labels.size() != static_cast<std::size_t>(n)) throw ShapeError("softmax_cross_entropy: label count mismatch");
    if (grad) *grad = Tensor(logits.shape());
    double total = 0.0;
    for (int b = 0; b < n; ++b) {
        const int label = labels[b];
        if (label < 0 || label >= k) throw InvalidArgument("class label " + std::to_string(label) + " out of range");
        const float* z = logits.ptr() + static_cast<std::size_t>(b) * k;
        const double zmax = *std::max_element(z, z + k);
        double sum = 0.0;
        for (int j = 0; j < k; ++j) sum += std::exp(z[j] - zmax);
        const double lse = zmax + std::log(sum);
        total += lse - z[label];
        if (grad) {
            for (int j = 0; j < k; ++j) {
                const double p = std::exp(z[j] - lse);
                (*grad)[static_cast<std::size_t>(b) * k + j] = static_cast<float>((p - (j == label ? 1.0 : 0.0)) / n);
            }
        }
    }
    return total / n;
}

}  // namespace mangacolor::nn
