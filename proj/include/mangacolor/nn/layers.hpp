#pragma once

#include <random>
#include <string>

#include "mangacolor/nn/ops.hpp"
#include "mangacolor/nn/tensor.hpp"

// Thin parameter-holding wrappers over the kernels in ops.hpp. Each layer
// keeps pointers into a ParamSet owned by the enclosing model; forward is
// const and backward accumulates into the parameters' grad buffers.
namespace mangacolor::nn {

enum class Mode { Train, Eval };

/// He-normal initialization source shared by all layers of one model.
using InitRng = std::mt19937_64;

struct Conv2d {
    Tensor* weight = nullptr;
    Tensor* bias = nullptr;
    int stride = 1;
    int pad = 0;

    static Conv2d create(ParamSet& params, const std::string& name, int in, int out, int kernel, int stride,
                         int pad, InitRng& rng);
    int out_channels() const { return weight->dim(0); }
    Shape output_shape(const Shape& x) const { return conv2d_output_shape(x, weight->shape(), stride, pad); }
    Tensor forward(const Tensor& x) const { return conv2d(x, *weight, *bias, stride, pad); }
    Tensor backward(const Tensor& x, const Tensor& gy, bool need_dx = true) const;
};

struct BatchNorm2d {
    Tensor* gamma = nullptr;
    Tensor* beta = nullptr;
    Tensor* running_mean = nullptr;
    Tensor* running_var = nullptr;

    static BatchNorm2d create(ParamSet& params, const std::string& name, int channels);
    Tensor forward(const Tensor& x, Mode mode, BatchNormCache* cache) const;
    Tensor backward(const BatchNormCache& cache, const Tensor& gy) const;
};

struct Linear {
    Tensor* weight = nullptr;
    Tensor* bias = nullptr;

    static Linear create(ParamSet& params, const std::string& name, int in, int out, InitRng& rng);
    int out_features() const { return weight->dim(0); }
    Tensor forward(const Tensor& x) const { return fully_connected(x, *weight, *bias); }
    Tensor backward(const Tensor& x, const Tensor& gy, bool need_dx = true) const;
};

/// conv -> optional batch norm -> optional ReLU, the repeating unit of every
/// tower in the models.
struct ConvBlock {
    struct Cache {
        Tensor input;
        BatchNormCache bn;
        Tensor output;
    };

    Conv2d conv;
    BatchNorm2d bn;
    bool use_bn = true;
    bool use_relu = true;

    static ConvBlock create(ParamSet& params, const std::string& name, int in, int out, int kernel, int stride,
                            int pad, InitRng& rng, bool use_bn = true, bool use_relu = true);
    Shape output_shape(const Shape& x) const { return conv.output_shape(x); }
    /// `cache` may be null when no backward pass will follow.
    Tensor forward(const Tensor& x, Mode mode, Cache* cache) const;
    Tensor backward(const Cache& cache, const Tensor& gy, bool need_dx = true) const;
};

}  // namespace mangacolor::nn
