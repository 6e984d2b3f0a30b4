#include "mangacolor/nn/layers.hpp"

#include <cmath>

namespace mangacolor::nn {

namespace {

void he_normal(Tensor& t, int fan_in, InitRng& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (float& v : t.data()) v = static_cast<float>(dist(rng));
}

}  // namespace

Conv2d Conv2d::create(ParamSet& params, const std::string& name, int in, int out, int kernel, int stride,
                      int pad, InitRng& rng) {
    Conv2d c;
    c.weight = &params.add(name + ".weight", {out, in, kernel, kernel});
    c.bias = &params.add(name + ".bias", {out});
    c.stride = stride;
    c.pad = pad;
    he_normal(*c.weight, in * kernel * kernel, rng);
    return c;
}

Tensor Conv2d::backward(const Tensor& x, const Tensor& gy, bool need_dx) const {
    return conv2d_backward(x, *weight, gy, stride, pad, weight->grad(), bias->grad(), need_dx);
}

BatchNorm2d BatchNorm2d::create(ParamSet& params, const std::string& name, int channels) {
    BatchNorm2d b;
    b.gamma = &params.add(name + ".gamma", {channels}, true, 1.0f);
    b.beta = &params.add(name + ".beta", {channels}, true, 0.0f);
    b.running_mean = &params.add(name + ".running_mean", {channels}, false, 0.0f);
    b.running_var = &params.add(name + ".running_var", {channels}, false, 1.0f);
    return b;
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode, BatchNormCache* cache) const {
    if (mode == Mode::Train) return batch_norm_train(x, *gamma, *beta, *running_mean, *running_var, cache);
    return batch_norm_eval(x, *gamma, *beta, *running_mean, *running_var, cache);
}

Tensor BatchNorm2d::backward(const BatchNormCache& cache, const Tensor& gy) const {
    return batch_norm_backward(cache, *gamma, gy, gamma->grad(), beta->grad());
}

Linear Linear::create(ParamSet& params, const std::string& name, int in, int out, InitRng& rng) {
    Linear l;
    l.weight = &params.add(name + ".weight", {out, in});
    l.bias = &params.add(name + ".bias", {out});
    he_normal(*l.weight, in, rng);
    return l;
}

Tensor Linear::backward(const Tensor& x, const Tensor& gy, bool need_dx) const {
    return fully_connected_backward(x, *weight, gy, weight->grad(), bias->grad(), need_dx);
}

ConvBlock ConvBlock::create(ParamSet& params, const std::string& name, int in, int out, int kernel, int stride,
                            int pad, InitRng& rng, bool use_bn, bool use_relu) {
    ConvBlock b;
    b.conv = Conv2d::create(params, name + ".conv", in, out, kernel, stride, pad, rng);
    if (use_bn) b.bn = BatchNorm2d::create(params, name + ".bn", out);
    b.use_bn = use_bn;
    b.use_relu = use_relu;
    return b;
}

Tensor ConvBlock::forward(const Tensor& x, Mode mode, Cache* cache) const {
    Tensor y = conv.forward(x);
    if (use_bn) y = bn.forward(y, mode, cache ? &cache->bn : nullptr);
    if (use_relu) y = relu(y);
    if (cache) {
        cache->input = x;
        cache->output = y;
    }
    return y;
}

Tensor ConvBlock::backward(const Cache& cache, const Tensor& gy, bool need_dx) const {
    Tensor g = use_relu ? relu_backward(cache.output, gy) : gy;
    if (use_bn) g = bn.backward(cache.bn, g);
    return conv.backward(cache.input, g, need_dx);
}

}  // namespace mangacolor::nn
