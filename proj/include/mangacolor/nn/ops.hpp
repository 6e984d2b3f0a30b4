#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mangacolor/nn/tensor.hpp"

// Forward/backward kernels on NCHW tensors. Backward functions accumulate
// parameter gradients into the spans they are given (`+=`) and return the
// gradient with respect to the input.
namespace mangacolor::nn {

Shape conv2d_output_shape(const Shape& x, const Shape& weight, int stride, int pad);

/// Cross-correlation. x: [N,C,H,W], weight: [O,C,k,k], bias: [O].
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride, int pad);
/// Returns dx (empty when `need_dx` is false).
Tensor conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& gy, int stride, int pad,
                       std::span<float> grad_weight, std::span<float> grad_bias, bool need_dx = true);

struct BatchNormCache {
    Tensor xhat;                  // normalized input
    std::vector<double> inv_std;  // per channel
    bool batch_stats = true;      // false: running statistics were used
};

inline constexpr float kBatchNormMomentum = 0.9f;
inline constexpr float kBatchNormEps = 1e-5f;

/// Normalizes with batch statistics and folds them into the running ones:
/// running = momentum * running + (1 - momentum) * batch (unbiased variance).
Tensor batch_norm_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                        Tensor& running_var, BatchNormCache* cache);
Tensor batch_norm_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Tensor& running_mean,
                       const Tensor& running_var, BatchNormCache* cache);
Tensor batch_norm_backward(const BatchNormCache& cache, const Tensor& gamma, const Tensor& gy,
                           std::span<float> grad_gamma, std::span<float> grad_beta);

Tensor relu(const Tensor& x);

/// While alive, every relu call on this thread folds its activation pattern
/// into a hash. Two evaluations with equal hashes ran on the same linear
/// piece, which is what a finite-difference check needs to know.
class ActivationPatternProbe {
public:
    ActivationPatternProbe();
    ~ActivationPatternProbe();
    ActivationPatternProbe(const ActivationPatternProbe&) = delete;
    ActivationPatternProbe& operator=(const ActivationPatternProbe&) = delete;

    std::uint64_t hash() const { return hash_; }
    void reset() { hash_ = kSeed; }

private:
    friend Tensor relu(const Tensor& x);
    static constexpr std::uint64_t kSeed = 1469598103934665603ull;
    std::uint64_t hash_ = kSeed;
    ActivationPatternProbe* previous_;
};
/// Uses the forward output: gradient passes where y > 0.
Tensor relu_backward(const Tensor& y, const Tensor& gy);
Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& gy);

Tensor upsample2x_nearest(const Tensor& x);
Tensor upsample2x_nearest_backward(const Tensor& gy);
/// Half-pixel-centered bilinear doubling with clamped borders.
Tensor upsample2x_bilinear(const Tensor& x);
Tensor upsample2x_bilinear_backward(const Tensor& gy);

/// x: [N,in], weight: [out,in], bias: [out].
Tensor fully_connected(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor fully_connected_backward(const Tensor& x, const Tensor& weight, const Tensor& gy,
                                std::span<float> grad_weight, std::span<float> grad_bias,
                                bool need_dx = true);

Tensor concat_channels(const std::vector<const Tensor*>& parts);
std::vector<Tensor> concat_channels_backward(const Tensor& gy, const std::vector<int>& channels);

/// [N,C] -> [N,C,H,W], every position a copy of the vector.
Tensor broadcast_spatial(const Tensor& v, int height, int width);
Tensor broadcast_spatial_backward(const Tensor& gy);

Tensor global_avg_pool(const Tensor& x);
Tensor global_avg_pool_backward(const Tensor& gy, int height, int width);

// Losses return the mean and, when `grad` is non-null, write d(loss)/d(input).

double mse_loss(const Tensor& pred, const Tensor& target, Tensor* grad);
/// Sigmoid cross entropy of logits [N] or [N,1] against a constant label.
double sigmoid_cross_entropy(const Tensor& logits, float label, Tensor* grad);
/// Softmax cross entropy of logits [N,K] against class indices.
double softmax_cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad);

}  // namespace mangacolor::nn
