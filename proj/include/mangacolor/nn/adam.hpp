#pragma once

#include <map>
#include <string>
#include <vector>

#include "mangacolor/nn/tensor.hpp"

namespace mangacolor::nn {

struct AdamConfig {
    double alpha = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over the trainable entries of one ParamSet. Moments
/// are kept in double; a parameter without a gradient buffer counts as a
/// zero gradient.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    /// Throws InvalidArgument naming the first parameter whose gradient is
    /// not finite; parameters are left untouched in that case.
    void step(ParamSet& params);

    const AdamConfig& config() const { return config_; }
    long steps() const { return t_; }

private:
    struct Moments {
        std::vector<double> m, v;
    };
    AdamConfig config_;
    long t_ = 0;
    std::map<std::string, Moments> moments_;
};

}  // namespace mangacolor::nn
