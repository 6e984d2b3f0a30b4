#include "mangacolor/nn/adam.hpp"

#include <cmath>
#include <utility>

#include "mangacolor/error.hpp"

namespace mangacolor::nn {

void Adam::step(ParamSet& params) {
    for (const auto& [name, e] : params.entries()) {
        if (!e.trainable || !e.tensor.has_grad()) continue;
        for (float g : e.tensor.grad()) {
            if (!std::isfinite(g)) throw InvalidArgument("non-finite gradient in parameter '" + name + "'");
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (auto& [name, e] : params.entries()) {
        if (!e.trainable) continue;
        Tensor& p = e.tensor;
        auto& mom = moments_[name];
        if (mom.m.size() != p.size()) {
            mom.m.assign(p.size(), 0.0);
            mom.v.assign(p.size(), 0.0);
        }
        const bool has = p.has_grad();
        std::span<const float> grad = std::as_const(p).grad();
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double g = has ? grad[i] : 0.0;
            mom.m[i] = config_.beta1 * mom.m[i] + (1.0 - config_.beta1) * g;
            mom.v[i] = config_.beta2 * mom.v[i] + (1.0 - config_.beta2) * g * g;
            const double mhat = mom.m[i] / c1;
            const double vhat = mom.v[i] / c2;
            p[i] = static_cast<float>(p[i] - config_.alpha * mhat / (std::sqrt(vhat) + config_.eps));
        }
    }
}

}  // namespace mangacolor::nn
