#include "mangacolor/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>

#include "mangacolor/error.hpp"
#include "mangacolor/nn/ops.hpp"

namespace mangacolor::nn {

GradCheckResult grad_check(const std::function<Tensor()>& forward,
                           const std::function<void(const Tensor&)>& backward,
                           const std::vector<GradCheckTarget>& targets, const GradCheckOptions& options) {
    std::mt19937_64 rng(options.seed);
    for (const auto& t : targets) {
        if (!t.tensor) throw InvalidArgument("grad_check target '" + t.name + "' is null");
        t.tensor->zero_grad();
    }

    ActivationPatternProbe probe;
    const Tensor y0 = forward();
    const std::uint64_t base_pattern = probe.hash();
    Tensor r(y0.shape());
    std::normal_distribution<double> normal(0.0, 1.0);
    for (float& v : r.data()) v = static_cast<float>(normal(rng));
    auto loss = [&r](const Tensor& y) {
        if (y.size() != r.size()) throw ShapeError("grad_check: forward output changed shape");
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += static_cast<double>(r[i]) * y[i];
        return s;
    };
    backward(r);

    GradCheckResult result;
    for (const auto& t : targets) {
        Tensor& x = *t.tensor;
        const std::vector<float> analytic(x.grad().begin(), x.grad().end());
        double scale = 0.0;
        for (float g : analytic) scale = std::max(scale, static_cast<double>(std::abs(g)));
        const double floor = std::max(scale * options.scale_floor, 1e-12);

        std::vector<std::size_t> coords(x.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        std::shuffle(coords.begin(), coords.end(), rng);
        const std::size_t max_tries = 10 * options.samples_per_target;

        std::size_t checked = 0, tries = 0;
        for (std::size_t i : coords) {
            if (checked == options.samples_per_target || tries++ == max_tries) break;
            const float orig = x[i];
            const double h = options.eps * std::max(1.0, std::abs(static_cast<double>(orig)));
            // Central difference at step h / 2^k, using the steps the float
            // coordinate actually took. nullopt when either side moved onto
            // another ReLU activation pattern.
            auto central = [&](int k) -> std::optional<double> {
                double at[2], step[2];
                for (int j = 0; j < 2; ++j) {
                    const float v = static_cast<float>(orig + (j ? 1 : -1) * std::ldexp(h, -k));
                    x[i] = v;
                    step[j] = static_cast<double>(v) - orig;
                    probe.reset();
                    at[j] = loss(forward());
                    if (probe.hash() != base_pattern) {
                        x[i] = orig;
                        return std::nullopt;
                    }
                }
                x[i] = orig;
                return (at[1] - at[0]) / (step[1] - step[0]);
            };
            // Richardson extrapolation over the widest pair of steps h / 2^k,
            // h / 2^(k+1) that both stay on the unperturbed pattern.
            std::optional<double> numeric, wide = central(0);
            for (int k = 1; k <= options.max_halvings && !numeric; ++k) {
                const auto narrow = central(k);
                if (wide && narrow) numeric = (4.0 * *narrow - *wide) / 3.0;
                wide = narrow;
            }
            if (!numeric) {
                ++result.skipped;
                continue;
            }
            const double a = analytic[i];
            const double rel = std::abs(a - *numeric) / std::max({std::abs(a), std::abs(*numeric), floor});
            ++checked;
            if (result.worst.empty() || rel > result.max_rel_error) {
                result.max_rel_error = rel;
                result.worst = t.name + "[" + std::to_string(i) + "]";
            }
        }
        result.checked += checked;
    }
    return result;
}

}  // namespace mangacolor::nn
