#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mangacolor/nn/tensor.hpp"

namespace mangacolor::nn {

/// A tensor whose gradient is checked. The analytic gradient is read from
/// `tensor->grad()` after the backward callback ran, so callbacks that
/// produce an input gradient must store it there.
struct GradCheckTarget {
    std::string name;
    Tensor* tensor = nullptr;
};

struct GradCheckOptions {
    /// Widest step, relative to max(1, |x|). Central differences at two
    /// successive halvings of it are combined by Richardson extrapolation.
    double eps = 1e-1;
    /// How often the step may be halved to get off a ReLU kink.
    int max_halvings = 2;
    /// Coordinates checked per target; smaller tensors are checked exhaustively.
    std::size_t samples_per_target = 32;
    std::uint64_t seed = 1;
    /// Denominator floor of the relative error, as a fraction of the largest
    /// analytic gradient magnitude in the target.
    double scale_floor = 1e-2;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;  // "target[index]" of the maximum
    std::size_t checked = 0;
    std::size_t skipped = 0;  // coordinates with no kink-free pair of steps
};

/// Central finite differences against analytic gradients for the scalar
/// L = sum_i r_i y_i, where y = forward() and r is a fixed random projection.
/// Steps that change any ReLU activation pattern cross a kink and are not
/// used; the step is halved until two nested steps stay on the unperturbed
/// pattern. A coordinate where that never happens is skipped and another one
/// is drawn.
/// `backward(r)` must accumulate dL/d(target) into every target's grad buffer.
GradCheckResult grad_check(const std::function<Tensor()>& forward,
                           const std::function<void(const Tensor&)>& backward,
                           const std::vector<GradCheckTarget>& targets, const GradCheckOptions& options = {});

}  // namespace mangacolor::nn
