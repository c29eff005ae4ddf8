#pragma once

#include <functional>
#include <string>

#include "dastgcn/params.hpp"
#include "dastgcn/tensor.hpp"

namespace dastgcn {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    int64_t worst_index = -1;
    int64_t checked = 0;
    int64_t skipped_kinks = 0;

    bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// Central-difference check of `analytic_grad` against `fn` around `point`.
/// Coordinates with |value| < 10*step are treated as potential activation
/// kinks and skipped (reported in skipped_kinks). The error metric is
/// |a - n| / max(|a|, |n|) with an absolute floor: differences below
/// `abs_floor` always pass.
GradCheckReport grad_check(const std::function<double(const Tensor&)>& fn, const Tensor& point,
                           const Tensor& analytic_grad, double step = 1e-4,
                           double abs_floor = 1e-6);

/// Same check applied to every entry of every parameter in the store.
/// `loss_fn` must evaluate the loss from the current parameter values without
/// touching gradient slots; `grads` must already hold the analytic gradients.
GradCheckReport grad_check_params(const std::function<double()>& loss_fn, ParamStore& params,
                                  double step = 1e-4, double abs_floor = 1e-6);

}  // namespace dastgcn
