#include "dastgcn/gradcheck.hpp"

#include <cmath>

namespace dastgcn {

namespace {

void record(GradCheckReport& report, double analytic, double numeric, double abs_floor,
            const std::string& name, int64_t index) {
    report.checked += 1;
    const double diff = std::abs(analytic - numeric);
    if (diff <= abs_floor) return;
    const double rel = diff / std::max(std::abs(analytic), std::abs(numeric));
    if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = name;
        report.worst_index = index;
    }
}

}  // namespace

GradCheckReport grad_check(const std::function<double(const Tensor&)>& fn, const Tensor& point,
                           const Tensor& analytic_grad, double step, double abs_floor) {
    if (!point.same_shape(analytic_grad))
        throw ShapeMismatch("grad_check: gradient shape " + analytic_grad.shape_str() +
                            " does not match point " + point.shape_str());
    GradCheckReport report;
    Tensor probe = point;
    for (int64_t i = 0; i < point.numel(); ++i) {
        if (std::abs(point[i]) < 10.0 * step) {
            report.skipped_kinks += 1;
            continue;
        }
        const double saved = probe[i];
        probe[i] = saved + step;
        const double up = fn(probe);
        probe[i] = saved - step;
        const double down = fn(probe);
        probe[i] = saved;
        record(report, analytic_grad[i], (up - down) / (2.0 * step), abs_floor, "point", i);
    }
    return report;
}

GradCheckReport grad_check_params(const std::function<double()>& loss_fn, ParamStore& params,
                                  double step, double abs_floor) {
    GradCheckReport report;
    for (auto& [name, p] : params) {
        for (int64_t i = 0; i < p.value.numel(); ++i) {
            if (std::abs(p.value[i]) < 10.0 * step) {
                report.skipped_kinks += 1;
                continue;
            }
            const double saved = p.value[i];
            p.value[i] = saved + step;
            const double up = loss_fn();
            p.value[i] = saved - step;
            const double down = loss_fn();
            p.value[i] = saved;
            record(report, p.grad[i], (up - down) / (2.0 * step), abs_floor, name, i);
        }
    }
    return report;
}

}  // namespace dastgcn
