#include "dastgcn/metrics.hpp"

#include <cmath>

#include <json.hpp>

namespace dastgcn {

namespace {

void check_pair(const Tensor& pred, const Tensor& truth) {
    if (!pred.same_shape(truth))
        throw ShapeMismatch("metric inputs differ: " + pred.shape_str() + " vs " +
                            truth.shape_str());
    if (pred.rank() != 3 || pred.dim(2) != 3)
        throw ShapeMismatch("metric inputs must be node x t_pred x 3");
}

double step_error(const Tensor& pred, const Tensor& truth, int64_t node, int64_t step,
                  ErrorDims dims) {
    if (dims == ErrorDims::Vertical)
        return std::abs(pred.at(node, step, 2) - truth.at(node, step, 2));
    const double dx = pred.at(node, step, 0) - truth.at(node, step, 0);
    const double dy = pred.at(node, step, 1) - truth.at(node, step, 1);
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace

double ade(const Tensor& pred, const Tensor& truth, ErrorDims dims) {
    check_pair(pred, truth);
    const int64_t n = pred.dim(0), t = pred.dim(1);
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i)
        for (int64_t s = 0; s < t; ++s) sum += step_error(pred, truth, i, s, dims);
    return sum / static_cast<double>(n * t);
}

double fde(const Tensor& pred, const Tensor& truth, ErrorDims dims) {
    check_pair(pred, truth);
    const int64_t n = pred.dim(0), t = pred.dim(1);
    double sum = 0.0;
    for (int64_t i = 0; i < n; ++i) sum += step_error(pred, truth, i, t - 1, dims);
    return sum / static_cast<double>(n);
}

std::string MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["ade_horizontal"] = ade_horizontal;
    j["ade_vertical"] = ade_vertical;
    j["fde_horizontal"] = fde_horizontal;
    j["fde_vertical"] = fde_vertical;
    j["scene_count"] = scene_count;
    j["node_count"] = node_count;
    j["protocol"] = protocol;
    return j.dump(1, '\t');
}

void MetricsAccumulator::add_scene(const Tensor& pred, const Tensor& truth) {
    check_pair(pred, truth);
    const int64_t n = pred.dim(0), t = pred.dim(1);
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t s = 0; s < t; ++s) {
            ade_h_sum_ += step_error(pred, truth, i, s, ErrorDims::Horizontal);
            ade_v_sum_ += step_error(pred, truth, i, s, ErrorDims::Vertical);
        }
        fde_h_sum_ += step_error(pred, truth, i, t - 1, ErrorDims::Horizontal);
        fde_v_sum_ += step_error(pred, truth, i, t - 1, ErrorDims::Vertical);
    }
    step_terms_ += n * t;
    node_terms_ += n;
    scenes_ += 1;
}

MetricsReport MetricsAccumulator::report(const std::string& protocol) const {
    if (node_terms_ == 0) throw std::runtime_error("metrics requested with no scenes accumulated");
    MetricsReport r;
    r.ade_horizontal = ade_h_sum_ / static_cast<double>(step_terms_);
    r.ade_vertical = ade_v_sum_ / static_cast<double>(step_terms_);
    r.fde_horizontal = fde_h_sum_ / static_cast<double>(node_terms_);
    r.fde_vertical = fde_v_sum_ / static_cast<double>(node_terms_);
    r.scene_count = scenes_;
    r.node_count = node_terms_;
    r.protocol = protocol;
    return r;
}

}  // namespace dastgcn
