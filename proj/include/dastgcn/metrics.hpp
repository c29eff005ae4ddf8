#pragma once

#include <cstdint>
#include <string>

#include "dastgcn/tensor.hpp"

namespace dastgcn {

enum class ErrorDims { Horizontal, Vertical };

/// Mean over nodes and predicted steps of the displacement norm restricted to
/// the selected dimensions (lon/lat 2-norm, or |alt|). Tensors are
/// node x t_pred x 3.
double ade(const Tensor& pred, const Tensor& truth, ErrorDims dims);

/// Mean over nodes of the displacement norm at the final predicted step.
double fde(const Tensor& pred, const Tensor& truth, ErrorDims dims);

struct MetricsReport {
    double ade_horizontal = 0.0;  // degrees
    double ade_vertical = 0.0;    // meters
    double fde_horizontal = 0.0;  // degrees
    double fde_vertical = 0.0;    // meters
    int64_t scene_count = 0;
    int64_t node_count = 0;
    std::string protocol;  // "mean" or "best_of_K"

    std::string to_json() const;
};

/// Streaming aggregation across scenes: displacement sums are pooled so the
/// result equals ade/fde over the concatenated node set.
class MetricsAccumulator {
public:
    void add_scene(const Tensor& pred, const Tensor& truth);
    MetricsReport report(const std::string& protocol) const;

private:
    double ade_h_sum_ = 0.0, ade_v_sum_ = 0.0;
    double fde_h_sum_ = 0.0, fde_v_sum_ = 0.0;
    int64_t step_terms_ = 0;
    int64_t node_terms_ = 0;
    int64_t scenes_ = 0;
};

}  // namespace dastgcn
