#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "dastgcn/config.hpp"
#include "dastgcn/ingest.hpp"
#include "dastgcn/metrics.hpp"
#include "dastgcn/model.hpp"

namespace dastgcn {

class DataEmpty : public std::runtime_error {
public:
    explicit DataEmpty(const std::string& what) : std::runtime_error(what) {}
};

/// Scene indices per split. The shuffle works on source groups so every
/// window cut from one raw track lands in exactly one split.
struct SplitIndices {
    std::vector<size_t> train, val, test;
};

SplitIndices split_scenes(const std::vector<Scene>& scenes, double f_train, double f_val,
                          double f_test, uint64_t seed);

/// Scenes over model capacity are split into sub-scenes; the rest pass
/// through untouched.
std::vector<Scene> enforce_capacity(std::vector<Scene> scenes, int64_t n_max,
                                    int64_t min_aircraft);

struct EpochStat {
    int64_t epoch = 0;
    double lr = 0.0;
    double mean_nll = 0.0;
    double seconds = 0.0;
};

/// Mini-batch maximum-likelihood training with the step learning-rate
/// schedule. When `log` is given, one tab-separated line per epoch:
/// epoch, lr, mean NLL, wall seconds. Bit-reproducible under a fixed seed
/// (timing column aside).
std::vector<EpochStat> train_model(Model& model, const std::vector<Scene>& scenes,
                                   const RunConfig& cfg, std::ostream* log = nullptr);

/// Batch gradient for one list of scene graphs: accumulates d(mean node NLL)
/// into the model's gradient slots and returns the mean node NLL.
double batch_loss_and_grad(Model& model, const std::vector<const SceneGraph*>& batch);

/// ADE/FDE in raw units. "mean" uses the denormalized predicted means;
/// "best_of_k" picks, per scene, the sampled trajectory set with the lowest
/// 3-D normalized ADE and is labeled as such in the report.
MetricsReport evaluate_model(Model& model, const std::vector<Scene>& scenes,
                             const std::string& protocol, int64_t k, uint64_t seed);

struct LayerGridCell {
    int64_t stgcn_layers = 0;
    int64_t txp_layers = 0;
    double ade_horizontal = 0.0;
    double ade_vertical = 0.0;
};

/// Table of ADE per (STGCN layers x TXP layers) over {1,3,5,7}^2 at the
/// reduced grid.epochs budget. Writes the formatted table to `out`.
std::vector<LayerGridCell> layer_grid(const std::vector<Scene>& scenes, const RunConfig& base,
                                      std::ostream& out);

/// Forecast dump plus per-scene trajectory table (observed, truth, predicted
/// mean and covariance diagonal) for external plotting.
void predict_and_dump(Model& model, const std::vector<Scene>& scenes,
                      const std::string& forecast_path, const std::string& trajectory_path);

}  // namespace dastgcn
