#include "dastgcn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "dastgcn/parallel.hpp"

namespace dastgcn {

namespace {

std::vector<SceneGraph> build_graphs(Model& model, const std::vector<Scene>& scenes) {
    std::vector<SceneGraph> graphs(scenes.size());
    parallel_for(static_cast<int64_t>(scenes.size()), [&](int64_t i) {
        graphs[static_cast<size_t>(i)] = build_scene_graph(
            scenes[static_cast<size_t>(i)], model.config().n_max, model.config().kernel_space);
    });
    return graphs;
}

Tensor raw_truth(const Scene& scene) {
    Tensor t({scene.node_count, scene.t_pred, 3});
    for (int64_t i = 0; i < scene.node_count; ++i)
        for (int64_t s = 0; s < scene.t_pred; ++s)
            for (int64_t c = 0; c < 3; ++c)
                t.at(i, s, c) = scene.positions.at(c, scene.t_obs + s, i);
    return t;
}

Tensor denormalize_prediction(const Tensor& normalized, const Scalers& scalers) {
    Tensor out = normalized;  // node x t_pred x 3
    for (int64_t i = 0; i < out.dim(0); ++i)
        for (int64_t s = 0; s < out.dim(1); ++s)
            for (int c = 0; c < 3; ++c)
                out.at(i, s, c) = denormalize_coord(out.at(i, s, c), scalers, c);
    return out;
}

Tensor normalized_truth_by_node(const SceneGraph& g) {
    Tensor t({g.n_real, g.t_pred, 3});
    for (int64_t i = 0; i < g.n_real; ++i)
        for (int64_t s = 0; s < g.t_pred; ++s)
            for (int64_t c = 0; c < 3; ++c) t.at(i, s, c) = g.truth.at(s, c, i);
    return t;
}

double ade3(const Tensor& a, const Tensor& b) {
    double sum = 0.0;
    const int64_t n = a.dim(0), t = a.dim(1);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t s = 0; s < t; ++s) {
            double sq = 0.0;
            for (int64_t c = 0; c < 3; ++c) {
                const double d = a.at(i, s, c) - b.at(i, s, c);
                sq += d * d;
            }
            sum += std::sqrt(sq);
        }
    return sum / static_cast<double>(n * t);
}

}  // namespace

SplitIndices split_scenes(const std::vector<Scene>& scenes, double f_train, double f_val,
                          double f_test, uint64_t seed) {
    // Group scenes by source so overlapping windows never straddle splits.
    std::map<int64_t, std::vector<size_t>> groups;
    for (size_t i = 0; i < scenes.size(); ++i) groups[scenes[i].source_id].push_back(i);
    std::vector<int64_t> keys;
    for (const auto& [k, _] : groups) keys.push_back(k);
    std::mt19937_64 rng(seed);
    std::shuffle(keys.begin(), keys.end(), rng);

    const double total = f_train + f_val + f_test;
    const double n = static_cast<double>(scenes.size());
    SplitIndices out;
    double assigned = 0.0;
    for (int64_t key : keys) {
        auto& bucket = assigned < f_train / total * n               ? out.train
                       : assigned < (f_train + f_val) / total * n   ? out.val
                                                                    : out.test;
        for (size_t i : groups[key]) bucket.push_back(i);
        assigned += static_cast<double>(groups[key].size());
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::vector<Scene> enforce_capacity(std::vector<Scene> scenes, int64_t n_max,
                                    int64_t min_aircraft) {
    std::vector<Scene> out;
    out.reserve(scenes.size());
    for (Scene& s : scenes) {
        if (s.node_count <= n_max) {
            out.push_back(std::move(s));
            continue;
        }
        for (Scene& sub : split_to_capacity(s, n_max, min_aircraft)) out.push_back(std::move(sub));
    }
    return out;
}

double batch_loss_and_grad(Model& model, const std::vector<const SceneGraph*>& batch) {
    struct SceneResult {
        Model::GradBuffer grads;
        double loss_sum = 0.0;
        int64_t nodes = 0;
    };
    std::vector<SceneResult> results(batch.size());
    parallel_for(static_cast<int64_t>(batch.size()), [&](int64_t i) {
        SceneResult& r = results[static_cast<size_t>(i)];
        Tape tape;
        Model::Forward f =
            model.forward(tape, *batch[static_cast<size_t>(i)], nullptr, nullptr, &r.grads);
        r.loss_sum = f.loss_sum.value().item();
        r.nodes = f.real_nodes;
        tape.backward(f.loss_sum);
    });
    int64_t total_nodes = 0;
    double total_loss = 0.0;
    for (const SceneResult& r : results) {
        total_nodes += r.nodes;
        total_loss += r.loss_sum;
    }
    if (total_nodes == 0) throw DataEmpty("batch contains no real nodes");
    const double inv = 1.0 / static_cast<double>(total_nodes);
    for (const SceneResult& r : results) model.reduce_gradients(r.grads, inv);
    return total_loss * inv;
}

std::vector<EpochStat> train_model(Model& model, const std::vector<Scene>& scenes,
                                   const RunConfig& cfg, std::ostream* log) {
    if (scenes.empty()) throw DataEmpty("no scenes to train on");
    const std::vector<SceneGraph> graphs = build_graphs(model, scenes);

    // The loss must be finite at initialization before any step is taken.
    {
        Tape probe;
        const SceneGraph& g0 = graphs.front();
        Model::GradBuffer scratch;
        Model::Forward f = model.forward(probe, g0, nullptr, nullptr, &scratch);
        if (!std::isfinite(f.loss_sum.value().item()))
            throw NonFiniteError("initial loss");
    }

    std::mt19937_64 rng(cfg.seed);
    std::mt19937_64 dropout_rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
    std::vector<size_t> order(graphs.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<EpochStat> stats;
    stats.reserve(static_cast<size_t>(cfg.epochs));
    for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = epoch < cfg.lr_switch_epoch ? cfg.lr : cfg.lr_after;
        std::shuffle(order.begin(), order.end(), rng);

        double nll_weighted = 0.0;
        int64_t node_total = 0;
        for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
            std::vector<const SceneGraph*> batch;
            batch.reserve(end - begin);
            int64_t batch_nodes = 0;
            for (size_t i = begin; i < end; ++i) {
                batch.push_back(&graphs[order[i]]);
                batch_nodes += graphs[order[i]].n_real;
            }
            const bool uses_dropout = model.config().dropout > 0.0;
            double batch_nll;
            if (uses_dropout) {
                // dropout draws must stay on the main thread for reproducibility
                model.params().zero_grad();
                double loss_sum = 0.0;
                for (const SceneGraph* g : batch) {
                    Tape tape;
                    Model::GradBuffer buf;
                    Model::Forward f = model.forward(tape, *g, nullptr, &dropout_rng, &buf);
                    loss_sum += f.loss_sum.value().item();
                    tape.backward(f.loss_sum);
                    model.reduce_gradients(buf, 1.0 / static_cast<double>(batch_nodes));
                }
                batch_nll = loss_sum / static_cast<double>(batch_nodes);
            } else {
                model.params().zero_grad();
                batch_nll = batch_loss_and_grad(model, batch);
            }
            if (cfg.clip_norm > 0.0) model.params().clip_grad_norm(cfg.clip_norm);
            AdamConfig adam;
            adam.lr = lr;
            model.params().adam_step(adam);
            nll_weighted += batch_nll * static_cast<double>(batch_nodes);
            node_total += batch_nodes;
        }
        const auto t1 = std::chrono::steady_clock::now();
        EpochStat s;
        s.epoch = epoch;
        s.lr = lr;
        s.mean_nll = nll_weighted / static_cast<double>(node_total);
        s.seconds = std::chrono::duration<double>(t1 - t0).count();
        if (log != nullptr) {
            char line[160];
            std::snprintf(line, sizeof(line), "%lld\t%.6g\t%.12g\t%.3f\n",
                          static_cast<long long>(s.epoch), s.lr, s.mean_nll, s.seconds);
            (*log) << line;
            log->flush();
        }
        stats.push_back(s);
    }
    return stats;
}

MetricsReport evaluate_model(Model& model, const std::vector<Scene>& scenes,
                             const std::string& protocol, int64_t k, uint64_t seed) {
    if (scenes.empty()) throw DataEmpty("no scenes to evaluate");
    const std::vector<SceneGraph> graphs = build_graphs(model, scenes);
    const bool best_of = protocol == "best_of_k";

    struct ScenePrediction {
        Tensor pred_raw;
        Tensor truth_raw;
    };
    std::vector<ScenePrediction> preds(scenes.size());
    parallel_for(static_cast<int64_t>(scenes.size()), [&](int64_t idx) {
        const size_t i = static_cast<size_t>(idx);
        Tape tape;
        Model::GradBuffer scratch;  // keeps shared gradient slots untouched
        Model::Forward f = model.forward(tape, graphs[i], nullptr, nullptr, &scratch);
        Tensor chosen;
        if (best_of) {
            const Tensor truth_norm = normalized_truth_by_node(graphs[i]);
            auto samples = sample_trajectories(f.forecast, k, seed + static_cast<uint64_t>(i));
            double best = std::numeric_limits<double>::infinity();
            for (const Tensor& s : samples) {
                const double score = ade3(s, truth_norm);
                if (score < best) {
                    best = score;
                    chosen = s;
                }
            }
        } else {
            chosen = f.forecast.mu;
        }
        preds[i].pred_raw = denormalize_prediction(chosen, scenes[i].scalers);
        preds[i].truth_raw = raw_truth(scenes[i]);
    });

    MetricsAccumulator acc;
    for (const ScenePrediction& p : preds) acc.add_scene(p.pred_raw, p.truth_raw);
    return acc.report(best_of ? "best_of_" + std::to_string(k) : "mean");
}

std::vector<LayerGridCell> layer_grid(const std::vector<Scene>& scenes, const RunConfig& base,
                                      std::ostream& out) {
    const int64_t options[4] = {1, 3, 5, 7};
    SplitIndices split =
        split_scenes(scenes, base.split_train, base.split_val, base.split_test, base.seed);
    std::vector<Scene> train_set, eval_set;
    for (size_t i : split.train) train_set.push_back(scenes[i]);
    for (size_t i : split.val) eval_set.push_back(scenes[i]);
    if (eval_set.empty()) eval_set = train_set;
    if (train_set.empty()) throw DataEmpty("layer grid: empty training split");

    out << "# layer selection grid, reduced budget: " << base.grid_epochs
        << " epochs per cell (full schedule: " << base.epochs << ")\n";
    out << "# rows: STGCN layers; columns: TXP-CNN layers; cell: horizontal ADE / vertical ADE\n";
    out << "layers";
    for (int64_t t : options) out << "\t" << t;
    out << "\n";

    std::vector<LayerGridCell> cells;
    for (int64_t s_layers : options) {
        out << s_layers;
        for (int64_t t_layers : options) {
            RunConfig cfg = base;
            cfg.epochs = base.grid_epochs;
            cfg.lr_switch_epoch = std::min(base.lr_switch_epoch, cfg.epochs - 1);
            cfg.model.stgcn_layers = s_layers;
            cfg.model.txp_layers = t_layers;
            const uint64_t cell_seed =
                base.seed + static_cast<uint64_t>(s_layers * 100 + t_layers);
            Model model(cfg.model, cell_seed);
            RunConfig train_cfg = cfg;
            train_cfg.seed = cell_seed;
            train_model(model, train_set, train_cfg, nullptr);
            MetricsReport report = evaluate_model(model, eval_set, "mean", cfg.best_of_k, cell_seed);
            LayerGridCell cell;
            cell.stgcn_layers = s_layers;
            cell.txp_layers = t_layers;
            cell.ade_horizontal = report.ade_horizontal;
            cell.ade_vertical = report.ade_vertical;
            cells.push_back(cell);
            char buf[64];
            std::snprintf(buf, sizeof(buf), "\t%.6g/%.6g", cell.ade_horizontal, cell.ade_vertical);
            out << buf;
        }
        out << "\n";
    }
    return cells;
}

void predict_and_dump(Model& model, const std::vector<Scene>& scenes,
                      const std::string& forecast_path, const std::string& trajectory_path) {
    if (scenes.empty()) throw DataEmpty("no scenes to predict");
    const std::vector<SceneGraph> graphs = build_graphs(model, scenes);

    std::ofstream fc(forecast_path);
    if (!fc) throw std::runtime_error("cannot write " + forecast_path);
    fc << "# one row per (scene, node, predicted step)\n";
    fc << "# mu_* in raw units (degrees, degrees, meters); l_* are the free entries of the\n";
    fc << "# lower-triangular factor in normalized units\n";
    fc << "scene\tnode\tstep\tmu_lon\tmu_lat\tmu_alt\tl11\tl22\tl33\tl21\tl31\tl32\n";

    std::ofstream tr(trajectory_path);
    if (!tr) throw std::runtime_error("cannot write " + trajectory_path);
    tr << "# kind: obs = observed input, truth = future ground truth, pred = predicted mean\n";
    tr << "# var_* = covariance diagonal in raw units^2 (pred rows only, 0 otherwise)\n";
    tr << "scene\tnode\tkind\tstep\tlon\tlat\talt\tvar_lon\tvar_lat\tvar_alt\n";

    char line[320];
    for (size_t i = 0; i < scenes.size(); ++i) {
        const Scene& scene = scenes[i];
        Tape tape;
        Model::GradBuffer scratch;
        Model::Forward f = model.forward(tape, graphs[i], nullptr, nullptr, &scratch);
        const Tensor pred_raw = denormalize_prediction(f.forecast.mu, scene.scalers);

        for (int64_t node = 0; node < scene.node_count; ++node) {
            for (int64_t s = 0; s < scene.t_pred; ++s) {
                const double* l = f.forecast.lfac.data() + (node * scene.t_pred + s) * 9;
                std::snprintf(line, sizeof(line),
                              "%zu\t%lld\t%lld\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n",
                              i, static_cast<long long>(node), static_cast<long long>(s),
                              pred_raw.at(node, s, 0), pred_raw.at(node, s, 1),
                              pred_raw.at(node, s, 2), l[0], l[4], l[8], l[3], l[6], l[7]);
                fc << line;
            }
            for (int64_t t = 0; t < scene.t_obs; ++t) {
                std::snprintf(line, sizeof(line), "%zu\t%lld\tobs\t%lld\t%.9g\t%.9g\t%.9g\t0\t0\t0\n",
                              i, static_cast<long long>(node), static_cast<long long>(t),
                              scene.positions.at(0, t, node), scene.positions.at(1, t, node),
                              scene.positions.at(2, t, node));
                tr << line;
            }
            for (int64_t s = 0; s < scene.t_pred; ++s) {
                std::snprintf(line, sizeof(line), "%zu\t%lld\ttruth\t%lld\t%.9g\t%.9g\t%.9g\t0\t0\t0\n",
                              i, static_cast<long long>(node),
                              static_cast<long long>(scene.t_obs + s),
                              scene.positions.at(0, scene.t_obs + s, node),
                              scene.positions.at(1, scene.t_obs + s, node),
                              scene.positions.at(2, scene.t_obs + s, node));
                tr << line;
            }
            for (int64_t s = 0; s < scene.t_pred; ++s) {
                const Tensor sigma = f.forecast.covariance(node, s);
                const double var_lon = sigma.at(0, 0) * scene.scalers.scale[0] * scene.scalers.scale[0];
                const double var_lat = sigma.at(1, 1) * scene.scalers.scale[1] * scene.scalers.scale[1];
                const double var_alt = sigma.at(2, 2) * scene.scalers.scale[2] * scene.scalers.scale[2];
                std::snprintf(line, sizeof(line),
                              "%zu\t%lld\tpred\t%lld\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", i,
                              static_cast<long long>(node), static_cast<long long>(scene.t_obs + s),
                              pred_raw.at(node, s, 0), pred_raw.at(node, s, 1), pred_raw.at(node, s, 2),
                              var_lon, var_lat, var_alt);
                tr << line;
            }
        }
    }
}

}  // namespace dastgcn
