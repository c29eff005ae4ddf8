#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dastgcn/config.hpp"
#include "dastgcn/gradcheck.hpp"
#include "dastgcn/ingest.hpp"
#include "dastgcn/model.hpp"
#include "dastgcn/parallel.hpp"
#include "dastgcn/synth.hpp"
#include "dastgcn/train.hpp"

namespace fs = std::filesystem;
using namespace dastgcn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDataError = 2;
constexpr int kExitNumericAbort = 3;

/// Exclusive marker so two runs never write the same out_dir.
class OutDirLock {
public:
    explicit OutDirLock(const std::string& out_dir) : path_(fs::path(out_dir) / ".lock") {
        fs::create_directories(out_dir);
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (f == nullptr)
            throw std::runtime_error("out dir is locked by another run (" + path_.string() +
                                     "); remove the lock if it is stale");
        std::fclose(f);
    }
    ~OutDirLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    OutDirLock(const OutDirLock&) = delete;
    OutDirLock& operator=(const OutDirLock&) = delete;

private:
    fs::path path_;
};

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string data_dir;
    std::string checkpoint;
    int64_t seed = -1;  // -1: keep config value
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool wants_out, bool wants_data,
                bool wants_checkpoint) {
    cmd->add_option("--config", args.config_path, "config file with dotted keys (see --help-keys)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", args.seed, "seed override (train.seed)");
    cmd->add_option("--set", args.overrides, "override one config key, e.g. --set model.n_max=8")
        ->take_all();
    auto* out = cmd->add_option("--out-dir", args.out_dir, "output directory (locked while running)");
    if (wants_out) out->required();
    auto* data = cmd->add_option("--data-dir", args.data_dir, "input directory");
    if (wants_data) data->required();
    auto* ckpt = cmd->add_option("--checkpoint", args.checkpoint, "checkpoint file");
    if (wants_checkpoint) ckpt->required()->check(CLI::ExistingFile);
}

RunConfig resolve_config(const CommonArgs& args, bool gradcheck_defaults = false) {
    RunConfig cfg;
    if (!args.config_path.empty()) cfg = RunConfig::from_file(args.config_path);
    if (gradcheck_defaults && args.config_path.empty()) {
        // small default geometry so the finite-difference sweep stays quick
        cfg.model.n_max = 4;
        cfg.model.embed_dim = 16;
        cfg.model.gat_head_dim = 4;
    }
    for (const std::string& kv : args.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.seed >= 0) cfg.seed = static_cast<uint64_t>(args.seed);
    cfg.validate();
    return cfg;
}

void echo_config(const RunConfig& cfg, const std::string& out_dir) {
    std::ofstream os(fs::path(out_dir) / "config.resolved.txt");
    os << cfg.to_text();
}

void write_shards(const std::vector<Scene>& scenes, const RunConfig& cfg,
                  const std::string& out_dir) {
    const size_t per = static_cast<size_t>(cfg.scenes_per_shard);
    size_t shard = 0;
    for (size_t begin = 0; begin < scenes.size(); begin += per, ++shard) {
        const size_t end = std::min(scenes.size(), begin + per);
        std::vector<Scene> chunk(scenes.begin() + static_cast<ptrdiff_t>(begin),
                                 scenes.begin() + static_cast<ptrdiff_t>(end));
        char name[32];
        std::snprintf(name, sizeof(name), "scenes_%04zu.json", shard);
        save_scene_shard((fs::path(out_dir) / name).string(), chunk);
    }
}

std::vector<Scene> load_scenes_checked(const std::string& data_dir, const RunConfig& cfg) {
    std::vector<Scene> scenes = load_scene_dir(data_dir);
    if (scenes.empty()) throw DataEmpty("no scenes found under " + data_dir);
    return enforce_capacity(std::move(scenes), cfg.model.n_max, cfg.min_aircraft);
}

int cmd_prepare(const CommonArgs& args) {
    const RunConfig cfg = resolve_config(args);
    OutDirLock lock(args.out_dir);
    echo_config(cfg, args.out_dir);

    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(args.data_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv")
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        std::cerr << "prepare: no .csv files under " << args.data_dir << "\n";
        return kExitDataError;
    }

    CsvSchema schema;
    schema.alt_feet = cfg.alt_feet;
    ResampleConfig resample{cfg.step_seconds, cfg.gap_limit_seconds};
    CutConfig cut{cfg.model.t_obs, cfg.model.t_pred, cfg.stride, cfg.min_aircraft};

    nlohmann::ordered_json summary;
    summary["files"] = nlohmann::ordered_json::array();
    std::vector<Scene> scenes;
    int64_t total_rows = 0, total_row_errors = 0, total_dupes = 0;
    for (size_t f = 0; f < files.size(); ++f) {
        nlohmann::ordered_json entry;
        entry["path"] = files[f];
        try {
            ParseResult parsed = parse_track_file(files[f], schema);
            auto series = resample_to_grid(parsed.points, resample);
            auto file_scenes = cut_scenes(series, cut);
            for (Scene& s : file_scenes) s.source_id = static_cast<int64_t>(f);
            file_scenes = enforce_capacity(std::move(file_scenes), cfg.model.n_max, cfg.min_aircraft);
            entry["rows"] = parsed.points.size();
            entry["row_errors"] = parsed.row_errors.size();
            entry["duplicates_dropped"] = parsed.duplicates_dropped;
            entry["scenes"] = file_scenes.size();
            total_rows += static_cast<int64_t>(parsed.points.size());
            total_row_errors += static_cast<int64_t>(parsed.row_errors.size());
            total_dupes += parsed.duplicates_dropped;
            for (Scene& s : file_scenes) scenes.push_back(std::move(s));
        } catch (const IngestError& e) {
            entry["error"] = e.what();
            std::cerr << "prepare: " << files[f] << ": " << e.what() << "\n";
        }
        summary["files"].push_back(std::move(entry));
    }
    summary["total_rows"] = total_rows;
    summary["total_row_errors"] = total_row_errors;
    summary["total_duplicates_dropped"] = total_dupes;
    summary["total_scenes"] = scenes.size();
    {
        std::ofstream os(fs::path(args.out_dir) / "summary.json");
        os << summary.dump(1, '\t') << "\n";
    }
    if (scenes.empty()) {
        std::cerr << "prepare: no scenes produced\n";
        return kExitDataError;
    }
    write_shards(scenes, cfg, args.out_dir);
    std::cout << "prepare: wrote " << scenes.size() << " scenes from " << files.size()
              << " files to " << args.out_dir << "\n";
    return kExitOk;
}

int cmd_synth(const CommonArgs& args, const SyntheticSpec& spec_in, int64_t instances) {
    const RunConfig cfg = resolve_config(args);
    OutDirLock lock(args.out_dir);
    echo_config(cfg, args.out_dir);

    SyntheticSpec spec = spec_in;
    spec.seed = cfg.seed;
    CutConfig cut{cfg.model.t_obs, cfg.model.t_pred, cfg.stride, cfg.min_aircraft};
    std::vector<Scene> scenes = generate_scenes(spec, cut, instances);
    scenes = enforce_capacity(std::move(scenes), cfg.model.n_max, cfg.min_aircraft);
    if (scenes.empty()) {
        std::cerr << "synth: no scenes produced\n";
        return kExitDataError;
    }
    write_shards(scenes, cfg, args.out_dir);

    nlohmann::ordered_json summary;
    summary["scenario"] = scenario_name(spec.kind);
    summary["aircraft"] = spec.aircraft;
    summary["noise"] = spec.noise;
    summary["duration_steps"] = spec.duration_steps;
    summary["instances"] = instances;
    summary["total_scenes"] = scenes.size();
    std::ofstream os(fs::path(args.out_dir) / "summary.json");
    os << summary.dump(1, '\t') << "\n";
    std::cout << "synth: wrote " << scenes.size() << " scenes to " << args.out_dir << "\n";
    return kExitOk;
}

int cmd_train(const CommonArgs& args) {
    const RunConfig cfg = resolve_config(args);
    OutDirLock lock(args.out_dir);
    echo_config(cfg, args.out_dir);

    std::vector<Scene> scenes = load_scenes_checked(args.data_dir, cfg);
    SplitIndices split =
        split_scenes(scenes, cfg.split_train, cfg.split_val, cfg.split_test, cfg.seed);
    std::vector<Scene> train_set, val_set, test_set;
    for (size_t i : split.train) train_set.push_back(scenes[i]);
    for (size_t i : split.val) val_set.push_back(scenes[i]);
    for (size_t i : split.test) test_set.push_back(scenes[i]);
    if (train_set.empty()) throw DataEmpty("training split is empty");
    // held-out splits land as shard directories usable with --data-dir
    for (const auto& [name, subset] :
         {std::pair{"split_val", &val_set}, std::pair{"split_test", &test_set}}) {
        if (subset->empty()) continue;
        const fs::path dir = fs::path(args.out_dir) / name;
        fs::create_directories(dir);
        save_scene_shard((dir / "scenes_0000.json").string(), *subset);
    }

    Model model(cfg.model, cfg.seed);
    std::cout << "train: " << train_set.size() << " scenes, "
              << model.params().value_count() << " parameters, batch " << cfg.batch_size
              << ", epochs " << cfg.epochs << "\n";
    std::ofstream log(fs::path(args.out_dir) / "train_log.txt");
    log << "# epoch\tlr\tmean_nll\twall_seconds\n";
    train_model(model, train_set, cfg, &log);
    const std::string ckpt = (fs::path(args.out_dir) / "checkpoint.dastgcn").string();
    model.save(ckpt);
    std::cout << "train: checkpoint written to " << ckpt << "\n";
    return kExitOk;
}

int cmd_eval(const CommonArgs& args) {
    const RunConfig cfg = resolve_config(args);
    OutDirLock lock(args.out_dir);
    echo_config(cfg, args.out_dir);

    Model model = Model::load(args.checkpoint);
    RunConfig eval_cfg = cfg;
    eval_cfg.model = model.config();
    std::vector<Scene> scenes = load_scenes_checked(args.data_dir, eval_cfg);
    MetricsReport report =
        evaluate_model(model, scenes, cfg.protocol, cfg.best_of_k, cfg.seed);
    std::ofstream os(fs::path(args.out_dir) / "metrics.json");
    os << report.to_json() << "\n";
    std::cout << "protocol: " << report.protocol << "\n"
              << "ade_horizontal: " << report.ade_horizontal << " deg\n"
              << "ade_vertical:   " << report.ade_vertical << " m\n"
              << "fde_horizontal: " << report.fde_horizontal << " deg\n"
              << "fde_vertical:   " << report.fde_vertical << " m\n"
              << "scenes: " << report.scene_count << ", nodes: " << report.node_count << "\n";
    return kExitOk;
}

int cmd_predict(const CommonArgs& args) {
    const RunConfig cfg = resolve_config(args);
    OutDirLock lock(args.out_dir);
    echo_config(cfg, args.out_dir);

    Model model = Model::load(args.checkpoint);
    RunConfig eval_cfg = cfg;
    eval_cfg.model = model.config();
    std::vector<Scene> scenes = load_scenes_checked(args.data_dir, eval_cfg);
    predict_and_dump(model, scenes, (fs::path(args.out_dir) / "forecast_dump.txt").string(),
                     (fs::path(args.out_dir) / "trajectories.txt").string());
    std::cout << "predict: wrote forecast_dump.txt and trajectories.txt for " << scenes.size()
              << " scenes\n";
    return kExitOk;
}

int cmd_gradcheck(const CommonArgs& args) {
    const RunConfig cfg = resolve_config(args, /*gradcheck_defaults=*/true);

    SyntheticSpec spec;
    spec.kind = ScenarioKind::Crossing;
    spec.aircraft = 3;
    spec.duration_steps = cfg.model.t_obs + cfg.model.t_pred;
    spec.seed = cfg.seed;
    CutConfig cut{cfg.model.t_obs, cfg.model.t_pred, cfg.stride, cfg.min_aircraft};
    std::vector<Scene> scenes = generate_scenes(spec, cut, 1);
    if (scenes.empty()) throw DataEmpty("gradcheck: toy scene generation failed");
    const SceneGraph graph = build_scene_graph(scenes[0], cfg.model.n_max, cfg.model.kernel_space);

    Model model(cfg.model, cfg.seed);
    model.params().zero_grad();
    {
        Tape tape;
        Model::Forward f = model.forward(tape, graph);
        tape.backward(f.loss_sum, 1.0 / static_cast<double>(f.real_nodes));
    }
    auto loss_fn = [&]() {
        Tape tape;
        Model::GradBuffer scratch;
        Model::Forward f = model.forward(tape, graph, nullptr, nullptr, &scratch);
        return f.loss_sum.value().item() / static_cast<double>(f.real_nodes);
    };
    const GradCheckReport report = grad_check_params(loss_fn, model.params());
    std::cout << "gradcheck: " << report.checked << " coordinates checked, "
              << report.skipped_kinks << " skipped near kinks\n";
    std::cout << "gradcheck: max relative error " << report.max_rel_error;
    if (!report.worst_param.empty())
        std::cout << " at " << report.worst_param << "[" << report.worst_index << "]";
    std::cout << "\n";
    const bool ok = report.passed(1e-3);
    std::cout << (ok ? "gradcheck: PASS (< 1e-3)" : "gradcheck: FAIL (>= 1e-3)") << "\n";
    return ok ? kExitOk : 1;
}

int cmd_layergrid(const CommonArgs& args) {
    const RunConfig cfg = resolve_config(args);
    OutDirLock lock(args.out_dir);
    echo_config(cfg, args.out_dir);

    std::vector<Scene> scenes = load_scenes_checked(args.data_dir, cfg);
    std::ofstream os(fs::path(args.out_dir) / "layer_grid.txt");
    layer_grid(scenes, cfg, os);
    std::cout << "layergrid: wrote " << (fs::path(args.out_dir) / "layer_grid.txt").string()
              << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "dastgcn: multi-aircraft 4D trajectory prediction with a dual-attention "
        "spatiotemporal graph network.\n"
        "Worker threads come from DASTGCN_THREADS (default: machine parallelism)."};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "help for every subcommand");

    CommonArgs prepare_args, synth_args, train_args, eval_args, predict_args, gradcheck_args,
        grid_args;

    auto* prepare = app.add_subcommand("prepare", "parse ADS-B CSV files into scene shards");
    add_common(prepare, prepare_args, true, true, false);

    auto* synth = app.add_subcommand("synth", "generate synthetic scenario shards");
    add_common(synth, synth_args, true, false, false);
    std::string kind = "crossing";
    SyntheticSpec spec;
    int64_t instances = 1;
    synth->add_option("--kind", kind, "crossing | merge | approach_funnel | climb_conflict");
    synth->add_option("--aircraft", spec.aircraft, "aircraft per instance (>= 2)");
    synth->add_option("--noise", spec.noise, "observation noise as a fraction of spread");
    synth->add_option("--duration", spec.duration_steps, "steps per instance");
    synth->add_option("--count", instances, "number of scenario instances");

    auto* train = app.add_subcommand("train", "train on scene shards");
    add_common(train, train_args, true, true, false);

    auto* evalc = app.add_subcommand("eval", "compute ADE/FDE for a checkpoint");
    add_common(evalc, eval_args, true, true, true);

    auto* predict = app.add_subcommand("predict", "dump forecasts and trajectories");
    add_common(predict, predict_args, true, true, true);

    auto* gradcheck = app.add_subcommand(
        "gradcheck", "finite-difference check of the full model gradient on a toy scene");
    add_common(gradcheck, gradcheck_args, false, false, false);

    auto* grid = app.add_subcommand("layergrid", "train the 4x4 layer-count grid");
    add_common(grid, grid_args, true, true, false);

    for (auto* cmd : {prepare, synth, train, evalc, predict, gradcheck, grid})
        cmd->footer("config keys accepted by --config / --set:\n" + RunConfig::key_help());

    CLI11_PARSE(app, argc, argv);

    try {
        if (prepare->parsed()) return cmd_prepare(prepare_args);
        if (synth->parsed()) {
            spec.kind = scenario_from_string(kind);
            return cmd_synth(synth_args, spec, instances);
        }
        if (train->parsed()) return cmd_train(train_args);
        if (evalc->parsed()) return cmd_eval(eval_args);
        if (predict->parsed()) return cmd_predict(predict_args);
        if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_args);
        if (grid->parsed()) return cmd_layergrid(grid_args);
    } catch (const NonFiniteError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return kExitNumericAbort;
    } catch (const DataEmpty& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const IngestError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitDataError;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitOk;
}
