#include "dastgcn/synth.hpp"

#include <cmath>
#include <cstdio>
#include <random>

namespace dastgcn {

namespace {

constexpr int64_t kStepSeconds = 10;
constexpr double kPi = 3.14159265358979323846;

struct Path {
    std::vector<double> lon, lat, alt;  // one entry per step
};

// Quadratic Bezier keeps heading changes smooth (bounded turn rate).
double bezier(double p0, double c, double p1, double u) {
    const double v = 1.0 - u;
    return v * v * p0 + 2.0 * u * v * c + u * u * p1;
}

std::vector<Path> crossing_paths(int64_t aircraft, int64_t steps, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
    std::uniform_real_distribution<double> jitter(0.9, 1.1);
    const double theta = angle(rng);
    const double speed = 0.02 * jitter(rng);  // deg per step
    // First two aircraft cross near the middle of the prediction segment
    // (step 7 of a 4+6 window); the second arrives half a step later so the
    // minimum distance stays positive.
    const double t_cross = 7.0;
    std::vector<Path> paths;
    for (int64_t i = 0; i < aircraft; ++i) {
        Path p;
        for (int64_t t = 0; t < steps; ++t) {
            double x, y, z;
            const double tt = static_cast<double>(t);
            if (i == 0) {
                x = speed * (tt - t_cross);
                y = 0.0;
                z = 2000.0 - 2.0 * tt;
            } else if (i == 1) {
                x = 0.0;
                y = speed * 1.04 * (tt - t_cross - 0.5);
                z = 2300.0 + 1.5 * tt;
            } else {
                x = speed * (tt - t_cross);
                y = 0.05 * static_cast<double>(i - 1);
                z = 2500.0 + 40.0 * static_cast<double>(i) - tt;
            }
            // rotate the whole pattern for per-instance variety
            p.lon.push_back(x * std::cos(theta) - y * std::sin(theta));
            p.lat.push_back(x * std::sin(theta) + y * std::cos(theta));
            p.alt.push_back(z);
        }
        paths.push_back(std::move(p));
    }
    return paths;
}

std::vector<Path> merge_paths(int64_t aircraft, int64_t steps, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
    std::uniform_real_distribution<double> jitter(0.85, 1.15);
    const double outbound = angle(rng);
    std::vector<Path> paths;
    for (int64_t i = 0; i < aircraft; ++i) {
        const double bearing = outbound + kPi * 0.5 + 0.35 * static_cast<double>(i);
        const double reach = (0.12 + 0.02 * static_cast<double>(i)) * jitter(rng);
        const double p0x = std::cos(bearing) * reach;
        const double p0y = std::sin(bearing) * reach;
        const double p1x = std::cos(outbound) * 0.15;
        const double p1y = std::sin(outbound) * 0.15;
        Path p;
        for (int64_t t = 0; t < steps; ++t) {
            const double u = static_cast<double>(t) / static_cast<double>(steps - 1);
            p.lon.push_back(bezier(p0x, 0.0, p1x, u));
            p.lat.push_back(bezier(p0y, 0.0, p1y, u));
            p.alt.push_back(2600.0 - 30.0 * u * static_cast<double>(steps) -
                            60.0 * static_cast<double>(i));
        }
        paths.push_back(std::move(p));
    }
    return paths;
}

std::vector<Path> funnel_paths(int64_t aircraft, int64_t steps, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> jitter(0.9, 1.1);
    std::vector<Path> paths;
    for (int64_t i = 0; i < aircraft; ++i) {
        // fan of inbound bearings toward the threshold at the origin
        const double bearing =
            -kPi / 3.0 + (2.0 * kPi / 3.0) * static_cast<double>(i) /
                             std::max<double>(1.0, static_cast<double>(aircraft - 1));
        const double start_dist = (0.25 + 0.03 * static_cast<double>(i)) * jitter(rng);
        const double speed = 0.018 * jitter(rng);
        const double alt0 = 1200.0 + 150.0 * static_cast<double>(i);
        const double sink = (alt0 * 0.6) / static_cast<double>(steps);
        Path p;
        for (int64_t t = 0; t < steps; ++t) {
            const double dist = start_dist - speed * static_cast<double>(t);
            p.lon.push_back(std::cos(bearing) * dist);
            p.lat.push_back(std::sin(bearing) * dist);
            p.alt.push_back(alt0 - sink * static_cast<double>(t));
        }
        paths.push_back(std::move(p));
    }
    return paths;
}

std::vector<Path> climb_paths(int64_t aircraft, int64_t steps, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
    std::uniform_real_distribution<double> jitter(0.9, 1.1);
    const double theta = angle(rng);
    std::vector<Path> paths;
    for (int64_t i = 0; i < aircraft; ++i) {
        const double lateral = 0.04 * static_cast<double>(i / 2);
        const double dir = i % 2 == 0 ? 1.0 : -1.0;
        const double speed = 0.016 * jitter(rng);
        // climb profiles of consecutive pairs cross mid-window
        const double alt0 = i % 2 == 0 ? 600.0 : 1500.0;
        const double rate = (i % 2 == 0 ? 160.0 : 30.0) * jitter(rng);
        Path p;
        for (int64_t t = 0; t < steps; ++t) {
            const double x = dir * speed * (static_cast<double>(t) - 5.0);
            const double y = lateral + 0.004 * static_cast<double>(t) * dir;
            p.lon.push_back(x * std::cos(theta) - y * std::sin(theta));
            p.lat.push_back(x * std::sin(theta) + y * std::cos(theta));
            p.alt.push_back(alt0 + rate * static_cast<double>(t));
        }
        paths.push_back(std::move(p));
    }
    return paths;
}

}  // namespace

ScenarioKind scenario_from_string(const std::string& name) {
    if (name == "crossing") return ScenarioKind::Crossing;
    if (name == "merge") return ScenarioKind::Merge;
    if (name == "approach_funnel") return ScenarioKind::ApproachFunnel;
    if (name == "climb_conflict") return ScenarioKind::ClimbConflict;
    throw std::invalid_argument("unknown scenario kind: " + name);
}

std::string scenario_name(ScenarioKind kind) {
    switch (kind) {
        case ScenarioKind::Crossing: return "crossing";
        case ScenarioKind::Merge: return "merge";
        case ScenarioKind::ApproachFunnel: return "approach_funnel";
        case ScenarioKind::ClimbConflict: return "climb_conflict";
    }
    return "?";
}

void SyntheticSpec::validate(int64_t t_obs, int64_t t_pred) const {
    if (aircraft < 2) throw std::invalid_argument("synthetic scenarios need >= 2 aircraft");
    if (duration_steps < t_obs + t_pred)
        throw std::invalid_argument("duration_steps must cover t_obs + t_pred");
    if (noise < 0.0) throw std::invalid_argument("noise must be >= 0");
}

std::vector<TrackPoint> generate_tracks(const SyntheticSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    std::vector<Path> paths;
    switch (spec.kind) {
        case ScenarioKind::Crossing: paths = crossing_paths(spec.aircraft, spec.duration_steps, rng); break;
        case ScenarioKind::Merge: paths = merge_paths(spec.aircraft, spec.duration_steps, rng); break;
        case ScenarioKind::ApproachFunnel: paths = funnel_paths(spec.aircraft, spec.duration_steps, rng); break;
        case ScenarioKind::ClimbConflict: paths = climb_paths(spec.aircraft, spec.duration_steps, rng); break;
    }

    // Anchor the local frame at a plausible terminal area.
    const double lon0 = -71.0, lat0 = 42.4;

    double spread[3] = {0.0, 0.0, 0.0};
    if (spec.noise > 0.0) {
        for (int c = 0; c < 3; ++c) {
            double sum = 0.0, sq = 0.0;
            int64_t count = 0;
            for (const Path& p : paths)
                for (int64_t t = 0; t < spec.duration_steps; ++t) {
                    const double v = c == 0 ? p.lon[t] : c == 1 ? p.lat[t] : p.alt[t];
                    sum += v;
                    sq += v * v;
                    ++count;
                }
            const double mean = sum / static_cast<double>(count);
            spread[c] = std::sqrt(std::max(0.0, sq / static_cast<double>(count) - mean * mean));
        }
    }

    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<TrackPoint> points;
    for (size_t i = 0; i < paths.size(); ++i) {
        char id[16];
        std::snprintf(id, sizeof(id), "AC%02u", static_cast<unsigned>(i));
        for (int64_t t = 0; t < spec.duration_steps; ++t) {
            TrackPoint p;
            p.timestamp = t * kStepSeconds;
            p.aircraft_id = id;
            p.lon = lon0 + paths[i].lon[t];
            p.lat = lat0 + paths[i].lat[t];
            p.alt = paths[i].alt[t];
            if (spec.noise > 0.0) {
                p.lon += gauss(rng) * spec.noise * spread[0];
                p.lat += gauss(rng) * spec.noise * spread[1];
                p.alt += gauss(rng) * spec.noise * spread[2];
            }
            points.push_back(std::move(p));
        }
    }
    return points;
}

std::vector<Scene> generate_scenes(const SyntheticSpec& spec, const CutConfig& cut,
                                   int64_t instances, int64_t source_base) {
    spec.validate(cut.t_obs, cut.t_pred);
    std::vector<Scene> scenes;
    for (int64_t k = 0; k < instances; ++k) {
        SyntheticSpec inst = spec;
        inst.seed = spec.seed + 0x9e3779b97f4a7c15ULL * static_cast<uint64_t>(k + 1);
        auto points = generate_tracks(inst);
        auto series = resample_to_grid(points);
        auto cut_result = cut_scenes(series, cut);
        for (Scene& s : cut_result) {
            s.source_id = source_base + k;
            scenes.push_back(std::move(s));
        }
    }
    return scenes;
}

}  // namespace dastgcn
