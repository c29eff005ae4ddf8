#include "dastgcn/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace dastgcn {

namespace {

constexpr double kFeetToMeters = 0.3048;
constexpr double kMinScale = 1e-6;

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        // trim surrounding whitespace
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        fields.push_back(b == std::string::npos ? "" : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

bool parse_int(const std::string& s, int64_t& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    try {
        size_t pos = 0;
        out = std::stod(s, &pos);
        return pos == s.size();
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace

ParseResult parse_track_file(const std::string& path, const CsvSchema& schema) {
    std::ifstream is(path);
    if (!is) throw IngestError("cannot open track file: " + path);

    std::string header_line;
    if (!std::getline(is, header_line)) throw IngestError("empty file: " + path);
    const auto header = split_csv_line(header_line);

    auto column = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw IngestError("header of " + path + " lacks column '" + name + "'");
        return static_cast<size_t>(it - header.begin());
    };
    const size_t c_ts = column(schema.timestamp);
    const size_t c_id = column(schema.aircraft_id);
    const size_t c_lon = column(schema.lon);
    const size_t c_lat = column(schema.lat);
    const size_t c_alt = column(schema.alt);
    const size_t needed = std::max({c_ts, c_id, c_lon, c_lat, c_alt}) + 1;

    ParseResult result;
    std::string line;
    int64_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto fields = split_csv_line(line);
        auto reject = [&](const std::string& reason) {
            result.row_errors.push_back({line_no, reason});
        };
        if (fields.size() < needed) {
            reject("expected at least " + std::to_string(needed) + " fields, got " +
                   std::to_string(fields.size()));
            continue;
        }
        TrackPoint p;
        if (!parse_int(fields[c_ts], p.timestamp)) {
            reject("bad timestamp '" + fields[c_ts] + "'");
            continue;
        }
        p.aircraft_id = fields[c_id];
        if (p.aircraft_id.empty()) {
            reject("empty aircraft id");
            continue;
        }
        if (!parse_double(fields[c_lon], p.lon) || !parse_double(fields[c_lat], p.lat) ||
            !parse_double(fields[c_alt], p.alt)) {
            reject("non-numeric coordinate");
            continue;
        }
        if (schema.alt_feet) p.alt *= kFeetToMeters;
        if (!(p.lon >= -180.0 && p.lon <= 180.0)) {
            reject("lon " + fields[c_lon] + " outside [-180, 180]");
            continue;
        }
        if (!(p.lat >= -90.0 && p.lat <= 90.0)) {
            reject("lat " + fields[c_lat] + " outside [-90, 90]");
            continue;
        }
        if (!std::isfinite(p.alt)) {
            reject("non-finite altitude");
            continue;
        }
        result.points.push_back(std::move(p));
    }
    if (result.points.empty() && result.row_errors.empty())
        throw IngestError("empty file: " + path);

    std::stable_sort(result.points.begin(), result.points.end(),
                     [](const TrackPoint& a, const TrackPoint& b) {
                         if (a.aircraft_id != b.aircraft_id) return a.aircraft_id < b.aircraft_id;
                         return a.timestamp < b.timestamp;
                     });
    // Drop later duplicates of the same (id, timestamp); stable sort keeps
    // file order within ties, so the first occurrence wins.
    auto last = std::unique(result.points.begin(), result.points.end(),
                            [](const TrackPoint& a, const TrackPoint& b) {
                                return a.aircraft_id == b.aircraft_id &&
                                       a.timestamp == b.timestamp;
                            });
    result.duplicates_dropped = result.points.end() - last;
    result.points.erase(last, result.points.end());
    return result;
}

std::vector<TrackSeries> resample_to_grid(const std::vector<TrackPoint>& points,
                                          const ResampleConfig& cfg) {
    if (cfg.step_seconds <= 0) throw IngestError("step_seconds must be positive");

    // Encoded ids ascend over the sorted raw identifiers.
    std::map<std::string, std::vector<const TrackPoint*>> by_id;
    for (const TrackPoint& p : points) by_id[p.aircraft_id].push_back(&p);

    std::vector<TrackSeries> out;
    int32_t index = 0;
    for (auto& [id, reports] : by_id) {
        const int32_t aircraft_index = index++;
        std::sort(reports.begin(), reports.end(),
                  [](const TrackPoint* a, const TrackPoint* b) { return a->timestamp < b->timestamp; });
        if (reports.size() < 2) continue;

        size_t seg_begin = 0;
        for (size_t i = 1; i <= reports.size(); ++i) {
            const bool gap = i == reports.size() ||
                             reports[i]->timestamp - reports[i - 1]->timestamp > cfg.gap_limit_seconds;
            if (!gap) continue;
            // interpolate segment [seg_begin, i)
            const size_t seg_end = i;
            if (seg_end - seg_begin >= 2) {
                const int64_t t_first = reports[seg_begin]->timestamp;
                const int64_t t_last = reports[seg_end - 1]->timestamp;
                // first grid multiple at or after t_first
                int64_t step = t_first / cfg.step_seconds - 1;
                while (step * cfg.step_seconds < t_first) ++step;
                TrackSeries series;
                series.aircraft_index = aircraft_index;
                size_t cursor = seg_begin;
                for (; step * cfg.step_seconds <= t_last; ++step) {
                    const int64_t t = step * cfg.step_seconds;
                    while (cursor + 1 < seg_end && reports[cursor + 1]->timestamp < t) ++cursor;
                    const TrackPoint& a = *reports[cursor];
                    const TrackPoint& b = *reports[std::min(cursor + 1, seg_end - 1)];
                    const double span = static_cast<double>(b.timestamp - a.timestamp);
                    const double w = span > 0.0 ? static_cast<double>(t - a.timestamp) / span : 0.0;
                    GridSample s;
                    s.step = step;
                    s.lon = a.lon + w * (b.lon - a.lon);
                    s.lat = a.lat + w * (b.lat - a.lat);
                    s.alt = a.alt + w * (b.alt - a.alt);
                    series.samples.push_back(s);
                }
                if (series.samples.size() >= 2) out.push_back(std::move(series));
            }
            seg_begin = i;
        }
    }
    return out;
}

Scalers compute_scalers(const Tensor& positions, int64_t t_obs) {
    const int64_t n = positions.dim(2);
    Scalers s;
    for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int64_t t = 0; t < t_obs; ++t)
            for (int64_t i = 0; i < n; ++i) sum += positions.at(c, t, i);
        const double count = static_cast<double>(t_obs * n);
        const double mean = sum / count;
        double sq = 0.0;
        for (int64_t t = 0; t < t_obs; ++t)
            for (int64_t i = 0; i < n; ++i) {
                const double d = positions.at(c, t, i) - mean;
                sq += d * d;
            }
        s.center[static_cast<size_t>(c)] = mean;
        s.scale[static_cast<size_t>(c)] = std::max(std::sqrt(sq / count), kMinScale);
    }
    return s;
}

std::vector<Scene> cut_scenes(const std::vector<TrackSeries>& series, const CutConfig& cfg) {
    if (cfg.t_obs < 1 || cfg.t_pred < 1) throw IngestError("t_obs and t_pred must be >= 1");
    if (cfg.stride < 1) throw IngestError("stride must be >= 1");
    std::vector<Scene> scenes;
    if (series.empty()) return scenes;

    const int64_t total = cfg.t_obs + cfg.t_pred;
    int64_t lo = series[0].samples.front().step;
    int64_t hi = series[0].samples.back().step;
    for (const TrackSeries& s : series) {
        lo = std::min(lo, s.samples.front().step);
        hi = std::max(hi, s.samples.back().step);
    }

    // Segments sorted by aircraft index fix the node ordering.
    std::vector<const TrackSeries*> ordered;
    for (const TrackSeries& s : series) ordered.push_back(&s);
    std::stable_sort(ordered.begin(), ordered.end(),
                     [](const TrackSeries* a, const TrackSeries* b) {
                         if (a->aircraft_index != b->aircraft_index)
                             return a->aircraft_index < b->aircraft_index;
                         return a->samples.front().step < b->samples.front().step;
                     });

    for (int64_t start = lo; start + total - 1 <= hi; start += cfg.stride) {
        std::vector<const TrackSeries*> roster;
        int32_t prev_index = -1;
        for (const TrackSeries* s : ordered) {
            if (s->aircraft_index == prev_index) continue;  // one segment can cover the window
            if (s->samples.front().step <= start && s->samples.back().step >= start + total - 1) {
                roster.push_back(s);
                prev_index = s->aircraft_index;
            }
        }
        if (static_cast<int64_t>(roster.size()) < cfg.min_aircraft) continue;

        Scene scene;
        scene.node_count = static_cast<int64_t>(roster.size());
        scene.t_obs = cfg.t_obs;
        scene.t_pred = cfg.t_pred;
        scene.positions = Tensor({3, total, scene.node_count});
        for (int64_t i = 0; i < scene.node_count; ++i) {
            const TrackSeries& s = *roster[static_cast<size_t>(i)];
            const int64_t offset = start - s.samples.front().step;
            for (int64_t t = 0; t < total; ++t) {
                const GridSample& g = s.samples[static_cast<size_t>(offset + t)];
                scene.positions.at(0, t, i) = g.lon;
                scene.positions.at(1, t, i) = g.lat;
                scene.positions.at(2, t, i) = g.alt;
            }
        }
        scene.scalers = compute_scalers(scene.positions, cfg.t_obs);
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

double normalize_coord(double raw, const Scalers& s, int coord) {
    return (raw - s.center[static_cast<size_t>(coord)]) / s.scale[static_cast<size_t>(coord)];
}

double denormalize_coord(double normalized, const Scalers& s, int coord) {
    return normalized * s.scale[static_cast<size_t>(coord)] + s.center[static_cast<size_t>(coord)];
}

Scene normalize_scene(const Scene& scene) {
    Scene out = scene;
    const int64_t t_total = scene.t_obs + scene.t_pred;
    for (int c = 0; c < 3; ++c)
        for (int64_t t = 0; t < t_total; ++t)
            for (int64_t i = 0; i < scene.node_count; ++i)
                out.positions.at(c, t, i) = normalize_coord(scene.positions.at(c, t, i), scene.scalers, c);
    return out;
}

Scene denormalize_scene(const Scene& scene) {
    Scene out = scene;
    const int64_t t_total = scene.t_obs + scene.t_pred;
    for (int c = 0; c < 3; ++c)
        for (int64_t t = 0; t < t_total; ++t)
            for (int64_t i = 0; i < scene.node_count; ++i)
                out.positions.at(c, t, i) = denormalize_coord(scene.positions.at(c, t, i), scene.scalers, c);
    return out;
}

void save_scene_shard(const std::string& path, const std::vector<Scene>& scenes) {
    nlohmann::ordered_json doc;
    doc["scene_count"] = scenes.size();
    doc["scenes"] = nlohmann::ordered_json::array();
    for (const Scene& s : scenes) {
        nlohmann::ordered_json j;
        j["n"] = s.node_count;
        j["t_obs"] = s.t_obs;
        j["t_pred"] = s.t_pred;
        j["scalers"] = {{"center", s.scalers.center}, {"scale", s.scalers.scale}};
        std::vector<double> values(s.positions.data(), s.positions.data() + s.positions.numel());
        j["positions"] = values;
        j["source_id"] = s.source_id;
        doc["scenes"].push_back(std::move(j));
    }
    std::ofstream os(path);
    if (!os) throw IngestError("cannot write shard: " + path);
    os << doc.dump(1, '\t') << "\n";
}

std::vector<Scene> load_scene_shard(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IngestError("cannot open shard: " + path);
    nlohmann::json doc;
    try {
        is >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw IngestError("bad shard " + path + ": " + e.what());
    }
    std::vector<Scene> scenes;
    for (const auto& j : doc.at("scenes")) {
        Scene s;
        s.node_count = j.at("n").get<int64_t>();
        s.t_obs = j.at("t_obs").get<int64_t>();
        s.t_pred = j.at("t_pred").get<int64_t>();
        for (size_t c = 0; c < 3; ++c) {
            s.scalers.center[c] = j.at("scalers").at("center").at(c).get<double>();
            s.scalers.scale[c] = j.at("scalers").at("scale").at(c).get<double>();
        }
        std::vector<double> values = j.at("positions").get<std::vector<double>>();
        s.positions = Tensor({3, s.t_obs + s.t_pred, s.node_count}, std::move(values));
        s.source_id = j.value("source_id", 0);
        scenes.push_back(std::move(s));
    }
    if (static_cast<size_t>(doc.at("scene_count").get<int64_t>()) != scenes.size())
        throw IngestError("shard " + path + " scene_count disagrees with payload");
    return scenes;
}

std::vector<Scene> load_scene_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::vector<std::string> files;
    if (!fs::is_directory(dir)) throw IngestError("not a directory: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && name.rfind("scenes_", 0) == 0 &&
            name.size() > 5 && name.substr(name.size() - 5) == ".json")
            files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    std::vector<Scene> scenes;
    for (const std::string& f : files) {
        auto part = load_scene_shard(f);
        scenes.insert(scenes.end(), std::make_move_iterator(part.begin()),
                      std::make_move_iterator(part.end()));
    }
    return scenes;
}

}  // namespace dastgcn
