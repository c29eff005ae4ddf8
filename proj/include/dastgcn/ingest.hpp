#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dastgcn/tensor.hpp"

namespace dastgcn {

class IngestError : public std::runtime_error {
public:
    explicit IngestError(const std::string& what) : std::runtime_error(what) {}
};

/// One ADS-B position report.
struct TrackPoint {
    int64_t timestamp = 0;  // seconds since epoch
    std::string aircraft_id;
    double lon = 0.0;  // degrees
    double lat = 0.0;  // degrees
    double alt = 0.0;  // meters
};

struct RowError {
    int64_t line = 0;  // 1-based, header is line 1
    std::string reason;
};

struct ParseResult {
    std::vector<TrackPoint> points;  // sorted by (aircraft_id, timestamp), deduplicated
    std::vector<RowError> row_errors;
    int64_t duplicates_dropped = 0;
};

/// Column-name mapping for the input CSV. Columns are located by header name;
/// extra columns are ignored.
struct CsvSchema {
    std::string timestamp = "timestamp";
    std::string aircraft_id = "aircraft_id";
    std::string lon = "lon";
    std::string lat = "lat";
    std::string alt = "alt";
    bool alt_feet = false;  // convert ft -> m on ingest
};

ParseResult parse_track_file(const std::string& path, const CsvSchema& schema = {});

/// One contiguous run of uniform grid samples for one aircraft.
struct GridSample {
    int64_t step = 0;  // global index: timestamp / step_seconds
    double lon = 0.0, lat = 0.0, alt = 0.0;
};

struct TrackSeries {
    int32_t aircraft_index = 0;  // encoded id, ascending over sorted raw ids
    std::vector<GridSample> samples;  // consecutive step indices
};

struct ResampleConfig {
    int64_t step_seconds = 10;
    int64_t gap_limit_seconds = 60;  // reports farther apart start a new segment
};

/// Linear interpolation of per-aircraft reports onto the uniform grid.
/// Aircraft with fewer than two reports, and segments covering fewer than two
/// grid points, produce no series.
std::vector<TrackSeries> resample_to_grid(const std::vector<TrackPoint>& points,
                                          const ResampleConfig& cfg = {});

struct Scalers {
    std::array<double, 3> center{0.0, 0.0, 0.0};
    std::array<double, 3> scale{1.0, 1.0, 1.0};
};

/// Fixed-roster window over the uniform grid. Every node has a position at
/// every one of the t_obs + t_pred steps.
struct Scene {
    int64_t node_count = 0;
    int64_t t_obs = 0;
    int64_t t_pred = 0;
    Scalers scalers;
    Tensor positions;  // 3 x (t_obs + t_pred) x node_count, raw units
    int64_t source_id = 0;
};

struct CutConfig {
    int64_t t_obs = 4;
    int64_t t_pred = 6;
    int64_t stride = 1;
    int64_t min_aircraft = 2;
};

/// Sliding-window scene extraction. A scene keeps exactly the aircraft
/// present at every step of the window, ordered by ascending encoded id;
/// scalers come from the observation segment only.
std::vector<Scene> cut_scenes(const std::vector<TrackSeries>& series, const CutConfig& cfg = {});

Scalers compute_scalers(const Tensor& positions, int64_t t_obs);

/// Per-coordinate z-scoring with the scene's scalers. The result keeps the
/// scalers so denormalize_scene restores raw units.
Scene normalize_scene(const Scene& scene);
Scene denormalize_scene(const Scene& scene);

double normalize_coord(double raw, const Scalers& s, int coord);
double denormalize_coord(double normalized, const Scalers& s, int coord);

// Scene shard files: JSON with scene_count then per scene n, t_obs, t_pred,
// scalers, row-major positions.
void save_scene_shard(const std::string& path, const std::vector<Scene>& scenes);
std::vector<Scene> load_scene_shard(const std::string& path);
/// Loads every scenes_*.json shard under a directory, sorted by filename.
std::vector<Scene> load_scene_dir(const std::string& dir);

}  // namespace dastgcn
