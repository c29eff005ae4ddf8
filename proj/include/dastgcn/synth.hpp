#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dastgcn/ingest.hpp"

namespace dastgcn {

enum class ScenarioKind { Crossing, Merge, ApproachFunnel, ClimbConflict };

ScenarioKind scenario_from_string(const std::string& name);
std::string scenario_name(ScenarioKind kind);

/// Stand-in for real terminal-area traffic: kinematically smooth tracks with
/// optional Gaussian observation noise. noise is a fraction of each
/// coordinate's clean spread within the instance.
struct SyntheticSpec {
    ScenarioKind kind = ScenarioKind::Crossing;
    int64_t aircraft = 2;
    double noise = 0.0;
    int64_t duration_steps = 10;
    uint64_t seed = 1;

    void validate(int64_t t_obs, int64_t t_pred) const;
};

/// Reports on the 10 s grid for one scenario instance. The crossing scenario
/// places the closest approach of the first two aircraft in the middle of the
/// prediction segment of the first window.
std::vector<TrackPoint> generate_tracks(const SyntheticSpec& spec);

/// Runs `instances` scenario draws through the full resample + cut pipeline.
/// Scene source ids are source_base + instance.
std::vector<Scene> generate_scenes(const SyntheticSpec& spec, const CutConfig& cut,
                                   int64_t instances, int64_t source_base = 0);

}  // namespace dastgcn
