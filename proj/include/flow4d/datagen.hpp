#pragma once

#include <cstdint>
#include <vector>

#include "flow4d/flow_tensor.hpp"
#include "flow4d/world.hpp"

namespace flow4d {

struct DatagenConfig {
    int K = 8;
    int N = 16;
    double gamma = 2.0;
    int persistence = 3;
    int min_len = 4;
    int pairs_per_segment = 4;
    double jitter_rate = 0.02;
    int episode_cap = 600;
    int settle_steps = 10;
    int H = 20;  // expert action chunk horizon recorded per pair

    void validate() const;
};

// One demonstration. Row t of each matrix describes the world before
// action t is applied; gripper_signal is the (possibly jittered) gripper
// state series used for segmentation.
struct Episode {
    int length = 0;
    int task_id = 0;
    std::vector<double> gripper_signal;  // length
    Mat tracks;                          // length x (N*3), keypoint n at cols [3n, 3n+3)
    Mat observations;                    // length x kDObs
    Mat actions;                         // length x 4

    double track(int t, int n, int d) const { return tracks(t, 3 * n + d); }
};

// Fixed zero-mean rigid keypoint offsets around the gripper center.
Mat keypoint_offsets(int N);

Episode gen_synthetic_episode(const TaskSpec& task, const WorldConfig& wc,
                              const DatagenConfig& cfg, uint64_t seed);

// b_t = 1 exactly when g_t > 0
std::vector<uint8_t> binarize_gripper(const std::vector<double>& g);

struct AtomicSegment {
    int start = 0;
    int end = 0;
    int gripper_state = 0;
};

// Persistence-gated boundary detection over the binarized series, with
// short segments merged into their neighbor. The result partitions
// [0, H_ep-1]; a series without a stable transition stays one segment.
std::vector<AtomicSegment> segment_atomic(const std::vector<uint8_t>& b, int persistence,
                                          int min_len);

// t_k = floor(s + (k/(K-1))^gamma * (e - s)) with s = start_override.
std::vector<int> resample_keyframes(const AtomicSegment& segment, int start_override, int K,
                                    double gamma);

FlowTensor extract_flow_target(const Episode& ep, const std::vector<int>& keyframes);

struct FilterConfig {
    double static_threshold = 0.02;
    double outlier_mad_k = 6.0;
    double delta_max = 0.5;

    void validate() const;
};

// Three-stage track filter: (i) near-static removal by total path length,
// (ii) MAD outlier rejection on surviving path lengths (ties kept),
// (iii) inter-frame displacement cap. Returns the keep mask.
std::vector<uint8_t> filter_tracks(const Mat& tracks, const FilterConfig& cfg);

struct TrainingPair {
    int condition_frame = 0;
    Mat observation;   // 1 x kDObs
    int task_id = 0;
    Mat query_points;  // N x 2
    FlowTensor target; // raw world units
    AtomicSegment segment;
    Mat proprio;       // 1 x 4
    ActionChunk expert_chunk;
    Vec3 goal_pos{0, 0, 0};  // gripper position at the segment goal frame
};

std::vector<TrainingPair> build_training_pairs(const Episode& ep, const DatagenConfig& cfg,
                                               uint64_t seed);

}  // namespace flow4d
