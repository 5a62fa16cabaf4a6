#pragma once

#include <string>
#include <vector>

#include "flow4d/datagen.hpp"
#include "flow4d/policy.hpp"
#include "flow4d/trainer.hpp"

namespace flow4d {

// Dataset container: header "F4DD" (version, K, N, D_obs, H, pair count),
// NormStats, then one record per training pair. Flow targets are stored in
// normalized coordinates; goal positions and proprioception stay in world
// units.
struct DatasetRecord {
    Mat observation;   // 1 x D_obs
    int task_id = 0;
    Mat query_points;  // N x 2
    FlowTensor flow;   // normalized
    Mat proprio;       // 1 x 4
    ActionChunk expert_chunk;
    Vec3 goal_pos{0, 0, 0};
    uint32_t seg_start = 0, seg_end = 0, condition_frame = 0;
};

struct Dataset {
    int K = 0, N = 0, D_obs = 0, H = 0;
    NormStats stats;
    std::vector<DatasetRecord> records;
};

Dataset build_dataset(const std::vector<TrainingPair>& pairs, int K, int N, int H);

void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path);

TrainSample to_train_sample(const DatasetRecord& rec, const Featurizer& fz);
PolicySample to_policy_sample(const DatasetRecord& rec, const NormStats& stats);

}  // namespace flow4d
