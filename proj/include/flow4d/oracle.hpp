#pragma once

#include "flow4d/datagen.hpp"

namespace flow4d {

// Ground-truth reference components built on the scripted expert. Both
// reconstruct the world from the observation vector, which carries the
// complete state by construction.

// Rolls the expert from the observed state to the next gripper transition
// (or settle) and emits the true resampled keypoint flow toward that goal.
FlowTensor oracle_plan(const Mat& obs, const TaskSpec& task, const WorldConfig& wc, int K, int N,
                       double gamma, int horizon_cap = 500);

// Next H expert actions from the observed state.
ActionChunk expert_action_chunk(const Mat& obs, const TaskSpec& task, const WorldConfig& wc,
                                int H);

}  // namespace flow4d
