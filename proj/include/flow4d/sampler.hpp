#pragma once

#include "flow4d/denoiser.hpp"
#include "flow4d/schedule.hpp"

namespace flow4d {

struct PlanInput {
    Mat obs;           // 1 x D_obs
    int task_id = 0;
    Mat query_points;  // N x 2; empty means absent
};

// Deterministic DDIM-style reverse pass over a strided timestep subset.
// Classifier-free guidance with scale w; the unconditional branch is never
// evaluated when w == 0. Output is denormalized through stats.
FlowTensor sample_flow(const PlanInput& in, ParamStore& P, const Featurizer& fz,
                       const NetConfig& cfg, const DiffusionSchedule& sched,
                       const NormStats& stats, int steps, double w, uint64_t seed);

// Timestep subset used by the sampler, descending, strictly positive.
std::vector<int> sampler_timesteps(int T, int steps);

}  // namespace flow4d
