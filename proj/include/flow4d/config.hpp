#pragma once

#include <string>

#include "flow4d/blocks.hpp"
#include "flow4d/datagen.hpp"
#include "flow4d/policy.hpp"
#include "flow4d/schedule.hpp"
#include "flow4d/world.hpp"

namespace flow4d {

// Flat key=value configuration covering every tunable in the pipeline.
// Unknown keys are rejected; values are checked by the owning module's
// validate() when views are built.
struct Config {
    // data generation
    int K = 8, N = 16;
    double gamma = 2.0;
    int persistence = 3, min_len = 4, pairs_per_segment = 4;
    double jitter_rate = 0.02;
    int episode_cap = 600, settle_steps = 10;

    // network
    int C = 64, heads = 4, n_local = 8, n_3d = 4, resampler_blocks = 2, dit_depth = 4,
        cross_blocks = 2, n_patch = 16, D_teacher = 32, n_tasks = 8;
    uint64_t featurizer_seed = 9001;

    // diffusion
    int T = 100;
    std::string schedule = "cosine";
    double p_uncond = 0.1, guidance_w = 2.0, lambda_align = 0.1, lambda_smooth = 0.05,
           charbonnier_eps = 1e-3;
    int sampler_steps = 20;

    // planner training
    double lr = 3e-4;
    int batch = 4;
    double clip = 1.0;
    int steps = 4000;

    // policy
    int H = 20, C_cond = 64, C_base = 64, policy_hidden = 64, task_emb = 16;
    double policy_lr = 1e-3;
    int policy_batch = 16, policy_steps = 3000;
    int use_flow = 1;
    int on_plan = 0;

    // world
    double grasp_radius = 0.05, max_step = 0.02, goal_tol = 0.05, object_radius = 0.03;

    // closed loop
    int r = 2, plan_limit = 12, step_limit = 2000, threads = 2;

    NetConfig net() const;
    PolicyConfig policy() const;
    WorldConfig world() const;
    DatagenConfig datagen() const;
    LossWeights loss_weights() const;
    AdamConfig planner_opt() const;
    AdamConfig policy_opt() const;

    void set(const std::string& key, const std::string& value);  // throws on unknown key
    void validate() const;

    std::string to_string() const;
    static Config from_string(const std::string& text);
    static Config from_file(const std::string& path);

    // fields that must agree between a checkpoint and the active run
    bool architecture_matches(const Config& other) const;
};

}  // namespace flow4d
