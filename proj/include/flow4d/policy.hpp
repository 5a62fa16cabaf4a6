#pragma once

#include <functional>

#include "flow4d/flow_tensor.hpp"
#include "flow4d/trainer.hpp"

namespace flow4d {

struct PolicyConfig {
    int C_cond = 64;
    int C_base = 64;
    int hidden = 64;
    int H = 20;
    int heads = 4;
    int frame_enc = 8;  // sinusoidal frame-index features per flow token
    int task_emb = 16;
    int n_tasks = 8;
    int D_obs = 23;
    bool use_flow = true;  // false: f_flow forced to zero (ablation baseline)

    void validate() const;
};

struct BaseState {
    Mat obs;      // 1 x D_obs
    int task_id = 0;
    Mat proprio;  // 1 x 4: gripper position + open flag
};

ParamStore init_policy_params(const PolicyConfig& cfg, uint64_t seed);

// Sinusoidal frame-index features, (K*N) x dims, attached to every flow
// token; keypoint order within a frame carries no positional signal.
Mat flow_frame_encoding(int K, int N, int dims);

// MLP over position+frame features then attention pooling to 1 x C_cond.
Var encode_flow_var(Tape& t, Var flow_values, int K, int N, ParamStore& P,
                    const PolicyConfig& cfg);

// f_cond = [f_base ; f_flow]
Var fuse_condition_var(Tape& t, const BaseState& base, Var f_flow, ParamStore& P,
                       const PolicyConfig& cfg);

struct PolicyHeadOut {
    Var disp;         // H x 3
    Var grip_logits;  // H x 1
};

PolicyHeadOut policy_forward_var(Tape& t, Var f_cond, ParamStore& P, const PolicyConfig& cfg);

// Full inference path: encode flow, fuse with base state, emit a chunk.
ActionChunk policy_act(const BaseState& base, const FlowTensor& flow, ParamStore& P,
                       const PolicyConfig& cfg);

Mat encode_flow(const FlowTensor& flow, ParamStore& P, const PolicyConfig& cfg);

struct PolicySample {
    BaseState base;
    FlowTensor flow;    // world-unit flow condition (teacher-forcing source)
    ActionChunk expert;
};

// Behavior cloning: squared displacement error plus binary cross-entropy on
// the gripper channel. When plan_fn is set, flow conditions come from it
// (on-plan mode) instead of the stored targets; the planner behind plan_fn
// is never touched by gradients.
MetricsLog bc_train(const std::vector<PolicySample>& data, ParamStore& P,
                    const PolicyConfig& cfg, const AdamConfig& opt, uint64_t seed,
                    const std::function<FlowTensor(const BaseState&)>* plan_fn = nullptr);

}  // namespace flow4d
