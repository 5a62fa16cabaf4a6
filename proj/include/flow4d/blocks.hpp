#pragma once

#include <memory>
#include <optional>
#include <string>

#include "flow4d/param_store.hpp"
#include "flow4d/tape.hpp"

namespace flow4d {

struct NetConfig {
    int C = 64;
    int heads = 4;
    int n_local = 8;
    int n_3d = 4;
    int resampler_blocks = 2;
    int dit_depth = 4;
    int cross_blocks = 2;  // leading DiT blocks with context cross-attention
    int n_patch = 16;
    int K = 8;   // keyframes in the token grid
    int N = 16;  // keypoints in the token grid
    int D_obs = 23;
    int D_teacher = 32;
    int n_tasks = 8;
    uint64_t featurizer_seed = 9001;

    void validate() const;
};

// Frozen stand-ins for the pretrained encoders: a random patch projection
// of the observation vector, a random teacher projection, and a fixed text
// embedding table. Derived deterministically from featurizer_seed; never
// stored in the ParamStore and never updated.
struct Featurizer {
    Mat patch_proj;    // D_obs x (n_patch*C)
    Mat teacher_proj;  // D_obs x D_teacher
    Mat text_table;    // n_tasks x C
    int n_patch = 0;
    int C = 0;

    static Featurizer make(const NetConfig& cfg);

    Mat tokens(const Mat& obs_row) const;   // 1 x D_obs -> n_patch x C
    Mat teacher(const Mat& obs_row) const;  // 1 x D_obs -> 1 x D_teacher
    Mat text(int task_id) const;            // 1 x C; throws on unknown id
};

// Full planner parameter set (encoders + resampler + DiT + heads).
ParamStore init_params(const NetConfig& cfg, uint64_t seed);

// x (n x in) * W + b, parameters "<prefix>.w" / "<prefix>.b".
Var linear(Tape& t, Var x, ParamStore& P, const std::string& prefix);

// Two-layer perceptron with GELU between "<p1>" and "<p2>".
Var mlp2(Tape& t, Var x, ParamStore& P, const std::string& p1, const std::string& p2);

// Multi-head scaled dot-product attention with output projection.
// Optional additive mask (0 = keep, large negative = block) on the
// n_q x n_k score matrix, shared across heads.
Var mha(Tape& t, Var q, Var k, Var v, ParamStore& P, const std::string& prefix, int heads,
        std::shared_ptr<const Mat> mask = nullptr);

// mha with a learnable single-query anchor; pools n tokens to 1 x C.
Var attention_pool(Tape& t, Var tokens, ParamStore& P, const std::string& attn_prefix,
                   const std::string& anchor_name, int heads);

// Stacked cross-attention + feed-forward blocks over learnable queries,
// mean-pooled and projected to a single 1 x C vector.
Var perceiver_resample(Tape& t, Var context, ParamStore& P, const NetConfig& cfg);

struct CondVars {
    Var g;       // 1 x C
    Var t3d;     // 1 x C
    Var q;       // 1 x C
    Var t_text;  // 1 x C
    Var context; // n_local x C
    Var fused;   // 1 x 4C
};

// Plain-value view of an encoded condition for interfaces and tests.
struct ConditionBundle {
    Mat g, t3d, q, t_text, context, fused;
};

CondVars encode_condition(Tape& t, const Mat& obs_row, int task_id, const Mat* query_points,
                          ParamStore& P, const Featurizer& fz, const NetConfig& cfg);

ConditionBundle encode_condition_values(const Mat& obs_row, int task_id, const Mat* query_points,
                                        ParamStore& P, const Featurizer& fz, const NetConfig& cfg);

// Block-diagonal attention masks for the K x N token grid (row = k*N + n).
struct AttnMasks {
    std::shared_ptr<const Mat> frame;  // attend across frames, same keypoint
    std::shared_ptr<const Mat> point;  // attend across keypoints, same frame
    static AttnMasks make(int K, int N);
};

// AdaLN-modulated DiT block: factorized frame/keypoint attention, optional
// context cross-attention, per-token MLP. Identity map when the modulation
// parameters are zero.
Var dit_block(Tape& t, Var tokens, Var cond4c, Var time_emb, std::optional<Var> context,
              bool with_cross, ParamStore& P, const std::string& prefix, const NetConfig& cfg,
              const AttnMasks& masks);

Mat sinusoidal_embedding(double t, int dim);  // 1 x dim

Var timestep_embedding(Tape& t, double step, ParamStore& P, const NetConfig& cfg);

}  // namespace flow4d
