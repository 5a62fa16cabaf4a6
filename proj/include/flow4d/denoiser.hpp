#pragma once

#include "flow4d/blocks.hpp"

namespace flow4d {

// Full network forward: noisy flow tokens (K*N x 3) -> predicted v.
// When drop_cond is set the fused condition is replaced by the learned
// null token; the context tokens stay active in both branches.
Var denoise_v(Tape& t, Var x_t, int step, const CondVars& cond, bool drop_cond, ParamStore& P,
              const NetConfig& cfg, const AttnMasks& masks);

// Single conditional forward with fresh condition encoding; inference path.
Mat denoise_v_values(const Mat& x_t, int step, const Mat& obs_row, int task_id,
                     const Mat* query_points, bool drop_cond, ParamStore& P,
                     const Featurizer& fz, const NetConfig& cfg, const AttnMasks& masks);

}  // namespace flow4d
