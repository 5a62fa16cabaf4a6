#include "flow4d/denoiser.hpp"

#include <stdexcept>

namespace flow4d {

Var denoise_v(Tape& t, Var x_t, int step, const CondVars& cond, bool drop_cond, ParamStore& P,
              const NetConfig& cfg, const AttnMasks& masks) {
    const int n_tok = cfg.K * cfg.N;
    if (t.val(x_t).rows() != n_tok || t.val(x_t).cols() != 3)
        throw std::invalid_argument("denoise_v: expected (K*N) x 3 input");

    std::vector<int> frame_idx(n_tok), point_idx(n_tok);
    for (int i = 0; i < n_tok; ++i) {
        frame_idx[i] = i / cfg.N;
        point_idx[i] = i % cfg.N;
    }

    Var tok = linear(t, x_t, P, "dit.in");
    tok = t.add(tok, t.gather_rows(t.param(P, "dit.pos_frame"), frame_idx));
    tok = t.add(tok, t.gather_rows(t.param(P, "dit.pos_point"), point_idx));

    Var time = timestep_embedding(t, static_cast<double>(step), P, cfg);
    Var c = drop_cond ? t.param(P, "dit.null_cond") : cond.fused;

    for (int b = 0; b < cfg.dit_depth; ++b) {
        bool cross = b < cfg.cross_blocks;
        tok = dit_block(t, tok, c, time, cond.context, cross, P, "dit.b" + std::to_string(b),
                        cfg, masks);
    }

    Var h = t.layernorm_rows(tok);
    h = t.gelu(linear(t, h, P, "dit.fin1"));
    return linear(t, h, P, "dit.fin2");
}

Mat denoise_v_values(const Mat& x_t, int step, const Mat& obs_row, int task_id,
                     const Mat* query_points, bool drop_cond, ParamStore& P,
                     const Featurizer& fz, const NetConfig& cfg, const AttnMasks& masks) {
    Tape t;
    CondVars cond = encode_condition(t, obs_row, task_id, query_points, P, fz, cfg);
    Var v = denoise_v(t, t.constant(x_t), step, cond, drop_cond, P, cfg, masks);
    return t.val(v);
}

}  // namespace flow4d
