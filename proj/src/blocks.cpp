#include "flow4d/blocks.hpp"

#include <cmath>
#include <stdexcept>

namespace flow4d {

void NetConfig::validate() const {
    if (C < 1 || heads < 1 || C % heads != 0)
        throw std::invalid_argument("NetConfig: C must be a positive multiple of heads");
    if (n_local < 1 || n_3d < 1 || resampler_blocks < 1 || dit_depth < 1 || n_patch < 1 ||
        K < 1 || N < 1 || D_obs < 1 || D_teacher < 1 || n_tasks < 1)
        throw std::invalid_argument("NetConfig: counts must be >= 1");
    if (cross_blocks < 0 || cross_blocks > dit_depth)
        throw std::invalid_argument("NetConfig: cross_blocks out of range");
}

Featurizer Featurizer::make(const NetConfig& cfg) {
    Featurizer f;
    f.n_patch = cfg.n_patch;
    f.C = cfg.C;
    Rng rng(cfg.featurizer_seed);
    double sd = 1.0 / std::sqrt(static_cast<double>(cfg.D_obs));
    f.patch_proj = Mat(cfg.D_obs, cfg.n_patch * cfg.C);
    for (long c = 0; c < f.patch_proj.cols(); ++c)
        for (long r = 0; r < f.patch_proj.rows(); ++r) f.patch_proj(r, c) = sd * rng.normal();
    f.teacher_proj = Mat(cfg.D_obs, cfg.D_teacher);
    for (long c = 0; c < f.teacher_proj.cols(); ++c)
        for (long r = 0; r < f.teacher_proj.rows(); ++r) f.teacher_proj(r, c) = sd * rng.normal();
    f.text_table = Mat(cfg.n_tasks, cfg.C);
    for (long c = 0; c < f.text_table.cols(); ++c)
        for (long r = 0; r < f.text_table.rows(); ++r) f.text_table(r, c) = rng.normal();
    return f;
}

Mat Featurizer::tokens(const Mat& obs_row) const {
    if (obs_row.rows() != 1 || obs_row.cols() != patch_proj.rows())
        throw std::invalid_argument("Featurizer: observation width mismatch");
    Mat flat = obs_row * patch_proj;  // 1 x n_patch*C
    Mat out(n_patch, C);
    for (int p = 0; p < n_patch; ++p)
        for (int c = 0; c < C; ++c) out(p, c) = flat(0, static_cast<long>(p) * C + c);
    return out;
}

Mat Featurizer::teacher(const Mat& obs_row) const {
    if (obs_row.rows() != 1 || obs_row.cols() != teacher_proj.rows())
        throw std::invalid_argument("Featurizer: observation width mismatch");
    return obs_row * teacher_proj;
}

Mat Featurizer::text(int task_id) const {
    if (task_id < 0 || task_id >= text_table.rows())
        throw std::invalid_argument("unknown task_id: " + std::to_string(task_id));
    return text_table.row(task_id);
}

ParamStore init_params(const NetConfig& cfg, uint64_t seed) {
    cfg.validate();
    ParamStore P;
    Rng rng(seed);
    const int C = cfg.C;

    // condition encoders
    P.init_zeros("enc.local_q", cfg.n_local, C);
    P.init_attention(rng, "enc.local_attn", C);
    P.init_linear(rng, "enc.point_mlp1", 2, C);
    P.init_linear(rng, "enc.point_mlp2", C, C);
    P.init_zeros("enc.point_anchor", 1, C);
    P.init_attention(rng, "enc.point_attn", C);

    // 3D resampler
    P.init_zeros("prc.q3d", cfg.n_3d, C);
    for (int s = 0; s < cfg.resampler_blocks; ++s) {
        std::string b = "prc.b" + std::to_string(s);
        P.init_attention(rng, b + ".attn", C);
        P.init_linear(rng, b + ".ff1", C, 4 * C);
        P.init_linear(rng, b + ".ff2", 4 * C, C);
    }
    P.init_linear(rng, "prc.proj1", C, C);
    P.init_linear(rng, "prc.proj2", C, C);

    // DiT trunk
    P.init_linear(rng, "dit.in", 3, C);
    P.init_embedding(rng, "dit.pos_frame", cfg.K, C);
    P.init_embedding(rng, "dit.pos_point", cfg.N, C);
    P.init_linear(rng, "dit.time1", C, C);
    P.init_linear(rng, "dit.time2", C, C);
    for (int i = 0; i < cfg.dit_depth; ++i) {
        std::string b = "dit.b" + std::to_string(i);
        bool cross = i < cfg.cross_blocks;
        P.init_linear_zero(b + ".mod", 5 * C, (cross ? 9 : 6) * C);
        P.init_attention(rng, b + ".fattn", C);
        P.init_attention(rng, b + ".pattn", C);
        if (cross) P.init_attention(rng, b + ".cross", C);
        P.init_linear(rng, b + ".mlp1", C, 4 * C);
        P.init_linear(rng, b + ".mlp2", 4 * C, C);
    }
    P.init_zeros("dit.null_cond", 1, 4 * C);
    P.init_linear(rng, "dit.fin1", C, C);
    P.init_linear_zero("dit.fin2", C, 3);

    // teacher-space projector for the alignment loss
    P.init_linear(rng, "align.proj", C, cfg.D_teacher);
    return P;
}

Var linear(Tape& t, Var x, ParamStore& P, const std::string& prefix) {
    return t.rowadd(t.matmul(x, t.param(P, prefix + ".w")), t.param(P, prefix + ".b"));
}

Var mlp2(Tape& t, Var x, ParamStore& P, const std::string& p1, const std::string& p2) {
    return linear(t, t.gelu(linear(t, x, P, p1)), P, p2);
}

Var mha(Tape& t, Var q, Var k, Var v, ParamStore& P, const std::string& prefix, int heads,
        std::shared_ptr<const Mat> mask) {
    const long C = t.val(q).cols();
    if (t.val(k).cols() != C || t.val(v).cols() != C || t.val(k).rows() != t.val(v).rows())
        throw std::runtime_error("mha: shape mismatch");
    if (C % heads != 0) throw std::runtime_error("mha: C not divisible by heads");
    const int dh = static_cast<int>(C) / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Var qp = linear(t, q, P, prefix + ".q");
    Var kp = t.matmul(k, t.param(P, prefix + ".k.w"));
    Var vp = linear(t, v, P, prefix + ".v");

    Var merged{-1};
    for (int h = 0; h < heads; ++h) {
        Var qh = t.slice_cols(qp, h * dh, dh);
        Var kh = t.slice_cols(kp, h * dh, dh);
        Var vh = t.slice_cols(vp, h * dh, dh);
        Var scores = t.scale(t.matmul(qh, t.transpose(kh)), inv_sqrt_dh);
        Var att = t.softmax_rows(scores, mask);
        Var oh = t.matmul(att, vh);
        merged = (h == 0) ? oh : t.concat_cols(merged, oh);
    }
    return linear(t, merged, P, prefix + ".o");
}

Var attention_pool(Tape& t, Var tokens, ParamStore& P, const std::string& attn_prefix,
                   const std::string& anchor_name, int heads) {
    Var anchor = t.param(P, anchor_name);
    return mha(t, anchor, tokens, tokens, P, attn_prefix, heads);
}

Var perceiver_resample(Tape& t, Var context, ParamStore& P, const NetConfig& cfg) {
    Var lat = t.param(P, "prc.q3d");
    for (int s = 0; s < cfg.resampler_blocks; ++s) {
        std::string b = "prc.b" + std::to_string(s);
        Var h = t.layernorm_rows(lat);
        lat = t.add(lat, mha(t, h, context, context, P, b + ".attn", cfg.heads));
        Var f = t.layernorm_rows(lat);
        lat = t.add(lat, mlp2(t, f, P, b + ".ff1", b + ".ff2"));
    }
    Var pooled = t.mean_rows(lat);
    return mlp2(t, pooled, P, "prc.proj1", "prc.proj2");
}

CondVars encode_condition(Tape& t, const Mat& obs_row, int task_id, const Mat* query_points,
                          ParamStore& P, const Featurizer& fz, const NetConfig& cfg) {
    if (!obs_row.allFinite()) throw std::invalid_argument("encode_condition: non-finite observation");
    Var toks = t.constant(fz.tokens(obs_row));
    CondVars out;
    out.g = t.mean_rows(toks);
    Var q_local = t.param(P, "enc.local_q");
    out.context = mha(t, q_local, toks, toks, P, "enc.local_attn", cfg.heads);
    out.t3d = perceiver_resample(t, out.context, P, cfg);
    if (query_points != nullptr) {
        if (query_points->cols() != 2) throw std::invalid_argument("query points must be n x 2");
        Var pt = t.constant(*query_points);
        Var ptok = mlp2(t, pt, P, "enc.point_mlp1", "enc.point_mlp2");
        out.q = attention_pool(t, ptok, P, "enc.point_attn", "enc.point_anchor", cfg.heads);
    } else {
        out.q = t.constant(Mat::Zero(1, cfg.C));
    }
    out.t_text = t.constant(fz.text(task_id));
    out.fused = t.concat_cols(t.concat_cols(out.g, out.t3d), t.concat_cols(out.q, out.t_text));
    return out;
}

ConditionBundle encode_condition_values(const Mat& obs_row, int task_id, const Mat* query_points,
                                        ParamStore& P, const Featurizer& fz, const NetConfig& cfg) {
    Tape t;
    CondVars v = encode_condition(t, obs_row, task_id, query_points, P, fz, cfg);
    ConditionBundle b;
    b.g = t.val(v.g);
    b.t3d = t.val(v.t3d);
    b.q = t.val(v.q);
    b.t_text = t.val(v.t_text);
    b.context = t.val(v.context);
    b.fused = t.val(v.fused);
    return b;
}

AttnMasks AttnMasks::make(int K, int N) {
    const int n = K * N;
    auto frame = std::make_shared<Mat>(n, n);
    auto point = std::make_shared<Mat>(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            (*frame)(i, j) = (i % N == j % N) ? 0.0 : -1e30;
            (*point)(i, j) = (i / N == j / N) ? 0.0 : -1e30;
        }
    AttnMasks m;
    m.frame = frame;
    m.point = point;
    return m;
}

namespace {

struct Modulation {
    Var shift, scl, gate;
};

Modulation slice_mod(Tape& t, Var mod, int idx, int C) {
    Modulation m;
    m.shift = t.slice_cols(mod, (3 * idx + 0) * C, C);
    m.scl = t.slice_cols(mod, (3 * idx + 1) * C, C);
    m.gate = t.slice_cols(mod, (3 * idx + 2) * C, C);
    return m;
}

Var modulate(Tape& t, Var x, const Modulation& m) {
    return t.rowadd(t.rowmul(x, t.add_scalar(m.scl, 1.0)), m.shift);
}

}  // namespace

Var dit_block(Tape& t, Var tokens, Var cond4c, Var time_emb, std::optional<Var> context,
              bool with_cross, ParamStore& P, const std::string& prefix, const NetConfig& cfg,
              const AttnMasks& masks) {
    const int C = cfg.C;
    Var mod_in = t.concat_cols(cond4c, time_emb);  // 1 x 5C
    Var mod = linear(t, mod_in, P, prefix + ".mod");
    int slot = 0;

    // spatiotemporal attention: frame axis then keypoint axis, one residual
    Modulation m1 = slice_mod(t, mod, slot++, C);
    Var h = modulate(t, t.layernorm_rows(tokens), m1);
    Var a = mha(t, h, h, h, P, prefix + ".fattn", cfg.heads, masks.frame);
    a = mha(t, a, a, a, P, prefix + ".pattn", cfg.heads, masks.point);
    tokens = t.add(tokens, t.rowmul(a, m1.gate));

    if (with_cross) {
        if (!context) throw std::runtime_error("dit_block: cross-attention requires context");
        Modulation mc = slice_mod(t, mod, slot++, C);
        Var hc = modulate(t, t.layernorm_rows(tokens), mc);
        Var ca = mha(t, hc, *context, *context, P, prefix + ".cross", cfg.heads);
        tokens = t.add(tokens, t.rowmul(ca, mc.gate));
    }

    Modulation m2 = slice_mod(t, mod, slot++, C);
    Var h2 = modulate(t, t.layernorm_rows(tokens), m2);
    Var f = mlp2(t, h2, P, prefix + ".mlp1", prefix + ".mlp2");
    return t.add(tokens, t.rowmul(f, m2.gate));
}

Mat sinusoidal_embedding(double t, int dim) {
    Mat e(1, dim);
    int half = dim / 2;
    for (int j = 0; j < half; ++j) {
        double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / half);
        e(0, j) = std::sin(t * freq);
        e(0, half + j) = std::cos(t * freq);
    }
    if (dim % 2 == 1) e(0, dim - 1) = 0.0;
    return e;
}

Var timestep_embedding(Tape& t, double step, ParamStore& P, const NetConfig& cfg) {
    Var s = t.constant(sinusoidal_embedding(step, cfg.C));
    return linear(t, t.silu(linear(t, s, P, "dit.time1")), P, "dit.time2");
}

}  // namespace flow4d
