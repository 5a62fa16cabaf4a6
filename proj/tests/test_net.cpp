#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flow4d/denoiser.hpp"
#include "flow4d/gradcheck.hpp"
#include "flow4d/trainer.hpp"

using namespace flow4d;

namespace {

NetConfig small_cfg() {
    NetConfig cfg;
    cfg.C = 8;
    cfg.heads = 2;
    cfg.n_local = 3;
    cfg.n_3d = 2;
    cfg.resampler_blocks = 2;
    cfg.dit_depth = 2;
    cfg.cross_blocks = 2;
    cfg.n_patch = 4;
    cfg.K = 3;
    cfg.N = 2;
    cfg.D_obs = 7;
    cfg.D_teacher = 4;
    cfg.n_tasks = 3;
    return cfg;
}

Mat random_mat(Rng& rng, int r, int c, double s = 1.0) {
    Mat m(r, c);
    for (int j = 0; j < c; ++j)
        for (int i = 0; i < r; ++i) m(i, j) = s * rng.normal();
    return m;
}

double max_abs_diff(const Mat& a, const Mat& b) { return (a - b).cwiseAbs().maxCoeff(); }

double gelu_ref(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

TEST_CASE("init_params is deterministic and zero-initializes the learnable queries") {
    NetConfig cfg = small_cfg();
    ParamStore a = init_params(cfg, 5);
    ParamStore b = init_params(cfg, 5);
    CHECK(a.fingerprint() == b.fingerprint());
    ParamStore c = init_params(cfg, 6);
    CHECK(a.fingerprint() != c.fingerprint());

    CHECK(a.get("enc.local_q").cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.get("enc.point_anchor").cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.get("prc.q3d").cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.get("dit.null_cond").cwiseAbs().maxCoeff() == 0.0);
    for (int i = 0; i < cfg.dit_depth; ++i) {
        CHECK(a.get("dit.b" + std::to_string(i) + ".mod.w").cwiseAbs().maxCoeff() == 0.0);
        CHECK(a.get("dit.b" + std::to_string(i) + ".mod.b").cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(a.get("dit.fin2.w").cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("dit block is an exact identity at zero-gate initialization") {
    NetConfig cfg = small_cfg();
    ParamStore P = init_params(cfg, 11);
    AttnMasks masks = AttnMasks::make(cfg.K, cfg.N);
    Rng rng(2);
    Mat toks = random_mat(rng, cfg.K * cfg.N, cfg.C);
    Mat cond = random_mat(rng, 1, 4 * cfg.C);
    Mat time = random_mat(rng, 1, cfg.C);
    Mat ctx = random_mat(rng, cfg.n_local, cfg.C);

    Tape t;
    Var out = dit_block(t, t.input(toks), t.constant(cond), t.constant(time), t.constant(ctx),
                        true, P, "dit.b0", cfg, masks);
    CHECK(max_abs_diff(t.val(out), toks) == 0.0);
}

TEST_CASE("full denoiser emits zero at initialization") {
    NetConfig cfg = small_cfg();
    ParamStore P = init_params(cfg, 11);
    Featurizer fz = Featurizer::make(cfg);
    AttnMasks masks = AttnMasks::make(cfg.K, cfg.N);
    Rng rng(3);
    Mat x_t = random_mat(rng, cfg.K * cfg.N, 3);
    Mat obs = random_mat(rng, 1, cfg.D_obs);
    Mat v = denoise_v_values(x_t, 2, obs, 0, nullptr, false, P, fz, cfg, masks);
    CHECK(v.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mha with a single key returns the output-projected value row") {
    Rng rng(4);
    ParamStore P;
    P.init_attention(rng, "att", 8);
    Mat kv = random_mat(rng, 1, 8);

    Mat expected;
    {
        Tape t;
        Var vp = t.rowadd(t.matmul(t.constant(kv), t.param(P, "att.v.w")), t.param(P, "att.v.b"));
        Var out = t.rowadd(t.matmul(vp, t.param(P, "att.o.w")), t.param(P, "att.o.b"));
        expected = t.val(out);
    }
    for (int trial = 0; trial < 3; ++trial) {
        Mat q = random_mat(rng, 2, 8, 3.0);
        Tape t;
        Var o = mha(t, t.constant(q), t.constant(kv), t.constant(kv), P, "att", 2);
        CHECK(max_abs_diff(t.val(o).row(0), expected) < 1e-12);
        CHECK(max_abs_diff(t.val(o).row(1), expected) < 1e-12);
    }
}

TEST_CASE("attention output is invariant to joint key/value permutation") {
    Rng rng(5);
    ParamStore P;
    P.init_attention(rng, "att", 8);
    Mat q = random_mat(rng, 3, 8);
    Mat kv = random_mat(rng, 6, 8);
    Mat perm(6, 8);
    int order[6] = {4, 0, 5, 2, 1, 3};
    for (int i = 0; i < 6; ++i) perm.row(i) = kv.row(order[i]);

    Tape t;
    Var a = mha(t, t.constant(q), t.constant(kv), t.constant(kv), P, "att", 2);
    Var b = mha(t, t.constant(q), t.constant(perm), t.constant(perm), P, "att", 2);
    CHECK(max_abs_diff(t.val(a), t.val(b)) < 1e-9);
}

TEST_CASE("hand-computed two-token single-head attention") {
    ParamStore P;
    P.create("att.q.w", 2, 2) = Mat::Identity(2, 2);
    P.create("att.q.b", 1, 2);
    P.create("att.k.w", 2, 2) = Mat::Identity(2, 2);
    P.create("att.v.w", 2, 2) = Mat::Identity(2, 2);
    P.create("att.v.b", 1, 2);
    P.create("att.o.w", 2, 2) = Mat::Identity(2, 2);
    P.create("att.o.b", 1, 2);

    Mat q(1, 2);
    q << 1.0, 0.0;
    Mat kv(2, 2);
    kv << 1.0, 0.0, 0.0, 1.0;

    double s0 = 1.0 / std::sqrt(2.0);  // q . k0 / sqrt(d)
    double s1 = 0.0;
    double e0 = std::exp(s0), e1 = std::exp(s1);
    double w0 = e0 / (e0 + e1), w1 = e1 / (e0 + e1);

    Tape t;
    Var o = mha(t, t.constant(q), t.constant(kv), t.constant(kv), P, "att", 1);
    CHECK(t.val(o)(0, 0) == doctest::Approx(w0).epsilon(1e-12));
    CHECK(t.val(o)(0, 1) == doctest::Approx(w1).epsilon(1e-12));
}

TEST_CASE("attention pool: single token, duplication invariance, softmax oracle") {
    Rng rng(6);
    ParamStore P;
    P.init_attention(rng, "pool", 8);
    P.init_zeros("anchor", 1, 8);
    for (long j = 0; j < 8; ++j) P.get("anchor")(0, j) = 0.3 * rng.normal();

    Mat one = random_mat(rng, 1, 8);
    {
        Tape t;
        Var o = attention_pool(t, t.constant(one), P, "pool", "anchor", 2);
        Tape t2;
        Var vp = t2.rowadd(t2.matmul(t2.constant(one), t2.param(P, "pool.v.w")),
                           t2.param(P, "pool.v.b"));
        Var exp = t2.rowadd(t2.matmul(vp, t2.param(P, "pool.o.w")), t2.param(P, "pool.o.b"));
        CHECK(max_abs_diff(t.val(o), t2.val(exp)) < 1e-12);
    }

    Mat toks = random_mat(rng, 4, 8);
    Mat dup(8, 8);
    dup << toks, toks;
    {
        Tape t;
        Var a = attention_pool(t, t.constant(toks), P, "pool", "anchor", 2);
        Var b = attention_pool(t, t.constant(dup), P, "pool", "anchor", 2);
        CHECK(max_abs_diff(t.val(a), t.val(b)) < 1e-9);
    }

    // brute-force per-head softmax pooling oracle
    {
        Tape t;
        Var out = attention_pool(t, t.constant(toks), P, "pool", "anchor", 2);

        Mat anchor = P.get("anchor");
        Mat qp = anchor * P.get("pool.q.w") + P.get("pool.q.b");
        Mat kp = toks * P.get("pool.k.w");
        Mat vp = toks * P.get("pool.v.w");
        vp.rowwise() += P.get("pool.v.b").row(0);
        Mat merged(1, 8);
        int dh = 4;
        for (int h = 0; h < 2; ++h) {
            Eigen::VectorXd scores(4);
            for (int i = 0; i < 4; ++i)
                scores(i) =
                    qp.row(0).segment(h * dh, dh).dot(kp.row(i).segment(h * dh, dh)) /
                    std::sqrt(static_cast<double>(dh));
            double m = scores.maxCoeff();
            Eigen::VectorXd w = (scores.array() - m).exp();
            w /= w.sum();
            Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(dh);
            for (int i = 0; i < 4; ++i) acc += w(i) * vp.row(i).segment(h * dh, dh);
            merged.row(0).segment(h * dh, dh) = acc;
        }
        Mat expected = merged * P.get("pool.o.w") + P.get("pool.o.b");
        CHECK(max_abs_diff(t.val(out), expected) < 1e-12);
    }
}

TEST_CASE("perceiver: zero context at init gives exactly zero") {
    NetConfig cfg = small_cfg();
    ParamStore P = init_params(cfg, 20);
    Tape t;
    Var o = perceiver_resample(t, t.constant(Mat::Zero(cfg.n_local, cfg.C)), P, cfg);
    CHECK(t.val(o).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("perceiver is invariant to context row permutation") {
    NetConfig cfg = small_cfg();
    ParamStore P = init_params(cfg, 21);
    Rng rng(8);
    for (auto& [name, m] : P.all())
        if (name.rfind("prc.", 0) == 0)
            for (long j = 0; j < m.cols(); ++j)
                for (long i = 0; i < m.rows(); ++i) m(i, j) += 0.2 * rng.normal();

    Mat ctx = random_mat(rng, 3, cfg.C);
    Mat perm(3, cfg.C);
    perm.row(0) = ctx.row(2);
    perm.row(1) = ctx.row(0);
    perm.row(2) = ctx.row(1);
    Tape t;
    Var a = perceiver_resample(t, t.constant(ctx), P, cfg);
    Var b = perceiver_resample(t, t.constant(perm), P, cfg);
    CHECK(max_abs_diff(t.val(a), t.val(b)) < 1e-9);
}

TEST_CASE("hand-computed single-block single-query perceiver") {
    NetConfig cfg = small_cfg();
    cfg.C = 2;
    cfg.heads = 1;
    cfg.n_3d = 1;
    cfg.resampler_blocks = 1;

    ParamStore P;
    P.create("prc.q3d", 1, 2);  // zero query
    P.create("prc.b0.attn.q.w", 2, 2) = Mat::Identity(2, 2);
    P.create("prc.b0.attn.q.b", 1, 2);
    P.create("prc.b0.attn.k.w", 2, 2) = Mat::Identity(2, 2);
    P.create("prc.b0.attn.v.w", 2, 2) = Mat::Identity(2, 2);
    P.create("prc.b0.attn.v.b", 1, 2);
    P.create("prc.b0.attn.o.w", 2, 2) = Mat::Identity(2, 2);
    P.create("prc.b0.attn.o.b", 1, 2);
    // feed-forward: first two hidden units pass the input through
    Mat ff1 = Mat::Zero(2, 8);
    ff1(0, 0) = 1.0;
    ff1(1, 1) = 1.0;
    Mat ff2 = Mat::Zero(8, 2);
    ff2(0, 0) = 1.0;
    ff2(1, 1) = 1.0;
    P.create("prc.b0.ff1.w", 2, 8) = ff1;
    P.create("prc.b0.ff1.b", 1, 8);
    P.create("prc.b0.ff2.w", 8, 2) = ff2;
    P.create("prc.b0.ff2.b", 1, 2);
    P.create("prc.proj1.w", 2, 2) = Mat::Identity(2, 2);
    P.create("prc.proj1.b", 1, 2);
    P.create("prc.proj2.w", 2, 2) = Mat::Identity(2, 2);
    P.create("prc.proj2.b", 1, 2);

    Mat ctx(2, 2);
    ctx << 0.5, -0.25, 1.0, 0.75;

    // hand computation with the same layernorm epsilon (1e-6)
    auto ln = [](const Eigen::RowVector2d& x) {
        double mean = (x(0) + x(1)) / 2.0;
        double var = ((x(0) - mean) * (x(0) - mean) + (x(1) - mean) * (x(1) - mean)) / 2.0;
        double rs = 1.0 / std::sqrt(var + 1e-6);
        return Eigen::RowVector2d((x(0) - mean) * rs, (x(1) - mean) * rs);
    };

    Eigen::RowVector2d lat(0.0, 0.0);
    Eigen::RowVector2d q = ln(lat);  // LN(0) = 0
    // scores = q . k_j / sqrt(2) = 0 -> uniform attention
    Eigen::RowVector2d attended = 0.5 * (ctx.row(0) + ctx.row(1));
    lat += attended;  // residual
    Eigen::RowVector2d h = ln(lat);
    Eigen::RowVector2d ff(gelu_ref(h(0)), gelu_ref(h(1)));
    lat += ff;
    // mean pool over the single latent, then identity MLP with gelu between
    Eigen::RowVector2d pooled = lat;
    Eigen::RowVector2d expected(gelu_ref(pooled(0)), gelu_ref(pooled(1)));

    Tape t;
    Var o = perceiver_resample(t, t.constant(ctx), P, cfg);
    CHECK(t.val(o)(0, 0) == doctest::Approx(expected(0)).epsilon(1e-12));
    CHECK(t.val(o)(0, 1) == doctest::Approx(expected(1)).epsilon(1e-12));
}

TEST_CASE("hand-computed single-token dit block") {
    NetConfig cfg = small_cfg();
    cfg.C = 2;
    cfg.heads = 1;
    cfg.K = 1;
    cfg.N = 1;

    ParamStore P;
    P.create("dit.b0.mod.w", 10, 12);  // zero: modulation comes from the bias
    Mat mod_b(1, 12);
    // sublayer 1: shift (0.1, -0.2), scale (0.3, 0.4), gate (0.5, 0.6)
    // sublayer 2: shift (0, 0),      scale (0, 0),     gate (1, 1)
    mod_b << 0.1, -0.2, 0.3, 0.4, 0.5, 0.6, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0;
    P.create("dit.b0.mod.b", 1, 12) = mod_b;
    for (const char* a : {"fattn", "pattn"}) {
        std::string p = std::string("dit.b0.") + a;
        P.create(p + ".q.w", 2, 2) = Mat::Identity(2, 2);
        P.create(p + ".q.b", 1, 2);
        P.create(p + ".k.w", 2, 2) = Mat::Identity(2, 2);
        P.create(p + ".v.w", 2, 2) = Mat::Identity(2, 2);
        P.create(p + ".v.b", 1, 2);
        P.create(p + ".o.w", 2, 2) = Mat::Identity(2, 2);
        P.create(p + ".o.b", 1, 2);
    }
    Mat m1 = Mat::Zero(2, 8), m2 = Mat::Zero(8, 2);
    m1(0, 0) = 1.0;
    m1(1, 1) = 1.0;
    m2(0, 0) = 1.0;
    m2(1, 1) = 1.0;
    P.create("dit.b0.mlp1.w", 2, 8) = m1;
    P.create("dit.b0.mlp1.b", 1, 8);
    P.create("dit.b0.mlp2.w", 8, 2) = m2;
    P.create("dit.b0.mlp2.b", 1, 2);

    Mat x(1, 2);
    x << 0.8, -0.4;
    AttnMasks masks = AttnMasks::make(1, 1);

    auto ln = [](const Eigen::RowVector2d& v) {
        double mean = (v(0) + v(1)) / 2.0;
        double var = ((v(0) - mean) * (v(0) - mean) + (v(1) - mean) * (v(1) - mean)) / 2.0;
        double rs = 1.0 / std::sqrt(var + 1e-6);
        return Eigen::RowVector2d((v(0) - mean) * rs, (v(1) - mean) * rs);
    };

    Eigen::RowVector2d tok(0.8, -0.4);
    Eigen::RowVector2d h = ln(tok);
    h = Eigen::RowVector2d(h(0) * 1.3 + 0.1, h(1) * 1.4 - 0.2);  // modulate
    // single-token attention twice is the identity on h (softmax of one = 1)
    Eigen::RowVector2d x1 = tok + Eigen::RowVector2d(0.5 * h(0), 0.6 * h(1));
    Eigen::RowVector2d h2 = ln(x1);  // sublayer-2 modulation is the identity
    Eigen::RowVector2d ff(gelu_ref(h2(0)), gelu_ref(h2(1)));
    Eigen::RowVector2d expected = x1 + ff;

    Tape t;
    Var out = dit_block(t, t.constant(x), t.constant(Mat::Zero(1, 8)),
                        t.constant(Mat::Zero(1, 2)), std::nullopt, false, P, "dit.b0", cfg,
                        masks);
    CHECK(t.val(out)(0, 0) == doctest::Approx(expected(0)).epsilon(1e-12));
    CHECK(t.val(out)(0, 1) == doctest::Approx(expected(1)).epsilon(1e-12));
}

TEST_CASE("encode_condition: absent query points give an exactly zero anchor") {
    NetConfig cfg = small_cfg();
    ParamStore P = init_params(cfg, 30);
    Featurizer fz = Featurizer::make(cfg);
    Rng rng(9);
    Mat obs = random_mat(rng, 1, cfg.D_obs);

    ConditionBundle b = encode_condition_values(obs, 1, nullptr, P, fz, cfg);
    CHECK(b.q.cwiseAbs().maxCoeff() == 0.0);

    // fused token is the channel concatenation [g ; t3d ; q ; t_text]
    Mat fused(1, 4 * cfg.C);
    fused << b.g, b.t3d, b.q, b.t_text;
    CHECK(max_abs_diff(b.fused, fused) == 0.0);
}

TEST_CASE("encode_condition is deterministic and query-point order blind") {
    NetConfig cfg = small_cfg();
    ParamStore P = init_params(cfg, 31);
    Rng rng(10);
    for (auto& [name, m] : P.all())
        for (long j = 0; j < m.cols(); ++j)
            for (long i = 0; i < m.rows(); ++i) m(i, j) += 0.1 * rng.normal();
    Featurizer fz = Featurizer::make(cfg);
    Mat obs = random_mat(rng, 1, cfg.D_obs);
    Mat qp = random_mat(rng, 5, 2);
    Mat qp_perm(5, 2);
    int order[5] = {3, 1, 4, 0, 2};
    for (int i = 0; i < 5; ++i) qp_perm.row(i) = qp.row(order[i]);

    ConditionBundle a = encode_condition_values(obs, 1, &qp, P, fz, cfg);
    ConditionBundle b = encode_condition_values(obs, 1, &qp, P, fz, cfg);
    CHECK(max_abs_diff(a.fused, b.fused) == 0.0);

    ConditionBundle c = encode_condition_values(obs, 1, &qp_perm, P, fz, cfg);
    CHECK(max_abs_diff(a.q, c.q) < 1e-9);

    CHECK_THROWS_AS(encode_condition_values(obs, 99, &qp, P, fz, cfg), std::invalid_argument);
}

TEST_CASE("frozen featurizer and text table never change across training") {
    NetConfig cfg = small_cfg();
    Featurizer before = Featurizer::make(cfg);

    ParamStore P = init_params(cfg, 32);
    for (const auto& [name, m] : P.all()) {
        CHECK(name.find("text") == std::string::npos);
        CHECK(name.find("featurizer") == std::string::npos);
    }

    // two optimizer steps on random data
    Rng rng(12);
    std::vector<TrainSample> data(2);
    for (auto& s : data) {
        s.obs = random_mat(rng, 1, cfg.D_obs);
        s.task_id = 0;
        s.x0 = random_mat(rng, cfg.K * cfg.N, 3);
        s.weights = Mat::Ones(cfg.K * cfg.N, 1);
        s.teacher_h = random_mat(rng, 1, cfg.D_teacher);
    }
    Featurizer fz = Featurizer::make(cfg);
    DiffusionSchedule sched = build_schedule(10, ScheduleKind::cosine);
    AdamConfig opt;
    opt.steps = 2;
    opt.batch_size = 2;
    train_planner(data, P, fz, cfg, LossWeights{}, sched, opt, 1);

    Featurizer after = Featurizer::make(cfg);
    CHECK(max_abs_diff(before.text_table, after.text_table) == 0.0);
    CHECK(max_abs_diff(before.patch_proj, after.patch_proj) == 0.0);
    CHECK(max_abs_diff(before.teacher_proj, after.teacher_proj) == 0.0);
}

TEST_CASE("gradient checks pass for every registered block") {
    for (const auto& name : registered_blocks()) {
        GradCheckResult r = grad_check(name, 7);
        INFO(name, " max_rel_err=", r.max_rel_err);
        CHECK(r.pass);
    }
}

TEST_CASE("gradient check handles degenerate equal-logits attention") {
    GradCheckResult r = grad_check("mha_degenerate", 7);
    INFO("max_rel_err=", r.max_rel_err);
    CHECK(r.max_rel_err < 1e-4);
}
