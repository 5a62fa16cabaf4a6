#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "flow4d/policy.hpp"

using namespace flow4d;

namespace {

PolicyConfig small_cfg() {
    PolicyConfig cfg;
    cfg.C_cond = 8;
    cfg.C_base = 8;
    cfg.hidden = 8;
    cfg.H = 4;
    cfg.heads = 2;
    cfg.frame_enc = 4;
    cfg.task_emb = 4;
    cfg.n_tasks = 3;
    cfg.D_obs = 7;
    return cfg;
}

FlowTensor random_flow(Rng& rng, int K, int N) {
    FlowTensor f(K, N);
    for (auto& v : f.values) v = rng.normal();
    return f;
}

BaseState random_base(Rng& rng, const PolicyConfig& cfg) {
    BaseState b;
    b.obs = Mat(1, cfg.D_obs);
    for (int i = 0; i < cfg.D_obs; ++i) b.obs(0, i) = rng.normal();
    b.task_id = 1;
    b.proprio = Mat(1, 4);
    for (int i = 0; i < 4; ++i) b.proprio(0, i) = rng.normal();
    return b;
}

void jitter(Rng& rng, ParamStore& P, double s = 0.2) {
    for (auto& [name, m] : P.all())
        for (long j = 0; j < m.cols(); ++j)
            for (long i = 0; i < m.rows(); ++i) m(i, j) += s * rng.normal();
}

}  // namespace

TEST_CASE("flow encoding is keypoint-permutation invariant but frame-order aware") {
    PolicyConfig cfg = small_cfg();
    ParamStore P = init_policy_params(cfg, 3);
    Rng rng(1);
    jitter(rng, P);

    int K = 5, N = 4;
    FlowTensor f = random_flow(rng, K, N);

    FlowTensor perm = f;  // permute keypoints identically at every frame
    int order[4] = {2, 0, 3, 1};
    for (int k = 0; k < K; ++k)
        for (int n = 0; n < N; ++n)
            for (int d = 0; d < 3; ++d) perm.at(k, n, d) = f.at(k, order[n], d);

    FlowTensor rev = f;  // reverse frames
    for (int k = 0; k < K; ++k)
        for (int n = 0; n < N; ++n)
            for (int d = 0; d < 3; ++d) rev.at(k, n, d) = f.at(K - 1 - k, n, d);

    Mat a = encode_flow(f, P, cfg);
    Mat b = encode_flow(perm, P, cfg);
    Mat c = encode_flow(rev, P, cfg);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((a - c).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("flow encoding handles a single-frame plan") {
    PolicyConfig cfg = small_cfg();
    ParamStore P = init_policy_params(cfg, 4);
    FlowTensor f;
    f.K = 1;
    f.N = 3;
    f.values.assign(9, 0.25);
    f.weights.assign(3, 1.0);
    Mat out = encode_flow(f, P, cfg);
    CHECK(out.allFinite());
    CHECK(out.cols() == cfg.C_cond);
}

TEST_CASE("flow encoding matches a brute-force pooled oracle") {
    PolicyConfig cfg = small_cfg();
    ParamStore P = init_policy_params(cfg, 5);
    Rng rng(2);
    jitter(rng, P);
    int K = 3, N = 2;
    FlowTensor f = random_flow(rng, K, N);

    Mat out = encode_flow(f, P, cfg);

    // oracle: token features -> mlp -> per-head softmax pooling -> o proj
    Mat feat(K * N, 3 + cfg.frame_enc);
    Mat enc = flow_frame_encoding(K, N, cfg.frame_enc);
    for (int k = 0; k < K; ++k)
        for (int n = 0; n < N; ++n) {
            for (int d = 0; d < 3; ++d) feat(k * N + n, d) = f.at(k, n, d);
            feat.row(k * N + n).segment(3, cfg.frame_enc) = enc.row(k * N + n);
        }
    Mat h1 = feat * P.get("pol.flow_mlp1.w");
    h1.rowwise() += P.get("pol.flow_mlp1.b").row(0);
    Mat g = h1.unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); });
    Mat tok = g * P.get("pol.flow_mlp2.w");
    tok.rowwise() += P.get("pol.flow_mlp2.b").row(0);

    Mat anchor = P.get("pol.anchor");
    Mat qp = anchor * P.get("pol.pool.q.w") + P.get("pol.pool.q.b");
    Mat kp = tok * P.get("pol.pool.k.w");
    Mat vp = tok * P.get("pol.pool.v.w");
    vp.rowwise() += P.get("pol.pool.v.b").row(0);
    int dh = cfg.C_cond / cfg.heads;
    Mat merged(1, cfg.C_cond);
    for (int hh = 0; hh < cfg.heads; ++hh) {
        Eigen::VectorXd scores(K * N);
        for (int i = 0; i < K * N; ++i)
            scores(i) = qp.row(0).segment(hh * dh, dh).dot(kp.row(i).segment(hh * dh, dh)) /
                        std::sqrt(static_cast<double>(dh));
        Eigen::VectorXd w = (scores.array() - scores.maxCoeff()).exp();
        w /= w.sum();
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(dh);
        for (int i = 0; i < K * N; ++i) acc += w(i) * vp.row(i).segment(hh * dh, dh);
        merged.row(0).segment(hh * dh, dh) = acc;
    }
    Mat expected = merged * P.get("pol.pool.o.w") + P.get("pol.pool.o.b");
    CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("condition fusion concatenates base and flow blocks") {
    PolicyConfig cfg = small_cfg();
    ParamStore P = init_policy_params(cfg, 6);
    Rng rng(3);
    jitter(rng, P);
    BaseState base = random_base(rng, cfg);

    Tape t;
    Var zero_flow = t.constant(Mat::Zero(1, cfg.C_cond));
    Var f_cond = fuse_condition_var(t, base, zero_flow, P, cfg);
    CHECK(t.val(f_cond).cols() == cfg.C_base + cfg.C_cond);
    CHECK(t.val(f_cond).rightCols(cfg.C_cond).cwiseAbs().maxCoeff() == 0.0);

    Tape t2;
    Var f2 = fuse_condition_var(t2, base, t2.constant(Mat::Zero(1, cfg.C_cond)), P, cfg);
    CHECK((t.val(f_cond) - t2.val(f2)).cwiseAbs().maxCoeff() == 0.0);

    BaseState bad = base;
    bad.task_id = 17;
    Tape t3;
    CHECK_THROWS_AS(fuse_condition_var(t3, bad, t3.constant(Mat::Zero(1, cfg.C_cond)), P, cfg),
                    std::invalid_argument);
}

TEST_CASE("zero final layer gives zero displacements and 0.5 gripper") {
    PolicyConfig cfg = small_cfg();
    ParamStore P = init_policy_params(cfg, 7);
    P.get("pol.head3.w").setZero();
    P.get("pol.head3.b").setZero();
    Rng rng(4);
    BaseState base = random_base(rng, cfg);
    FlowTensor f = random_flow(rng, 3, 2);
    ActionChunk chunk = policy_act(base, f, P, cfg);
    REQUIRE(chunk.H == cfg.H);
    for (int h = 0; h < cfg.H; ++h) {
        for (int d = 0; d < 3; ++d) CHECK(chunk.delta(h, d) == 0.0);
        CHECK(chunk.gripper[h] == doctest::Approx(0.5));
    }
}

TEST_CASE("chunk shape and gripper range at the configured horizon") {
    PolicyConfig cfg = small_cfg();
    cfg.H = 20;
    ParamStore P = init_policy_params(cfg, 8);
    Rng rng(5);
    jitter(rng, P, 0.5);
    BaseState base = random_base(rng, cfg);
    FlowTensor f = random_flow(rng, 4, 3);
    ActionChunk chunk = policy_act(base, f, P, cfg);
    CHECK(chunk.H == 20);
    CHECK(chunk.deltas.size() == 60);
    for (double g : chunk.gripper) {
        CHECK(g > 0.0);
        CHECK(g < 1.0);
    }
}

TEST_CASE("bc_train: zero steps identity, frozen planner, loss halves") {
    PolicyConfig cfg = small_cfg();
    Rng rng(6);

    std::vector<PolicySample> data;
    for (int i = 0; i < 12; ++i) {
        PolicySample s;
        s.base = random_base(rng, cfg);
        s.flow = random_flow(rng, 3, 2);
        s.expert = ActionChunk(cfg.H);
        // expert displacement tied to the flow endpoint: learnable signal
        for (int h = 0; h < cfg.H; ++h) {
            for (int d = 0; d < 3; ++d)
                s.expert.delta(h, d) = 0.02 * (s.flow.at(2, 0, d) - s.flow.at(0, 0, d));
            s.expert.gripper[h] = (s.flow.at(2, 0, 0) > 0.0) ? 1.0 : 0.0;
        }
        data.push_back(s);
    }

    ParamStore P = init_policy_params(cfg, 9);
    uint64_t before = P.fingerprint();
    AdamConfig none;
    none.steps = 0;
    bc_train(data, P, cfg, none, 1);
    CHECK(P.fingerprint() == before);

    // a planner callback may be consulted but must never be mutated
    int plan_calls = 0;
    FlowTensor canned = random_flow(rng, 3, 2);
    std::function<FlowTensor(const BaseState&)> plan_fn = [&](const BaseState&) {
        ++plan_calls;
        return canned;
    };
    AdamConfig tiny;
    tiny.steps = 3;
    tiny.batch_size = 2;
    bc_train(data, P, cfg, tiny, 1, &plan_fn);
    CHECK(plan_calls == 6);

    ParamStore Q = init_policy_params(cfg, 9);
    AdamConfig opt;
    opt.steps = 1500;
    opt.batch_size = 4;
    opt.lr = 3e-3;
    MetricsLog log = bc_train(data, Q, cfg, opt, 2);
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 20; ++i) {
        first += log.rows[static_cast<size_t>(i)].loss_total;
        last += log.rows[log.rows.size() - 1 - static_cast<size_t>(i)].loss_total;
    }
    INFO("first ", first / 20, " last ", last / 20);
    CHECK(last < 0.5 * first);

    ParamStore R1 = init_policy_params(cfg, 9);
    ParamStore R2 = init_policy_params(cfg, 9);
    AdamConfig o2;
    o2.steps = 5;
    o2.batch_size = 2;
    bc_train(data, R1, cfg, o2, 7);
    bc_train(data, R2, cfg, o2, 7);
    CHECK(R1.fingerprint() == R2.fingerprint());
}

TEST_CASE("use_flow=false forces the zero flow condition") {
    PolicyConfig cfg = small_cfg();
    cfg.use_flow = false;
    ParamStore P = init_policy_params(cfg, 10);
    Rng rng(7);
    jitter(rng, P);
    BaseState base = random_base(rng, cfg);
    ActionChunk a = policy_act(base, random_flow(rng, 3, 2), P, cfg);
    ActionChunk b = policy_act(base, random_flow(rng, 3, 2), P, cfg);
    CHECK(a.deltas == b.deltas);  // the flow cannot influence the output
    CHECK(a.gripper == b.gripper);
}
