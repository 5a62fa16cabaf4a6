#include "flow4d/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace flow4d {

void PolicyConfig::validate() const {
    if (H < 1) throw std::invalid_argument("PolicyConfig: H must be >= 1");
    if (C_cond < 1 || C_base < 1 || hidden < 1 || task_emb < 1 || n_tasks < 1 || D_obs < 1)
        throw std::invalid_argument("PolicyConfig: widths must be >= 1");
    if (C_cond % heads != 0)
        throw std::invalid_argument("PolicyConfig: C_cond must be a multiple of heads");
    if (frame_enc % 2 != 0) throw std::invalid_argument("PolicyConfig: frame_enc must be even");
}

ParamStore init_policy_params(const PolicyConfig& cfg, uint64_t seed) {
    cfg.validate();
    ParamStore P;
    Rng rng(seed);
    P.init_embedding(rng, "pol.task_table", cfg.n_tasks, cfg.task_emb);
    P.init_linear(rng, "pol.flow_mlp1", 3 + cfg.frame_enc, cfg.C_cond);
    P.init_linear(rng, "pol.flow_mlp2", cfg.C_cond, cfg.C_cond);
    P.init_zeros("pol.anchor", 1, cfg.C_cond);
    P.init_attention(rng, "pol.pool", cfg.C_cond);
    P.init_linear(rng, "pol.base1", cfg.D_obs + cfg.task_emb + 4, cfg.C_base);
    P.init_linear(rng, "pol.base2", cfg.C_base, cfg.C_base);
    P.init_linear(rng, "pol.head1", cfg.C_base + cfg.C_cond, cfg.hidden);
    P.init_linear(rng, "pol.head2", cfg.hidden, cfg.hidden);
    P.init_linear(rng, "pol.head3", cfg.hidden, cfg.H * 4);
    return P;
}

Mat flow_frame_encoding(int K, int N, int dims) {
    Mat enc(K * N, dims);
    int denom = std::max(K - 1, 1);
    for (int k = 0; k < K; ++k) {
        double phase = static_cast<double>(k) / denom;
        for (int j = 0; j < dims / 2; ++j) {
            double arg = M_PI * phase * static_cast<double>(1 << j);
            for (int n = 0; n < N; ++n) {
                enc(k * N + n, 2 * j) = std::sin(arg);
                enc(k * N + n, 2 * j + 1) = std::cos(arg);
            }
        }
    }
    return enc;
}

Var encode_flow_var(Tape& t, Var flow_values, int K, int N, ParamStore& P,
                    const PolicyConfig& cfg) {
    if (t.val(flow_values).rows() != static_cast<long>(K) * N || t.val(flow_values).cols() != 3)
        throw std::invalid_argument("encode_flow: expected (K*N) x 3 values");
    Var feat = t.concat_cols(flow_values, t.constant(flow_frame_encoding(K, N, cfg.frame_enc)));
    Var tok = mlp2(t, feat, P, "pol.flow_mlp1", "pol.flow_mlp2");
    return attention_pool(t, tok, P, "pol.pool", "pol.anchor", cfg.heads);
}

Var fuse_condition_var(Tape& t, const BaseState& base, Var f_flow, ParamStore& P,
                       const PolicyConfig& cfg) {
    if (base.obs.rows() != 1 || base.obs.cols() != cfg.D_obs)
        throw std::invalid_argument("fuse_condition: observation width mismatch");
    if (base.proprio.rows() != 1 || base.proprio.cols() != 4)
        throw std::invalid_argument("fuse_condition: proprio must be 1 x 4");
    if (base.task_id < 0 || base.task_id >= cfg.n_tasks)
        throw std::invalid_argument("fuse_condition: unknown task_id");
    Var task = t.gather_rows(t.param(P, "pol.task_table"), {base.task_id});
    Var in = t.concat_cols(t.concat_cols(t.constant(base.obs), task), t.constant(base.proprio));
    Var f_base = mlp2(t, in, P, "pol.base1", "pol.base2");
    return t.concat_cols(f_base, f_flow);
}

PolicyHeadOut policy_forward_var(Tape& t, Var f_cond, ParamStore& P, const PolicyConfig& cfg) {
    Var h = t.gelu(linear(t, f_cond, P, "pol.head1"));
    h = t.gelu(linear(t, h, P, "pol.head2"));
    Var o = linear(t, h, P, "pol.head3");  // 1 x H*4
    Var grid = t.reshape_rowmajor(o, cfg.H, 4);
    PolicyHeadOut out;
    out.disp = t.slice_cols(grid, 0, 3);
    out.grip_logits = t.slice_cols(grid, 3, 1);
    return out;
}

namespace {

Var flow_condition(Tape& t, const FlowTensor& flow, ParamStore& P, const PolicyConfig& cfg) {
    if (!cfg.use_flow) return t.constant(Mat::Zero(1, cfg.C_cond));
    Mat vals(static_cast<long>(flow.K) * flow.N, 3);
    for (int k = 0; k < flow.K; ++k)
        for (int n = 0; n < flow.N; ++n)
            for (int d = 0; d < 3; ++d) vals(k * flow.N + n, d) = flow.at(k, n, d);
    return encode_flow_var(t, t.constant(vals), flow.K, flow.N, P, cfg);
}

}  // namespace

ActionChunk policy_act(const BaseState& base, const FlowTensor& flow, ParamStore& P,
                       const PolicyConfig& cfg) {
    Tape t;
    Var f_flow = flow_condition(t, flow, P, cfg);
    Var f_cond = fuse_condition_var(t, base, f_flow, P, cfg);
    PolicyHeadOut out = policy_forward_var(t, f_cond, P, cfg);
    Var grip = t.sigmoid_(out.grip_logits);
    ActionChunk chunk(cfg.H);
    const Mat& d = t.val(out.disp);
    const Mat& g = t.val(grip);
    for (int h = 0; h < cfg.H; ++h) {
        for (int i = 0; i < 3; ++i) chunk.delta(h, i) = d(h, i);
        chunk.gripper[h] = g(h, 0);
    }
    return chunk;
}

Mat encode_flow(const FlowTensor& flow, ParamStore& P, const PolicyConfig& cfg) {
    Tape t;
    return t.val(flow_condition(t, flow, P, cfg));
}

MetricsLog bc_train(const std::vector<PolicySample>& data, ParamStore& P,
                    const PolicyConfig& cfg, const AdamConfig& opt, uint64_t seed,
                    const std::function<FlowTensor(const BaseState&)>* plan_fn) {
    if (data.empty()) throw std::invalid_argument("bc_train: empty dataset");
    cfg.validate();
    Rng rng(mix_seed(seed, 0x6263));
    AdamOptimizer adam(opt);
    MetricsLog log;
    std::map<std::string, Mat> grads;

    for (int step = 0; step < opt.steps; ++step) {
        grads.clear();
        double l_total = 0.0, l_disp = 0.0, l_grip = 0.0;
        for (int b = 0; b < opt.batch_size; ++b) {
            const PolicySample& s = data[static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(data.size()) - 1))];
            FlowTensor flow = plan_fn ? (*plan_fn)(s.base) : s.flow;

            Tape t;
            Var f_flow = flow_condition(t, flow, P, cfg);
            Var f_cond = fuse_condition_var(t, s.base, f_flow, P, cfg);
            PolicyHeadOut out = policy_forward_var(t, f_cond, P, cfg);

            Mat exp_d(cfg.H, 3), exp_g(cfg.H, 1);
            for (int h = 0; h < cfg.H; ++h) {
                for (int i = 0; i < 3; ++i) exp_d(h, i) = s.expert.delta(h, i);
                exp_g(h, 0) = s.expert.gripper[h];
            }
            Var dd = t.sub(out.disp, t.constant(exp_d));
            Var mse = t.scale(t.sum(t.mul(dd, dd)), 1.0 / (cfg.H * 3.0));
            // stable BCE on logits: softplus(z) - g*z
            Var bce = t.scale(
                t.sum(t.sub(t.softplus_(out.grip_logits),
                            t.mul(t.constant(exp_g), out.grip_logits))),
                1.0 / cfg.H);
            Var total = t.add(mse, bce);
            t.backward(total);
            for (const auto& [name, g] : t.param_grads()) {
                auto it = grads.find(name);
                if (it == grads.end())
                    grads[name] = g;
                else
                    it->second += g;
            }
            l_total += t.val(total)(0, 0);
            l_disp += t.val(mse)(0, 0);
            l_grip += t.val(bce)(0, 0);
        }
        double inv = 1.0 / opt.batch_size;
        for (auto& [name, g] : grads) g *= inv;
        double gnorm = adam.step(P, grads);
        l_total *= inv;
        if (!std::isfinite(l_total))
            throw std::runtime_error("bc_train diverged at step " + std::to_string(step));
        log.rows.push_back({step, l_total, l_disp * inv, l_grip * inv, 0.0, gnorm});
    }
    return log;
}

}  // namespace flow4d
