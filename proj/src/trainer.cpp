#include "flow4d/trainer.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace flow4d {

void LossWeights::validate() const {
    if (lambda_align < 0.0 || lambda_smooth < 0.0)
        throw std::invalid_argument("loss weights must be >= 0");
    if (!(charbonnier_eps > 0.0)) throw std::invalid_argument("charbonnier_eps must be > 0");
    if (p_uncond < 0.0 || p_uncond > 1.0)
        throw std::invalid_argument("p_uncond must be in [0,1]");
    if (guidance_w < 0.0) throw std::invalid_argument("guidance_w must be >= 0");
}

LossBreakdown total_loss_and_grads(const std::vector<TrainSample>& batch, ParamStore& P,
                                   const Featurizer& fz, const NetConfig& cfg,
                                   const LossWeights& lw, const DiffusionSchedule& sched,
                                   Rng& rng, std::map<std::string, Mat>* grads_out) {
    if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
    lw.validate();
    AttnMasks masks = AttnMasks::make(cfg.K, cfg.N);
    const int n_tok = cfg.K * cfg.N;
    LossBreakdown sumbd;
    if (grads_out) grads_out->clear();

    for (const TrainSample& s : batch) {
        if (s.x0.rows() != n_tok || s.x0.cols() != 3)
            throw std::invalid_argument("total_loss: sample x0 must be (K*N) x 3");

        int tstep = static_cast<int>(rng.uniform_int(1, sched.T));
        Mat eps(n_tok, 3);
        for (int r = 0; r < n_tok; ++r)
            for (int c = 0; c < 3; ++c) eps(r, c) = rng.normal();
        bool drop = rng.bernoulli(lw.p_uncond);

        double ab = sched.alpha_bar[tstep];
        double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
        Mat x_t = sa * s.x0 + sb * eps;
        Mat v_tgt = sa * eps - sb * s.x0;

        Tape t;
        const Mat* qp = (s.query_points.size() > 0) ? &s.query_points : nullptr;
        CondVars cond = encode_condition(t, s.obs, s.task_id, qp, P, fz, cfg);
        Var xt_var = t.constant(x_t);
        Var v_pred = denoise_v(t, xt_var, tstep, cond, drop, P, cfg, masks);

        Var l_diff = loss_diff_var(t, v_pred, t.constant(v_tgt), s.weights);
        Var x0_hat = t.sub(t.scale(xt_var, sa), t.scale(v_pred, sb));
        Var l_smooth = loss_smooth_var(t, x0_hat, s.weights, cfg.K, cfg.N, lw.charbonnier_eps);
        Var l_align = loss_align_var(t, cond.t3d, s.teacher_h, P);

        Var total = t.add(t.add(l_diff, t.scale(l_align, lw.lambda_align)),
                          t.scale(l_smooth, lw.lambda_smooth));

        double ld = t.val(l_diff)(0, 0);
        double ls = t.val(l_smooth)(0, 0);
        double la = t.val(l_align)(0, 0);
        double lt = t.val(total)(0, 0);
        if (!std::isfinite(ld)) throw std::runtime_error("non-finite loss_diff");
        if (!std::isfinite(ls)) throw std::runtime_error("non-finite loss_smooth");
        if (!std::isfinite(la)) throw std::runtime_error("non-finite loss_align");
        sumbd.diff += ld;
        sumbd.smooth += ls;
        sumbd.align += la;
        sumbd.total += lt;

        if (grads_out) {
            t.backward(total);
            for (const auto& [name, g] : t.param_grads()) {
                auto it = grads_out->find(name);
                if (it == grads_out->end())
                    (*grads_out)[name] = g;
                else
                    it->second += g;
            }
        }
    }

    double inv = 1.0 / static_cast<double>(batch.size());
    sumbd.total *= inv;
    sumbd.diff *= inv;
    sumbd.align *= inv;
    sumbd.smooth *= inv;
    if (grads_out)
        for (auto& [name, g] : *grads_out) g *= inv;
    return sumbd;
}

double AdamOptimizer::step(ParamStore& P, const std::map<std::string, Mat>& grads) {
    ++t_;
    double sq = 0.0;
    for (const auto& [name, g] : grads) sq += g.squaredNorm();
    double norm = std::sqrt(sq);
    double scale = (cfg_.clip > 0.0 && norm > cfg_.clip) ? cfg_.clip / norm : 1.0;

    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    for (const auto& [name, g_raw] : grads) {
        Mat g = g_raw * scale;
        Mat& p = P.get(name);
        auto mit = m_.find(name);
        if (mit == m_.end()) {
            m_[name] = Mat::Zero(p.rows(), p.cols());
            v_[name] = Mat::Zero(p.rows(), p.cols());
            mit = m_.find(name);
        }
        Mat& m = mit->second;
        Mat& v = v_[name];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        Mat mhat = m / bc1;
        Mat vhat = v / bc2;
        p -= cfg_.lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + cfg_.eps).matrix());
    }
    return norm;
}

void MetricsLog::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write metrics: " + path);
    out << "step,loss_total,loss_diff,loss_align,loss_smooth,grad_norm\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.10g\n", r.step,
                      r.loss_total, r.loss_diff, r.loss_align, r.loss_smooth, r.grad_norm);
        out << buf;
    }
}

MetricsLog train_planner(const std::vector<TrainSample>& data, ParamStore& P,
                         const Featurizer& fz, const NetConfig& cfg, const LossWeights& lw,
                         const DiffusionSchedule& sched, const AdamConfig& opt, uint64_t seed) {
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    Rng rng(mix_seed(seed, 0x7261696e));
    AdamOptimizer adam(opt);
    MetricsLog log;
    std::map<std::string, Mat> grads;
    for (int step = 0; step < opt.steps; ++step) {
        std::vector<TrainSample> batch;
        batch.reserve(opt.batch_size);
        for (int b = 0; b < opt.batch_size; ++b)
            batch.push_back(data[static_cast<size_t>(
                rng.uniform_int(0, static_cast<int64_t>(data.size()) - 1))]);
        LossBreakdown bd;
        try {
            bd = total_loss_and_grads(batch, P, fz, cfg, lw, sched, rng, &grads);
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("training diverged at step " + std::to_string(step) + ": " +
                                     e.what());
        }
        double gnorm = adam.step(P, grads);
        if (!std::isfinite(bd.total))
            throw std::runtime_error("training diverged at step " + std::to_string(step));
        log.rows.push_back({step, bd.total, bd.diff, bd.align, bd.smooth, gnorm});
    }
    return log;
}

}  // namespace flow4d
