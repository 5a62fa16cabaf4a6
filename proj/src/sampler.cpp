#include "flow4d/sampler.hpp"

#include <cmath>
#include <stdexcept>

#include "flow4d/rng.hpp"

namespace flow4d {

std::vector<int> sampler_timesteps(int T, int steps) {
    if (steps < 1) throw std::invalid_argument("sampler: steps must be >= 1");
    steps = std::min(steps, T);
    std::vector<int> ts;
    ts.reserve(steps);
    int prev = T + 1;
    for (int i = steps; i >= 1; --i) {
        int tau = static_cast<int>(std::llround(static_cast<double>(T) * i / steps));
        tau = std::max(1, std::min(T, tau));
        if (tau >= prev) tau = prev - 1;
        if (tau < 1) break;
        ts.push_back(tau);
        prev = tau;
    }
    return ts;
}

FlowTensor sample_flow(const PlanInput& in, ParamStore& P, const Featurizer& fz,
                       const NetConfig& cfg, const DiffusionSchedule& sched,
                       const NormStats& stats, int steps, double w, uint64_t seed) {
    const int n_tok = cfg.K * cfg.N;
    AttnMasks masks = AttnMasks::make(cfg.K, cfg.N);
    const Mat* qp = (in.query_points.size() > 0) ? &in.query_points : nullptr;
    const double clamp = 6.0;

    Rng rng(mix_seed(seed, 0x73616d70));
    Mat x(n_tok, 3);
    for (int r = 0; r < n_tok; ++r)
        for (int c = 0; c < 3; ++c) x(r, c) = rng.normal();

    std::vector<int> taus = sampler_timesteps(sched.T, steps);
    for (size_t j = 0; j < taus.size(); ++j) {
        int tau = taus[j];
        int next = (j + 1 < taus.size()) ? taus[j + 1] : 0;

        Mat v = denoise_v_values(x, tau, in.obs, in.task_id, qp, false, P, fz, cfg, masks);
        if (w > 0.0) {
            Mat vu = denoise_v_values(x, tau, in.obs, in.task_id, qp, true, P, fz, cfg, masks);
            v = (1.0 + w) * v - w * vu;
        }

        double ab = sched.alpha_bar[tau];
        double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
        Mat x0 = sa * x - sb * v;
        x0 = x0.cwiseMax(-clamp).cwiseMin(clamp);
        Mat eps_hat = (x - sa * x0) / sb;

        double ab2 = sched.alpha_bar[next];
        x = std::sqrt(ab2) * x0 + std::sqrt(1.0 - ab2) * eps_hat;
    }

    FlowTensor out(cfg.K, cfg.N);
    for (int k = 0; k < cfg.K; ++k)
        for (int n = 0; n < cfg.N; ++n)
            for (int d = 0; d < 3; ++d) out.at(k, n, d) = x(k * cfg.N + n, d);
    return denormalize(out, stats);
}

}  // namespace flow4d
