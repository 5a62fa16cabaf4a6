#pragma once

#include <map>
#include <string>
#include <vector>

#include "flow4d/denoiser.hpp"
#include "flow4d/losses.hpp"
#include "flow4d/rng.hpp"
#include "flow4d/schedule.hpp"

namespace flow4d {

struct LossWeights {
    double lambda_align = 0.1;
    double lambda_smooth = 0.05;
    double charbonnier_eps = 1e-3;
    double p_uncond = 0.1;
    double guidance_w = 2.0;

    void validate() const;
};

struct TrainSample {
    Mat obs;           // 1 x D_obs
    int task_id = 0;
    Mat query_points;  // N x 2; empty means absent
    Mat x0;            // (K*N) x 3, normalized coordinates
    Mat weights;       // (K*N) x 1
    Mat teacher_h;     // 1 x D_teacher
};

struct LossBreakdown {
    double total = 0.0;
    double diff = 0.0;
    double align = 0.0;
    double smooth = 0.0;
};

// Per-sample: draw t and noise, apply condition dropout, run the denoiser,
// combine the three losses; averages over the batch. Fills grads_out with
// batch-averaged parameter gradients unless it is null.
LossBreakdown total_loss_and_grads(const std::vector<TrainSample>& batch, ParamStore& P,
                                   const Featurizer& fz, const NetConfig& cfg,
                                   const LossWeights& lw, const DiffusionSchedule& sched,
                                   Rng& rng, std::map<std::string, Mat>* grads_out);

struct AdamConfig {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip = 1.0;
    int batch_size = 4;
    int steps = 1000;
};

class AdamOptimizer {
public:
    explicit AdamOptimizer(const AdamConfig& cfg) : cfg_(cfg) {}

    // Applies one clipped update; returns the pre-clip global gradient norm.
    double step(ParamStore& P, const std::map<std::string, Mat>& grads);

private:
    AdamConfig cfg_;
    int t_ = 0;
    std::map<std::string, Mat> m_, v_;
};

struct MetricsRow {
    int step = 0;
    double loss_total = 0.0, loss_diff = 0.0, loss_align = 0.0, loss_smooth = 0.0,
           grad_norm = 0.0;
};

struct MetricsLog {
    std::vector<MetricsRow> rows;
    void write_csv(const std::string& path) const;
};

// Single-threaded deterministic training loop; throws on divergence with
// the step index in the message.
MetricsLog train_planner(const std::vector<TrainSample>& data, ParamStore& P,
                         const Featurizer& fz, const NetConfig& cfg, const LossWeights& lw,
                         const DiffusionSchedule& sched, const AdamConfig& opt, uint64_t seed);

}  // namespace flow4d
