#include "flow4d/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace flow4d {

ScheduleKind schedule_kind_from_string(const std::string& s) {
    if (s == "cosine") return ScheduleKind::cosine;
    if (s == "linear") return ScheduleKind::linear;
    throw std::invalid_argument("unknown schedule kind: " + s);
}

std::string to_string(ScheduleKind k) {
    return k == ScheduleKind::cosine ? "cosine" : "linear";
}

void DiffusionSchedule::validate() const {
    if (T < 1 || alpha_bar.size() != static_cast<size_t>(T) + 1)
        throw std::invalid_argument("DiffusionSchedule: bad size");
    if (alpha_bar[0] != 1.0) throw std::invalid_argument("DiffusionSchedule: alpha_bar[0] != 1");
    for (int t = 0; t <= T; ++t) {
        double a = alpha_bar[t];
        if (!(a >= 0.0 && a <= 1.0)) throw std::invalid_argument("DiffusionSchedule: out of [0,1]");
        if (t > 0 && !(a < alpha_bar[t - 1]))
            throw std::invalid_argument("DiffusionSchedule: not strictly decreasing");
    }
}

DiffusionSchedule build_schedule(int T, ScheduleKind kind) {
    if (T < 1) throw std::invalid_argument("build_schedule: T must be >= 1");
    DiffusionSchedule s;
    s.T = T;
    s.alpha_bar.assign(static_cast<size_t>(T) + 1, 0.0);
    if (kind == ScheduleKind::cosine) {
        const double off = 0.008;
        auto f = [&](double t) {
            double c = std::cos(((t / T + off) / (1.0 + off)) * M_PI / 2.0);
            return c * c;
        };
        double norm = f(0.0);
        s.alpha_bar[0] = 1.0;
        for (int t = 1; t <= T; ++t) {
            double a = f(static_cast<double>(t)) / norm;
            a = std::min(1.0, std::max(1e-5, a));
            // the floor can flatten the tail; keep the sequence strictly
            // decreasing at epsilon resolution
            if (a >= s.alpha_bar[t - 1]) a = s.alpha_bar[t - 1] - 1e-12;
            s.alpha_bar[t] = a;
        }
    } else {
        const double beta0 = 1e-4, beta1 = 0.02;
        s.alpha_bar[0] = 1.0;
        double prod = 1.0;
        for (int i = 1; i <= T; ++i) {
            double frac = (T == 1) ? 0.0 : static_cast<double>(i - 1) / (T - 1);
            double beta = beta0 + frac * (beta1 - beta0);
            prod *= (1.0 - beta);
            s.alpha_bar[i] = prod;
        }
    }
    s.validate();
    return s;
}

namespace {

void require_same_shape(const FlowTensor& a, const FlowTensor& b, const char* what) {
    if (a.K != b.K || a.N != b.N || a.values.size() != b.values.size())
        throw std::invalid_argument(std::string(what) + ": shape mismatch");
}

double ab_at(const DiffusionSchedule& sched, int t) {
    if (t < 0 || t > sched.T) throw std::invalid_argument("timestep out of range");
    return sched.alpha_bar[t];
}

}  // namespace

FlowTensor forward_diffuse(const FlowTensor& x0, int t, const FlowTensor& eps,
                           const DiffusionSchedule& sched) {
    require_same_shape(x0, eps, "forward_diffuse");
    double ab = ab_at(sched, t);
    double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    FlowTensor out = x0;
    for (size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = sa * x0.values[i] + sb * eps.values[i];
    return out;
}

FlowTensor v_target(const FlowTensor& x0, const FlowTensor& eps, int t,
                    const DiffusionSchedule& sched) {
    require_same_shape(x0, eps, "v_target");
    double ab = ab_at(sched, t);
    double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    FlowTensor out = x0;
    for (size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = sa * eps.values[i] - sb * x0.values[i];
    return out;
}

FlowTensor recover_x0(const FlowTensor& x_t, const FlowTensor& v, int t,
                      const DiffusionSchedule& sched) {
    require_same_shape(x_t, v, "recover_x0");
    double ab = ab_at(sched, t);
    double sa = std::sqrt(ab), sb = std::sqrt(1.0 - ab);
    FlowTensor out = x_t;
    for (size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = sa * x_t.values[i] - sb * v.values[i];
    return out;
}

FlowTensor cfg_combine(const FlowTensor& v_cond, const FlowTensor& v_uncond, double w) {
    require_same_shape(v_cond, v_uncond, "cfg_combine");
    FlowTensor out = v_cond;
    for (size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = (1.0 + w) * v_cond.values[i] - w * v_uncond.values[i];
    return out;
}

}  // namespace flow4d
