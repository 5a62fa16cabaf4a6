#pragma once

#include <string>
#include <vector>

#include "flow4d/flow_tensor.hpp"

namespace flow4d {

enum class ScheduleKind { cosine, linear };

ScheduleKind schedule_kind_from_string(const std::string& s);
std::string to_string(ScheduleKind k);

struct DiffusionSchedule {
    int T = 0;
    std::vector<double> alpha_bar;  // size T+1, alpha_bar[0] == 1, strictly decreasing

    void validate() const;
};

DiffusionSchedule build_schedule(int T, ScheduleKind kind);

// x_t = sqrt(ab_t) x0 + sqrt(1 - ab_t) eps
FlowTensor forward_diffuse(const FlowTensor& x0, int t, const FlowTensor& eps,
                           const DiffusionSchedule& sched);

// v_t = sqrt(ab_t) eps - sqrt(1 - ab_t) x0
FlowTensor v_target(const FlowTensor& x0, const FlowTensor& eps, int t,
                    const DiffusionSchedule& sched);

// x0_hat = sqrt(ab_t) x_t - sqrt(1 - ab_t) v
FlowTensor recover_x0(const FlowTensor& x_t, const FlowTensor& v, int t,
                      const DiffusionSchedule& sched);

// v_hat = (1 + w) v_cond - w v_uncond
FlowTensor cfg_combine(const FlowTensor& v_cond, const FlowTensor& v_uncond, double w);

}  // namespace flow4d
