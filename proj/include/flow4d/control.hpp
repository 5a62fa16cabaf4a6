#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flow4d/checkpoint.hpp"
#include "flow4d/datagen.hpp"
#include "flow4d/sampler.hpp"

namespace flow4d {

// Slow planner interface: observation + instruction -> flow plan.
class Planner {
public:
    virtual ~Planner() = default;
    virtual FlowTensor plan(const Mat& obs, int task_id, const Mat* query_points,
                            uint64_t seed) const = 0;
    virtual int keypoint_count() const = 0;
};

// Fast executor interface: state + plan snapshot -> action chunk.
class ChunkPolicy {
public:
    virtual ~ChunkPolicy() = default;
    virtual ActionChunk act(const BaseState& base, const FlowTensor& plan) const = 0;
};

class DiffusionPlanner : public Planner {
public:
    DiffusionPlanner(const Checkpoint& ck);
    FlowTensor plan(const Mat& obs, int task_id, const Mat* query_points,
                    uint64_t seed) const override;
    int keypoint_count() const override { return cfg_.N; }

    const Config& config() const { return cfg_; }

private:
    Config cfg_;
    mutable ParamStore params_;  // read-only after construction
    Featurizer fz_;
    NetConfig net_;
    DiffusionSchedule sched_;
    NormStats stats_;
};

class LearnedPolicy : public ChunkPolicy {
public:
    LearnedPolicy(const Checkpoint& ck);
    ActionChunk act(const BaseState& base, const FlowTensor& plan) const override;

    const Config& config() const { return cfg_; }

private:
    Config cfg_;
    mutable ParamStore params_;
    PolicyConfig pcfg_;
};

// Reference implementations closing the loop without learned components.
class OraclePlanner : public Planner {
public:
    OraclePlanner(const TaskSpec& task, const WorldConfig& wc, int K, int N, double gamma)
        : task_(task), wc_(wc), K_(K), N_(N), gamma_(gamma) {}
    FlowTensor plan(const Mat& obs, int task_id, const Mat* query_points,
                    uint64_t seed) const override;
    int keypoint_count() const override { return N_; }

private:
    TaskSpec task_;
    WorldConfig wc_;
    int K_, N_;
    double gamma_;
};

class ExpertPolicy : public ChunkPolicy {
public:
    ExpertPolicy(const TaskSpec& task, const WorldConfig& wc, int H)
        : task_(task), wc_(wc), H_(H) {}
    ActionChunk act(const BaseState& base, const FlowTensor& plan) const override;

private:
    TaskSpec task_;
    WorldConfig wc_;
    int H_;
};

struct RolloutLimits {
    int r = 2;           // fast chunks per slow update
    int H = 20;          // chunk horizon
    int plan_limit = 12;
    int step_limit = 2000;
    bool replanning = true;  // false: first plan only, never refreshed
};

struct TraceStep {
    long step = 0;
    bool gripper_open = true;
    bool held = false;
    Vec3 gripper_pos{0, 0, 0};
    std::vector<Vec3> object_pos;
    int plan_id = 0;
};

struct RolloutResult {
    bool success = false;
    int steps_used = 0;
    int plans_issued = 0;
    std::vector<FlowTensor> plans;
    std::vector<TraceStep> trace;
};

RolloutResult run_closed_loop(const Planner& planner, const ChunkPolicy& policy,
                              const TaskSpec& task, const WorldConfig& wc,
                              const RolloutLimits& limits, uint64_t seed);

void write_trace(const std::string& path, const RolloutResult& r);

struct EvalRow {
    int task_id = 0;
    int trials = 0;
    int successes = 0;
};

struct EvalTable {
    std::vector<EvalRow> rows;
    double average_rate() const;
    std::string to_csv() const;
    void write_csv(const std::string& path) const;
};

// Seeded success-rate evaluation; rollouts fan out over `threads` workers
// and remain bit-deterministic (per-trial seeds, index-ordered results).
EvalTable evaluate(const Planner& planner, const ChunkPolicy& policy,
                   const std::vector<TaskSpec>& suite, int trials, const WorldConfig& wc,
                   const RolloutLimits& limits, uint64_t seed, int threads);

}  // namespace flow4d
