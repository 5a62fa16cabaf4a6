#include "flow4d/control.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <thread>

#include "flow4d/oracle.hpp"

namespace flow4d {

DiffusionPlanner::DiffusionPlanner(const Checkpoint& ck)
    : cfg_(ck.config), params_(ck.params), fz_(Featurizer::make(ck.config.net())),
      net_(ck.config.net()), sched_(build_schedule(ck.config.T,
                                                   schedule_kind_from_string(ck.config.schedule))),
      stats_(ck.stats) {}

FlowTensor DiffusionPlanner::plan(const Mat& obs, int task_id, const Mat* query_points,
                                  uint64_t seed) const {
    PlanInput in;
    in.obs = obs;
    in.task_id = task_id;
    if (query_points) in.query_points = *query_points;
    return sample_flow(in, params_, fz_, net_, sched_, stats_, cfg_.sampler_steps,
                       cfg_.guidance_w, seed);
}

LearnedPolicy::LearnedPolicy(const Checkpoint& ck)
    : cfg_(ck.config), params_(ck.params), pcfg_(ck.config.policy()) {}

ActionChunk LearnedPolicy::act(const BaseState& base, const FlowTensor& plan) const {
    return policy_act(base, plan, params_, pcfg_);
}

FlowTensor OraclePlanner::plan(const Mat& obs, int task_id, const Mat* query_points,
                               uint64_t seed) const {
    (void)task_id;
    (void)query_points;
    (void)seed;
    return oracle_plan(obs, task_, wc_, K_, N_, gamma_);
}

ActionChunk ExpertPolicy::act(const BaseState& base, const FlowTensor& plan) const {
    (void)plan;  // the expert acts from state alone
    return expert_action_chunk(base.obs, task_, wc_, H_);
}

namespace {

Mat current_query_points(const WorldState& s, int N) {
    Mat off = keypoint_offsets(N);
    Mat q(N, 2);
    for (int n = 0; n < N; ++n) {
        q(n, 0) = s.gripper_pos[0] + off(n, 0);
        q(n, 1) = s.gripper_pos[1] + off(n, 1);
    }
    return q;
}

TraceStep trace_of(const WorldState& s, int plan_id) {
    TraceStep t;
    t.step = s.step;
    t.gripper_open = s.gripper_open;
    t.held = s.held_object.has_value();
    t.gripper_pos = s.gripper_pos;
    for (const auto& o : s.objects) t.object_pos.push_back(o.pos);
    t.plan_id = plan_id;
    return t;
}

}  // namespace

RolloutResult run_closed_loop(const Planner& planner, const ChunkPolicy& policy,
                              const TaskSpec& task, const WorldConfig& wc,
                              const RolloutLimits& limits, uint64_t seed) {
    if (limits.r < 1) throw std::invalid_argument("run_closed_loop: r must be >= 1");
    Rng init_rng(mix_seed(seed, 0x696e6974));
    Rng drop_rng(mix_seed(seed, 0x64726f70));
    WorldState world = init_world(task, wc, init_rng);

    RolloutResult res;
    bool drop_fired = false;
    bool done = false;

    while (!done) {
        if (res.plans_issued >= limits.plan_limit || res.steps_used >= limits.step_limit) break;
        if (task_success(world)) {
            res.success = true;
            break;
        }

        FlowTensor plan_snapshot;
        if (limits.replanning || res.plans_issued == 0) {
            Mat obs = observe(world);
            Mat qp = current_query_points(world, planner.keypoint_count());
            plan_snapshot = planner.plan(
                obs, task.task_id, &qp,
                mix_seed(seed, 0x706c616e, static_cast<uint64_t>(res.plans_issued)));
            ++res.plans_issued;
            res.plans.push_back(plan_snapshot);
        } else {
            plan_snapshot = res.plans.front();
        }
        const int plan_id = limits.replanning ? res.plans_issued - 1 : 0;

        bool replan_now = false;
        for (int chunk = 0; chunk < limits.r && !replan_now && !done; ++chunk) {
            BaseState base;
            base.obs = observe(world);
            base.task_id = task.task_id;
            base.proprio = proprio_of(world);
            ActionChunk actions = policy.act(base, plan_snapshot);

            bool gripper_changed = false;
            for (int h = 0; h < actions.H; ++h) {
                bool pre_open = world.gripper_open;
                std::array<double, 4> a{actions.delta(h, 0), actions.delta(h, 1),
                                        actions.delta(h, 2), actions.gripper[h]};
                world_step(world, a, wc);
                ++res.steps_used;

                if (!drop_fired && task.drop_step >= 0 && world.held_object &&
                    world.step >= task.drop_step) {
                    force_drop(world, wc, drop_rng);
                    drop_fired = true;
                }

                res.trace.push_back(trace_of(world, plan_id));
                if (world.gripper_open != pre_open) gripper_changed = true;
                if (task_success(world)) {
                    res.success = true;
                    done = true;
                    break;
                }
                if (res.steps_used >= limits.step_limit) {
                    done = true;
                    break;
                }
            }
            if (gripper_changed && limits.replanning) replan_now = true;  // atomic task boundary
        }
        if (!limits.replanning && res.steps_used >= limits.step_limit) done = true;
    }

    if (res.trace.empty()) res.trace.push_back(trace_of(world, 0));
    return res;
}

void write_trace(const std::string& path, const RolloutResult& r) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trace: " + path);
    out << "step,gripper_open,held,plan_id,gx,gy,gz";
    size_t n_obj = r.trace.empty() ? 0 : r.trace.front().object_pos.size();
    for (size_t i = 0; i < n_obj; ++i)
        out << ",o" << i << "x,o" << i << "y,o" << i << "z";
    out << "\n";
    char buf[512];
    for (const auto& t : r.trace) {
        std::snprintf(buf, sizeof(buf), "%ld,%d,%d,%d,%.8f,%.8f,%.8f", t.step,
                      t.gripper_open ? 1 : 0, t.held ? 1 : 0, t.plan_id, t.gripper_pos[0],
                      t.gripper_pos[1], t.gripper_pos[2]);
        out << buf;
        for (const auto& p : t.object_pos) {
            std::snprintf(buf, sizeof(buf), ",%.8f,%.8f,%.8f", p[0], p[1], p[2]);
            out << buf;
        }
        out << "\n";
    }
}

double EvalTable::average_rate() const {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += r.trials ? static_cast<double>(r.successes) / r.trials : 0.0;
    return s / static_cast<double>(rows.size());
}

std::string EvalTable::to_csv() const {
    std::string out = "task_id,trials,successes,success_rate\n";
    char buf[128];
    for (const auto& r : rows) {
        double rate = r.trials ? static_cast<double>(r.successes) / r.trials : 0.0;
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.4f\n", r.task_id, r.trials, r.successes,
                      rate);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "average,,,%.4f\n", average_rate());
    out += buf;
    return out;
}

void EvalTable::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write eval csv: " + path);
    out << to_csv();
}

EvalTable evaluate(const Planner& planner, const ChunkPolicy& policy,
                   const std::vector<TaskSpec>& suite, int trials, const WorldConfig& wc,
                   const RolloutLimits& limits, uint64_t seed, int threads) {
    if (suite.empty()) throw std::invalid_argument("evaluate: empty suite");
    if (trials < 1) throw std::invalid_argument("no trials");
    threads = std::max(1, threads);

    struct Job {
        int task_idx;
        int trial;
    };
    std::vector<Job> jobs;
    for (size_t ti = 0; ti < suite.size(); ++ti)
        for (int tr = 0; tr < trials; ++tr) jobs.push_back({static_cast<int>(ti), tr});

    std::vector<uint8_t> success(jobs.size(), 0);
    std::atomic<size_t> cursor{0};
    auto worker = [&]() {
        while (true) {
            size_t i = cursor.fetch_add(1);
            if (i >= jobs.size()) return;
            const Job& j = jobs[i];
            uint64_t s = mix_seed(seed, static_cast<uint64_t>(j.task_idx) * 1000003ull,
                                  static_cast<uint64_t>(j.trial));
            RolloutResult r = run_closed_loop(planner, policy, suite[j.task_idx], wc, limits, s);
            success[i] = r.success ? 1 : 0;
        }
    };

    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    EvalTable table;
    for (size_t ti = 0; ti < suite.size(); ++ti) {
        EvalRow row;
        row.task_id = suite[ti].task_id;
        row.trials = trials;
        for (size_t i = 0; i < jobs.size(); ++i)
            if (jobs[i].task_idx == static_cast<int>(ti) && success[i]) ++row.successes;
        table.rows.push_back(row);
    }
    return table;
}

}  // namespace flow4d
