// Command-line driver: data generation, planner/policy training, sampling,
// closed-loop rollout, evaluation, and gradient checks.

#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "flow4d/checkpoint.hpp"
#include "flow4d/control.hpp"
#include "flow4d/dataset_file.hpp"
#include "flow4d/gradcheck.hpp"
#include "flow4d/oracle.hpp"
#include "flow4d/svg.hpp"

using namespace flow4d;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
};

Config resolve_config(const Common& c) {
    Config cfg = c.config_path.empty() ? Config() : Config::from_file(c.config_path);
    for (const auto& kv : c.overrides) {
        size_t eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--set expects key=value, got: " + kv);
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* app, Common& c) {
    app->add_option("-c,--config", c.config_path, "flat key=value config file");
    app->add_option("--set", c.overrides, "override a config key (key=value, repeatable)");
}

std::vector<int> parse_task_list(const std::string& s) {
    std::vector<int> out;
    size_t pos = 0;
    while (pos < s.size()) {
        size_t comma = s.find(',', pos);
        if (comma == std::string::npos) comma = s.size();
        out.push_back(std::stoi(s.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    if (out.empty()) throw std::invalid_argument("empty task list");
    return out;
}

std::vector<TrainingPair> generate_pairs(const Config& cfg, const std::vector<int>& tasks,
                                         int episodes, uint64_t seed) {
    DatagenConfig dg = cfg.datagen();
    WorldConfig wc = cfg.world();
    std::vector<TrainingPair> pairs;
    for (int e = 0; e < episodes; ++e) {
        TaskSpec task = TaskSpec::preset(tasks[e % tasks.size()]);
        Episode ep = gen_synthetic_episode(task, wc, dg, mix_seed(seed, 0x6570, e));
        auto mask = filter_tracks(ep.tracks, FilterConfig{});
        for (uint8_t k : mask)
            if (!k) throw std::runtime_error("synthetic track rejected by filter");
        auto ep_pairs = build_training_pairs(ep, dg, mix_seed(seed, 0x7072, e));
        pairs.insert(pairs.end(), ep_pairs.begin(), ep_pairs.end());
    }
    return pairs;
}

int cmd_gen_data(const Common& common, const std::string& task_list, int episodes,
                 uint64_t seed, const std::string& out) {
    Config cfg = resolve_config(common);
    if (episodes <= 0) throw std::invalid_argument("no episodes");
    auto tasks = parse_task_list(task_list);
    auto pairs = generate_pairs(cfg, tasks, episodes, seed);
    Dataset ds = build_dataset(pairs, cfg.K, cfg.N, cfg.H);
    save_dataset(out, ds);
    std::printf("dataset: %s\n", out.c_str());
    std::printf("pairs: %zu\n", ds.records.size());
    std::printf("norm center: (%.6f, %.6f, %.6f)  scale: %.6f\n", ds.stats.center[0],
                ds.stats.center[1], ds.stats.center[2], ds.stats.scale);
    return 0;
}

int cmd_train(const Common& common, const std::string& dataset_path, int steps, uint64_t seed,
              const std::string& out, const std::string& metrics_path) {
    Config cfg = resolve_config(common);
    if (steps >= 0) cfg.steps = steps;
    Dataset ds = load_dataset(dataset_path);
    if (ds.K != cfg.K || ds.N != cfg.N)
        throw std::invalid_argument("dataset K/N does not match config");

    NetConfig net = cfg.net();
    Featurizer fz = Featurizer::make(net);
    std::vector<TrainSample> samples;
    samples.reserve(ds.records.size());
    for (const auto& r : ds.records) samples.push_back(to_train_sample(r, fz));

    ParamStore params = init_params(net, seed);
    DiffusionSchedule sched = build_schedule(cfg.T, schedule_kind_from_string(cfg.schedule));
    MetricsLog log = train_planner(samples, params, fz, net, cfg.loss_weights(), sched,
                                   cfg.planner_opt(), seed);
    save_checkpoint(out, kPlannerMagic, cfg, params, ds.stats);
    std::string mpath = metrics_path.empty() ? out + ".metrics.csv" : metrics_path;
    log.write_csv(mpath);
    std::printf("checkpoint: %s\n", out.c_str());
    if (!log.rows.empty())
        std::printf("loss: %.6f (step 0) -> %.6f (step %d)\n", log.rows.front().loss_total,
                    log.rows.back().loss_total, log.rows.back().step);
    return 0;
}

int cmd_train_policy(const Common& common, const std::string& dataset_path,
                     const std::string& planner_path, int steps, uint64_t seed,
                     const std::string& out) {
    Config cfg = resolve_config(common);
    if (steps >= 0) cfg.policy_steps = steps;
    Dataset ds = load_dataset(dataset_path);

    std::unique_ptr<DiffusionPlanner> planner;
    if (!planner_path.empty()) {
        Checkpoint ck = load_checkpoint(planner_path, kPlannerMagic);
        if (!ck.config.architecture_matches(cfg))
            throw std::invalid_argument("planner checkpoint config mismatch");
        planner = std::make_unique<DiffusionPlanner>(ck);
    }

    std::vector<PolicySample> samples;
    samples.reserve(ds.records.size());
    for (const auto& r : ds.records) samples.push_back(to_policy_sample(r, ds.stats));

    PolicyConfig pcfg = cfg.policy();
    ParamStore params = init_policy_params(pcfg, seed);

    std::function<FlowTensor(const BaseState&)> plan_fn;
    const std::function<FlowTensor(const BaseState&)>* plan_ptr = nullptr;
    uint64_t plan_counter = 0;
    if (cfg.on_plan) {
        if (!planner) throw std::invalid_argument("on-plan training requires --planner");
        plan_fn = [&](const BaseState& base) {
            return planner->plan(base.obs, base.task_id, nullptr, mix_seed(seed, plan_counter++));
        };
        plan_ptr = &plan_fn;
    }

    MetricsLog log = bc_train(samples, params, pcfg, cfg.policy_opt(), seed, plan_ptr);
    save_checkpoint(out, kPolicyMagic, cfg, params, ds.stats);
    log.write_csv(out + ".metrics.csv");
    std::printf("policy checkpoint: %s\n", out.c_str());
    if (!log.rows.empty())
        std::printf("loss: %.6f (step 0) -> %.6f (step %d)\n", log.rows.front().loss_total,
                    log.rows.back().loss_total, log.rows.back().step);
    return 0;
}

int cmd_sample(const Common& common, const std::string& planner_path,
               const std::string& dataset_path, int index, uint64_t seed,
               const std::string& out) {
    (void)common;
    Checkpoint ck = load_checkpoint(planner_path, kPlannerMagic);
    Dataset ds = load_dataset(dataset_path);
    if (index < 0 || index >= static_cast<int>(ds.records.size()))
        throw std::invalid_argument("sample index out of range");
    const DatasetRecord& rec = ds.records[static_cast<size_t>(index)];

    DiffusionPlanner planner(ck);
    FlowTensor flow = planner.plan(rec.observation, rec.task_id, &rec.query_points, seed);
    save_flow(out, flow);
    write_flow_svg(out + ".svg", flow);

    double cx = 0, cy = 0, cz = 0;
    for (int n = 0; n < flow.N; ++n) {
        cx += flow.at(flow.K - 1, n, 0);
        cy += flow.at(flow.K - 1, n, 1);
        cz += flow.at(flow.K - 1, n, 2);
    }
    cx /= flow.N;
    cy /= flow.N;
    cz /= flow.N;
    std::printf("flow: %s (svg: %s.svg)\n", out.c_str(), out.c_str());
    std::printf("terminal centroid: (%.4f, %.4f, %.4f)\n", cx, cy, cz);
    std::printf("record goal:       (%.4f, %.4f, %.4f)\n", rec.goal_pos[0], rec.goal_pos[1],
                rec.goal_pos[2]);
    return 0;
}

std::unique_ptr<Planner> make_planner(const std::string& spec, const Config& cfg,
                                      const TaskSpec& task) {
    if (spec == "oracle")
        return std::make_unique<OraclePlanner>(task, cfg.world(), cfg.K, cfg.N, cfg.gamma);
    Checkpoint ck = load_checkpoint(spec, kPlannerMagic);
    return std::make_unique<DiffusionPlanner>(ck);
}

std::unique_ptr<ChunkPolicy> make_policy(const std::string& spec, const Config& cfg,
                                         const TaskSpec& task) {
    if (spec == "expert") return std::make_unique<ExpertPolicy>(task, cfg.world(), cfg.H);
    Checkpoint ck = load_checkpoint(spec, kPolicyMagic);
    return std::make_unique<LearnedPolicy>(ck);
}

int cmd_rollout(const Common& common, const std::string& planner_path,
                const std::string& policy_path, int task_id, int r, uint64_t seed,
                const std::string& trace_path, int drop_step, bool open_loop) {
    Config cfg = resolve_config(common);
    TaskSpec task = TaskSpec::preset(task_id);
    task.drop_step = drop_step;
    auto planner = make_planner(planner_path, cfg, task);
    auto policy = make_policy(policy_path, cfg, task);

    RolloutLimits limits;
    limits.r = r > 0 ? r : cfg.r;
    limits.H = cfg.H;
    limits.plan_limit = cfg.plan_limit;
    limits.step_limit = cfg.step_limit;
    limits.replanning = !open_loop;

    RolloutResult res = run_closed_loop(*planner, *policy, task, cfg.world(), limits, seed);
    if (!trace_path.empty()) write_trace(trace_path, res);
    std::printf("success: %s\n", res.success ? "yes" : "no");
    std::printf("steps: %d  plans: %d\n", res.steps_used, res.plans_issued);
    return 0;
}

int cmd_eval(const Common& common, const std::string& planner_path,
             const std::string& policy_path, const std::string& suite, int trials, int r,
             uint64_t seed, const std::string& out, int drop_step, bool open_loop) {
    Config cfg = resolve_config(common);
    if (trials < 1) throw std::invalid_argument("no trials");
    std::vector<TaskSpec> tasks;
    for (int id : parse_task_list(suite)) {
        TaskSpec t = TaskSpec::preset(id);
        t.drop_step = drop_step;
        tasks.push_back(t);
    }
    auto planner = make_planner(planner_path, cfg, tasks.front());
    auto policy = make_policy(policy_path, cfg, tasks.front());

    RolloutLimits limits;
    limits.r = r > 0 ? r : cfg.r;
    limits.H = cfg.H;
    limits.plan_limit = cfg.plan_limit;
    limits.step_limit = cfg.step_limit;
    limits.replanning = !open_loop;

    EvalTable table =
        evaluate(*planner, *policy, tasks, trials, cfg.world(), limits, seed, cfg.threads);
    if (!out.empty()) table.write_csv(out);
    std::printf("%s", table.to_csv().c_str());
    return 0;
}

int cmd_gradcheck(bool all, const std::string& block, uint64_t seed) {
    std::vector<GradCheckResult> results;
    if (all || block.empty()) {
        results = grad_check_all(seed);
    } else {
        results.push_back(grad_check(block, seed));
    }
    bool ok = true;
    std::printf("%-16s %-12s %-10s %s\n", "block", "max_rel_err", "threshold", "status");
    for (const auto& r : results) {
        std::printf("%-16s %-12.3e %-10.0e %s\n", r.block.c_str(), r.max_rel_err, r.threshold,
                    r.pass ? "PASS" : "FAIL");
        ok = ok && r.pass;
    }
    if (!ok) throw std::runtime_error("gradient check failed");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"4D keypoint-flow diffusion planner and flow-conditioned policy"};
    app.require_subcommand(1);

    Common common;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic demonstration dataset");
    std::string gen_tasks = "0";
    int gen_episodes = 200;
    uint64_t gen_seed = 1;
    std::string gen_out = "dataset.f4dd";
    add_common(gen, common);
    gen->add_option("--task", gen_tasks, "task preset id or comma list (0,1,2)");
    gen->add_option("--episodes", gen_episodes, "number of episodes");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--out", gen_out, "output dataset path")->required();

    auto* tr = app.add_subcommand("train", "train the flow diffusion planner");
    std::string tr_dataset, tr_out = "planner.f4dc", tr_metrics;
    int tr_steps = -1;
    uint64_t tr_seed = 1;
    add_common(tr, common);
    tr->add_option("--dataset", tr_dataset, "dataset file")->required();
    tr->add_option("--steps", tr_steps, "training steps (overrides config)");
    tr->add_option("--seed", tr_seed, "training seed");
    tr->add_option("--out", tr_out, "checkpoint output path")->required();
    tr->add_option("--metrics", tr_metrics, "metrics csv path (default <out>.metrics.csv)");

    auto* trp = app.add_subcommand("train-policy", "train the flow-conditioned action policy");
    std::string trp_dataset, trp_planner, trp_out = "policy.f4dp";
    int trp_steps = -1;
    uint64_t trp_seed = 1;
    add_common(trp, common);
    trp->add_option("--dataset", trp_dataset, "dataset file")->required();
    trp->add_option("--planner", trp_planner, "frozen planner checkpoint (on-plan mode)");
    trp->add_option("--steps", trp_steps, "training steps (overrides config)");
    trp->add_option("--seed", trp_seed, "training seed");
    trp->add_option("--out", trp_out, "policy checkpoint output path")->required();

    auto* smp = app.add_subcommand("sample", "sample a flow plan for a dataset condition");
    std::string smp_planner, smp_dataset, smp_out = "flow.f4d1";
    int smp_index = 0;
    uint64_t smp_seed = 1;
    add_common(smp, common);
    smp->add_option("--planner", smp_planner, "planner checkpoint")->required();
    smp->add_option("--dataset", smp_dataset, "dataset file")->required();
    smp->add_option("--index", smp_index, "record index to condition on");
    smp->add_option("--seed", smp_seed, "sampling seed");
    smp->add_option("--out", smp_out, "flow output path (svg written alongside)")->required();

    auto* ro = app.add_subcommand("rollout", "run one closed-loop episode");
    std::string ro_planner, ro_policy, ro_trace;
    int ro_task = 0, ro_r = -1, ro_drop = -1;
    bool ro_open_loop = false;
    uint64_t ro_seed = 1;
    add_common(ro, common);
    ro->add_option("--planner", ro_planner, "planner checkpoint or 'oracle'")->required();
    ro->add_option("--policy", ro_policy, "policy checkpoint or 'expert'")->required();
    ro->add_option("--task", ro_task, "task preset id");
    ro->add_option("--r", ro_r, "fast chunks per slow update (overrides config)");
    ro->add_option("--seed", ro_seed, "rollout seed");
    ro->add_option("--trace", ro_trace, "trace output path");
    ro->add_option("--drop-step", ro_drop, "force a grasp drop at the first held step >= this");
    ro->add_flag("--open-loop", ro_open_loop, "first plan only, never refreshed");

    auto* ev = app.add_subcommand("eval", "success rates over seeded rollouts");
    std::string ev_planner, ev_policy, ev_suite = "0", ev_out;
    int ev_trials = 20, ev_r = -1, ev_drop = -1;
    bool ev_open_loop = false;
    uint64_t ev_seed = 1;
    add_common(ev, common);
    ev->add_option("--planner", ev_planner, "planner checkpoint or 'oracle'")->required();
    ev->add_option("--policy", ev_policy, "policy checkpoint or 'expert'")->required();
    ev->add_option("--suite", ev_suite, "comma list of task ids");
    ev->add_option("--trials", ev_trials, "trials per task");
    ev->add_option("--r", ev_r, "fast chunks per slow update (overrides config)");
    ev->add_option("--seed", ev_seed, "base seed");
    ev->add_option("--out", ev_out, "csv output path");
    ev->add_option("--drop-step", ev_drop, "force a grasp drop at the first held step >= this");
    ev->add_flag("--open-loop", ev_open_loop, "first plan only, never refreshed");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    bool gc_all = false;
    std::string gc_block;
    uint64_t gc_seed = 42;
    gc->add_flag("--all", gc_all, "check every registered block");
    gc->add_option("--block", gc_block, "check a single block by name");
    gc->add_option("--seed", gc_seed, "randomization seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;  // --help exits 0, usage errors exit 1
    }

    try {
        if (gen->parsed()) return cmd_gen_data(common, gen_tasks, gen_episodes, gen_seed, gen_out);
        if (tr->parsed()) return cmd_train(common, tr_dataset, tr_steps, tr_seed, tr_out,
                                           tr_metrics);
        if (trp->parsed())
            return cmd_train_policy(common, trp_dataset, trp_planner, trp_steps, trp_seed,
                                    trp_out);
        if (smp->parsed())
            return cmd_sample(common, smp_planner, smp_dataset, smp_index, smp_seed, smp_out);
        if (ro->parsed())
            return cmd_rollout(common, ro_planner, ro_policy, ro_task, ro_r, ro_seed, ro_trace,
                               ro_drop, ro_open_loop);
        if (ev->parsed())
            return cmd_eval(common, ev_planner, ev_policy, ev_suite, ev_trials, ev_r, ev_seed,
                            ev_out, ev_drop, ev_open_loop);
        if (gc->parsed()) return cmd_gradcheck(gc_all, gc_block, gc_seed);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 0;
}
