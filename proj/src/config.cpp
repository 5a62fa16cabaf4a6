#include "flow4d/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace flow4d {

namespace {

struct Field {
    const char* name;
    std::function<void(Config&, const std::string&)> set;
    std::function<std::string(const Config&)> get;
};

int parse_int(const std::string& v) {
    size_t pos = 0;
    int x = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("not an integer: " + v);
    return x;
}

uint64_t parse_u64(const std::string& v) {
    size_t pos = 0;
    unsigned long long x = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("not an integer: " + v);
    return x;
}

double parse_double(const std::string& v) {
    size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("not a number: " + v);
    return x;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

#define INT_FIELD(f)                                                       \
    {#f, [](Config& c, const std::string& v) { c.f = parse_int(v); },      \
     [](const Config& c) { return std::to_string(c.f); }}
#define U64_FIELD(f)                                                       \
    {#f, [](Config& c, const std::string& v) { c.f = parse_u64(v); },      \
     [](const Config& c) { return std::to_string(c.f); }}
#define DBL_FIELD(f)                                                       \
    {#f, [](Config& c, const std::string& v) { c.f = parse_double(v); },   \
     [](const Config& c) { return fmt_double(c.f); }}
#define STR_FIELD(f)                                                       \
    {#f, [](Config& c, const std::string& v) { c.f = v; },                 \
     [](const Config& c) { return c.f; }}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        INT_FIELD(K), INT_FIELD(N), DBL_FIELD(gamma), INT_FIELD(persistence),
        INT_FIELD(min_len), INT_FIELD(pairs_per_segment), DBL_FIELD(jitter_rate),
        INT_FIELD(episode_cap), INT_FIELD(settle_steps),
        INT_FIELD(C), INT_FIELD(heads), INT_FIELD(n_local), INT_FIELD(n_3d),
        INT_FIELD(resampler_blocks), INT_FIELD(dit_depth), INT_FIELD(cross_blocks),
        INT_FIELD(n_patch), INT_FIELD(D_teacher), INT_FIELD(n_tasks), U64_FIELD(featurizer_seed),
        INT_FIELD(T), STR_FIELD(schedule), DBL_FIELD(p_uncond), DBL_FIELD(guidance_w),
        DBL_FIELD(lambda_align), DBL_FIELD(lambda_smooth), DBL_FIELD(charbonnier_eps),
        INT_FIELD(sampler_steps),
        DBL_FIELD(lr), INT_FIELD(batch), DBL_FIELD(clip), INT_FIELD(steps),
        INT_FIELD(H), INT_FIELD(C_cond), INT_FIELD(C_base), INT_FIELD(policy_hidden),
        INT_FIELD(task_emb), DBL_FIELD(policy_lr), INT_FIELD(policy_batch),
        INT_FIELD(policy_steps), INT_FIELD(use_flow), INT_FIELD(on_plan),
        DBL_FIELD(grasp_radius), DBL_FIELD(max_step), DBL_FIELD(goal_tol),
        DBL_FIELD(object_radius),
        INT_FIELD(r), INT_FIELD(plan_limit), INT_FIELD(step_limit), INT_FIELD(threads),
    };
    return f;
}

#undef INT_FIELD
#undef U64_FIELD
#undef DBL_FIELD
#undef STR_FIELD

}  // namespace

NetConfig Config::net() const {
    NetConfig n;
    n.C = C;
    n.heads = heads;
    n.n_local = n_local;
    n.n_3d = n_3d;
    n.resampler_blocks = resampler_blocks;
    n.dit_depth = dit_depth;
    n.cross_blocks = std::min(cross_blocks, dit_depth);
    n.n_patch = n_patch;
    n.K = K;
    n.N = N;
    n.D_obs = kDObs;
    n.D_teacher = D_teacher;
    n.n_tasks = n_tasks;
    n.featurizer_seed = featurizer_seed;
    n.validate();
    return n;
}

PolicyConfig Config::policy() const {
    PolicyConfig p;
    p.C_cond = C_cond;
    p.C_base = C_base;
    p.hidden = policy_hidden;
    p.H = H;
    p.heads = heads;
    p.task_emb = task_emb;
    p.n_tasks = n_tasks;
    p.D_obs = kDObs;
    p.use_flow = use_flow != 0;
    p.validate();
    return p;
}

WorldConfig Config::world() const {
    WorldConfig w;
    w.grasp_radius = grasp_radius;
    w.max_step = max_step;
    w.goal_tol = goal_tol;
    w.object_radius = object_radius;
    w.validate();
    return w;
}

DatagenConfig Config::datagen() const {
    DatagenConfig d;
    d.K = K;
    d.N = N;
    d.gamma = gamma;
    d.persistence = persistence;
    d.min_len = min_len;
    d.pairs_per_segment = pairs_per_segment;
    d.jitter_rate = jitter_rate;
    d.episode_cap = episode_cap;
    d.settle_steps = settle_steps;
    d.H = H;
    d.validate();
    return d;
}

LossWeights Config::loss_weights() const {
    LossWeights lw;
    lw.lambda_align = lambda_align;
    lw.lambda_smooth = lambda_smooth;
    lw.charbonnier_eps = charbonnier_eps;
    lw.p_uncond = p_uncond;
    lw.guidance_w = guidance_w;
    lw.validate();
    return lw;
}

AdamConfig Config::planner_opt() const {
    AdamConfig a;
    a.lr = lr;
    a.clip = clip;
    a.batch_size = batch;
    a.steps = steps;
    return a;
}

AdamConfig Config::policy_opt() const {
    AdamConfig a;
    a.lr = policy_lr;
    a.clip = clip;
    a.batch_size = policy_batch;
    a.steps = policy_steps;
    return a;
}

void Config::set(const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (key == f.name) {
            f.set(*this, value);
            return;
        }
    }
    throw std::invalid_argument("unknown config key: " + key);
}

void Config::validate() const {
    net();
    policy();
    world();
    datagen();
    loss_weights();
    schedule_kind_from_string(schedule);
    if (T < 1) throw std::invalid_argument("config: T must be >= 1");
    if (sampler_steps < 1) throw std::invalid_argument("config: sampler_steps must be >= 1");
    if (batch < 1 || policy_batch < 1) throw std::invalid_argument("config: batch must be >= 1");
    if (steps < 0 || policy_steps < 0) throw std::invalid_argument("config: steps must be >= 0");
    if (!(lr > 0.0) || !(policy_lr > 0.0)) throw std::invalid_argument("config: lr must be > 0");
    if (r < 1) throw std::invalid_argument("config: r must be >= 1");
    if (plan_limit < 1 || step_limit < 1)
        throw std::invalid_argument("config: limits must be >= 1");
    if (threads < 1) throw std::invalid_argument("config: threads must be >= 1");
}

std::string Config::to_string() const {
    std::ostringstream out;
    for (const auto& f : fields()) out << f.name << "=" << f.get(*this) << "\n";
    return out.str();
}

Config Config::from_string(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t h = line.find('#');
        if (h != std::string::npos) line = line.substr(0, h);
        size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        size_t b = line.find_last_not_of(" \t\r");
        line = line.substr(a, b - a + 1);
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected key=value");
        std::string key = line.substr(0, eq);
        std::string val = line.substr(eq + 1);
        auto strip = [](std::string s) {
            size_t x = s.find_first_not_of(" \t");
            size_t y = s.find_last_not_of(" \t");
            return x == std::string::npos ? std::string() : s.substr(x, y - x + 1);
        };
        c.set(strip(key), strip(val));
    }
    return c;
}

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return from_string(ss.str());
}

bool Config::architecture_matches(const Config& other) const {
    return K == other.K && N == other.N && C == other.C && heads == other.heads &&
           n_local == other.n_local && n_3d == other.n_3d &&
           resampler_blocks == other.resampler_blocks && dit_depth == other.dit_depth &&
           cross_blocks == other.cross_blocks && n_patch == other.n_patch &&
           D_teacher == other.D_teacher && n_tasks == other.n_tasks &&
           featurizer_seed == other.featurizer_seed && T == other.T &&
           schedule == other.schedule && H == other.H && C_cond == other.C_cond &&
           C_base == other.C_base && policy_hidden == other.policy_hidden &&
           task_emb == other.task_emb;
}

}  // namespace flow4d
