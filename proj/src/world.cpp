#include "flow4d/world.hpp"

#include <cmath>
#include <stdexcept>

namespace flow4d {

namespace {

double dist3(const Vec3& a, const Vec3& b) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
}

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

}  // namespace

void WorldConfig::validate() const {
    if (!(grasp_radius > 0.0 && max_step > 0.0 && goal_tol > 0.0 && object_radius > 0.0))
        throw std::invalid_argument("WorldConfig: radii and steps must be positive");
    if (!(arena_max > arena_min)) throw std::invalid_argument("WorldConfig: bad arena bounds");
}

TaskSpec TaskSpec::preset(int task_id) {
    TaskSpec t;
    t.task_id = task_id;
    switch (task_id) {
        case 0:
            t.n_objects = 1;
            break;
        case 1:
        case 2:
            t.n_objects = 2;
            break;
        default:
            throw std::invalid_argument("unknown task preset: " + std::to_string(task_id));
    }
    return t;
}

void TaskSpec::validate() const {
    if (task_id < 0) throw std::invalid_argument("TaskSpec: bad task_id");
    if (n_objects < 1 || n_objects > 2) throw std::invalid_argument("TaskSpec: n_objects in {1,2}");
    if (!(obj_xy_max > obj_xy_min) || !(grip_xy_max > grip_xy_min) || !(grip_z_max > grip_z_min))
        throw std::invalid_argument("TaskSpec: bad ranges");
    if ((task_id == 1 || task_id == 2) && n_objects != 2)
        throw std::invalid_argument("TaskSpec: distractor tasks need two objects");
}

WorldState init_world(const TaskSpec& task, const WorldConfig& wc, Rng& rng) {
    task.validate();
    wc.validate();
    WorldState s;
    s.gripper_pos = {rng.uniform(task.grip_xy_min, task.grip_xy_max),
                     rng.uniform(task.grip_xy_min, task.grip_xy_max),
                     rng.uniform(task.grip_z_min, task.grip_z_max)};
    s.gripper_open = true;

    auto sample_xy = [&](void) -> Vec3 {
        return {rng.uniform(task.obj_xy_min, task.obj_xy_max),
                rng.uniform(task.obj_xy_min, task.obj_xy_max), wc.object_radius};
    };
    auto far_enough = [&](const Vec3& p, const std::vector<Vec3>& others) {
        for (const auto& o : others)
            if (dist3(p, o) < task.min_separation) return false;
        return true;
    };

    std::vector<Vec3> placed;
    for (int i = 0; i < task.n_objects; ++i) {
        Vec3 pos;
        do {
            pos = sample_xy();
        } while (!far_enough(pos, placed));
        placed.push_back(pos);
    }
    // goals, kept clear of the objects and of each other
    std::vector<Vec3> goals;
    for (int i = 0; i < task.n_objects; ++i) {
        Vec3 g;
        std::vector<Vec3> avoid = placed;
        avoid.insert(avoid.end(), goals.begin(), goals.end());
        do {
            g = sample_xy();
        } while (!far_enough(g, avoid));
        goals.push_back(g);
    }

    // slot order is shuffled relative to identity for two-object tasks
    std::vector<double> identities;
    if (task.n_objects == 2) {
        bool flip = rng.bernoulli(0.5);
        identities = flip ? std::vector<double>{-1.0, 1.0} : std::vector<double>{1.0, -1.0};
    } else {
        identities = {1.0};
    }

    for (int i = 0; i < task.n_objects; ++i) {
        WorldObject o;
        o.id = i;
        o.pos = placed[i];
        o.radius = wc.object_radius;
        o.goal = goals[i];
        o.identity = identities[i];
        s.objects.push_back(o);
    }

    int target = expert_target_slot(s, task);
    s.goal_regions.push_back({s.objects[target].id, s.objects[target].goal, wc.goal_tol});
    return s;
}

Mat observe(const WorldState& s) {
    Mat o = Mat::Zero(1, kDObs);
    for (int i = 0; i < 3; ++i) o(0, i) = s.gripper_pos[i];
    o(0, 3) = s.gripper_open ? 1.0 : 0.0;
    int held = s.held_object ? (*s.held_object + 1) : 0;
    o(0, 4 + held) = 1.0;
    for (size_t i = 0; i < s.objects.size() && i < 2; ++i) {
        int base = 7 + static_cast<int>(i) * 8;
        const WorldObject& obj = s.objects[i];
        for (int d = 0; d < 3; ++d) o(0, base + d) = obj.pos[d];
        for (int d = 0; d < 3; ++d) o(0, base + 3 + d) = obj.goal[d];
        o(0, base + 6) = 1.0;
        o(0, base + 7) = obj.identity;
    }
    return o;
}

WorldState reconstruct_world(const Mat& obs, const WorldConfig& wc) {
    if (obs.rows() != 1 || obs.cols() != kDObs)
        throw std::invalid_argument("reconstruct_world: bad observation shape");
    WorldState s;
    for (int i = 0; i < 3; ++i) s.gripper_pos[i] = obs(0, i);
    s.gripper_open = obs(0, 3) > 0.5;
    int held = 0;
    for (int i = 1; i < 3; ++i)
        if (obs(0, 4 + i) > obs(0, 4 + held)) held = i;
    for (int i = 0; i < 2; ++i) {
        int base = 7 + i * 8;
        if (obs(0, base + 6) < 0.5) continue;
        WorldObject o;
        o.id = i;
        for (int d = 0; d < 3; ++d) o.pos[d] = obs(0, base + d);
        for (int d = 0; d < 3; ++d) o.goal[d] = obs(0, base + 3 + d);
        o.radius = wc.object_radius;
        o.identity = obs(0, base + 7);
        s.objects.push_back(o);
    }
    if (held > 0 && held - 1 < static_cast<int>(s.objects.size()))
        s.held_object = held - 1;
    return s;
}

Mat proprio_of(const WorldState& s) {
    Mat p(1, 4);
    for (int i = 0; i < 3; ++i) p(0, i) = s.gripper_pos[i];
    p(0, 3) = s.gripper_open ? 1.0 : 0.0;
    return p;
}

void world_step(WorldState& s, const std::array<double, 4>& action, const WorldConfig& wc) {
    for (double a : action)
        if (!std::isfinite(a)) throw std::invalid_argument("world_step: non-finite action");

    for (int i = 0; i < 3; ++i) {
        double d = clamp(action[i], -wc.max_step, wc.max_step);
        s.gripper_pos[i] = clamp(s.gripper_pos[i] + d, wc.arena_min, wc.arena_max);
    }

    bool close = action[3] > 0.5;
    if (close) {
        s.gripper_open = false;
        if (!s.held_object) {
            int best = -1;
            double best_d = wc.grasp_radius;
            for (const auto& o : s.objects) {
                double d = dist3(o.pos, s.gripper_pos);
                if (d <= best_d) {
                    best_d = d;
                    best = o.id;
                }
            }
            if (best >= 0) s.held_object = best;
        }
    } else {
        s.gripper_open = true;
        s.held_object.reset();
    }

    if (s.held_object)
        for (auto& o : s.objects)
            if (o.id == *s.held_object) o.pos = s.gripper_pos;

    ++s.step;
}

bool task_success(const WorldState& s) {
    if (s.goal_regions.empty()) return false;
    for (const auto& g : s.goal_regions) {
        const WorldObject* obj = nullptr;
        for (const auto& o : s.objects)
            if (o.id == g.object_id) obj = &o;
        if (!obj) return false;
        if (s.held_object && *s.held_object == g.object_id) return false;
        if (dist3(obj->pos, g.target) > g.tol) return false;
    }
    return true;
}

void force_drop(WorldState& s, const WorldConfig& wc, Rng& rng) {
    if (!s.held_object) return;
    int id = *s.held_object;
    s.held_object.reset();
    s.gripper_open = true;
    double ang = rng.uniform(0.0, 2.0 * M_PI);
    for (auto& o : s.objects) {
        if (o.id != id) continue;
        o.pos[0] = clamp(o.pos[0] + 0.08 * std::cos(ang), wc.arena_min, wc.arena_max);
        o.pos[1] = clamp(o.pos[1] + 0.08 * std::sin(ang), wc.arena_min, wc.arena_max);
        o.pos[2] = o.radius;
    }
}

int expert_target_slot(const WorldState& s, const TaskSpec& task) {
    if (s.objects.empty()) throw std::invalid_argument("expert: no objects");
    if (task.task_id == 0) return 0;
    double want = (task.task_id == 1) ? 1.0 : -1.0;
    for (size_t i = 0; i < s.objects.size(); ++i)
        if (s.objects[i].identity == want) return static_cast<int>(i);
    throw std::invalid_argument("expert: no object with requested identity");
}

std::array<double, 4> scripted_expert(const WorldState& s, const TaskSpec& task,
                                      const WorldConfig& wc) {
    std::array<double, 4> a{0, 0, 0, 0};
    if (task_success(s)) return a;  // settle, gripper open

    int slot = expert_target_slot(s, task);
    const WorldObject& target = s.objects[slot];

    auto move_toward = [&](const Vec3& dst) {
        for (int i = 0; i < 3; ++i)
            a[i] = clamp(dst[i] - s.gripper_pos[i], -wc.max_step, wc.max_step);
    };

    if (s.held_object && *s.held_object == target.id) {
        double d = dist3(s.gripper_pos, target.goal);
        if (d > wc.goal_tol * 0.5) {
            move_toward(target.goal);
            a[3] = 1.0;  // keep holding
        } else {
            a[3] = 0.0;  // release at the goal
        }
        return a;
    }

    // not holding the target (holding a distractor never happens under this
    // expert; opening is the safe recovery either way)
    double d = dist3(s.gripper_pos, target.pos);
    if (d > wc.grasp_radius * 0.5) {
        move_toward(target.pos);
        a[3] = 0.0;
    } else {
        a[3] = 1.0;  // close on the object
    }
    return a;
}

}  // namespace flow4d
