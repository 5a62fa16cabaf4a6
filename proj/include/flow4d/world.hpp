#pragma once

#include <array>
#include <optional>
#include <vector>

#include "flow4d/rng.hpp"
#include "flow4d/tape.hpp"

namespace flow4d {

using Vec3 = std::array<double, 3>;

struct WorldConfig {
    double grasp_radius = 0.05;
    double max_step = 0.02;
    double goal_tol = 0.05;
    double object_radius = 0.03;
    double arena_min = 0.0;
    double arena_max = 1.0;

    void validate() const;
};

struct WorldObject {
    int id = 0;
    Vec3 pos{0, 0, 0};
    double radius = 0.03;
    Vec3 goal{0, 0, 0};     // this object's nominal placement target
    double identity = 0.0;  // instruction-referenced identity channel (+1/-1)
};

struct GoalRegion {
    int object_id = 0;
    Vec3 target{0, 0, 0};
    double tol = 0.05;
};

struct WorldState {
    Vec3 gripper_pos{0, 0, 0};
    bool gripper_open = true;
    std::optional<int> held_object;
    std::vector<WorldObject> objects;      // slot order == observation order
    std::vector<GoalRegion> goal_regions;  // success criterion
    long step = 0;
};

// Task presets:
//   0 - single-object pick-place
//   1 - two-object distractor, move the identity +1 object
//   2 - two-object distractor, move the identity -1 object
struct TaskSpec {
    int task_id = 0;
    int n_objects = 1;
    double obj_xy_min = 0.15, obj_xy_max = 0.85;
    double grip_xy_min = 0.15, grip_xy_max = 0.85;
    double grip_z_min = 0.10, grip_z_max = 0.40;
    double min_separation = 0.18;
    // perturbation: break the grasp at the first held step >= drop_step
    // (object falls to the floor with a lateral offset); -1 disables
    int drop_step = -1;

    static TaskSpec preset(int task_id);
    void validate() const;
};

// Observation layout, width 23:
//   [0:3)  gripper position        [3]    gripper open flag
//   [4:7)  held one-hot (none, slot0, slot1)
//   slot0: [7:10) pos, [10:13) goal, [13] present, [14] identity
//   slot1: [15:18) pos, [18:21) goal, [21] present, [22] identity
inline constexpr int kDObs = 23;

WorldState init_world(const TaskSpec& task, const WorldConfig& wc, Rng& rng);

Mat observe(const WorldState& s);                                // 1 x 23
WorldState reconstruct_world(const Mat& obs, const WorldConfig& wc);
Mat proprio_of(const WorldState& s);                             // 1 x 4

void world_step(WorldState& s, const std::array<double, 4>& action, const WorldConfig& wc);

bool task_success(const WorldState& s);

// Break an active grasp: force the gripper open and let the object fall to
// the floor with a small seeded lateral offset.
void force_drop(WorldState& s, const WorldConfig& wc, Rng& rng);

int expert_target_slot(const WorldState& s, const TaskSpec& task);

// Finite-state scripted demonstrator: approach, grasp, transport, release.
std::array<double, 4> scripted_expert(const WorldState& s, const TaskSpec& task,
                                      const WorldConfig& wc);

}  // namespace flow4d
