#include "flow4d/oracle.hpp"

namespace flow4d {

FlowTensor oracle_plan(const Mat& obs, const TaskSpec& task, const WorldConfig& wc, int K, int N,
                       double gamma, int horizon_cap) {
    WorldState s = reconstruct_world(obs, wc);
    Mat offsets = keypoint_offsets(N);

    std::vector<Vec3> grip;
    grip.push_back(s.gripper_pos);
    bool start_open = s.gripper_open;
    for (int t = 0; t < horizon_cap; ++t) {
        auto a = scripted_expert(s, task, wc);
        world_step(s, a, wc);
        grip.push_back(s.gripper_pos);
        if (s.gripper_open != start_open) break;  // atomic goal reached
        if (task_success(s)) break;
    }

    Episode ep;
    ep.length = static_cast<int>(grip.size());
    ep.tracks = Mat(ep.length, N * 3);
    for (int t = 0; t < ep.length; ++t)
        for (int n = 0; n < N; ++n)
            for (int d = 0; d < 3; ++d) ep.tracks(t, 3 * n + d) = grip[t][d] + offsets(n, d);

    AtomicSegment seg{0, ep.length - 1, start_open ? 0 : 1};
    auto keyframes = resample_keyframes(seg, 0, K, gamma);
    return extract_flow_target(ep, keyframes);
}

ActionChunk expert_action_chunk(const Mat& obs, const TaskSpec& task, const WorldConfig& wc,
                                int H) {
    WorldState s = reconstruct_world(obs, wc);
    ActionChunk chunk(H);
    for (int h = 0; h < H; ++h) {
        auto a = scripted_expert(s, task, wc);
        for (int d = 0; d < 3; ++d) chunk.delta(h, d) = a[d];
        chunk.gripper[h] = a[3];
        world_step(s, a, wc);
    }
    return chunk;
}

}  // namespace flow4d
