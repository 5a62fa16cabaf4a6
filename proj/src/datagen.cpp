#include "flow4d/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace flow4d {

void DatagenConfig::validate() const {
    if (K < 2) throw std::invalid_argument("DatagenConfig: K must be >= 2");
    if (N < 1) throw std::invalid_argument("DatagenConfig: N must be >= 1");
    if (!(gamma > 0.0)) throw std::invalid_argument("DatagenConfig: gamma must be > 0");
    if (persistence < 1 || min_len < 1 || pairs_per_segment < 1 || episode_cap < 2 || H < 1)
        throw std::invalid_argument("DatagenConfig: counts must be >= 1");
    if (jitter_rate < 0.0 || jitter_rate > 1.0)
        throw std::invalid_argument("DatagenConfig: jitter_rate in [0,1]");
}

Mat keypoint_offsets(int N) {
    Rng rng(0x6f666673);  // fixed: offsets are a dataset-wide constant
    Mat off(N, 3);
    for (int n = 0; n < N; ++n)
        for (int d = 0; d < 3; ++d) off(n, d) = rng.uniform(-0.02, 0.02);
    for (int d = 0; d < 3; ++d) {
        double mean = off.col(d).mean();
        off.col(d).array() -= mean;  // zero-mean: keypoint centroid == gripper center
    }
    return off;
}

Episode gen_synthetic_episode(const TaskSpec& task, const WorldConfig& wc,
                              const DatagenConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(mix_seed(seed, 0x657069, task.task_id));
    WorldState s = init_world(task, wc, rng);
    Mat offsets = keypoint_offsets(cfg.N);

    std::vector<Mat> obs_rows;
    std::vector<std::array<double, 4>> acts;
    std::vector<double> signal;
    std::vector<Vec3> grip_track;

    int settle_left = -1;
    for (int t = 0; t < cfg.episode_cap; ++t) {
        obs_rows.push_back(observe(s));
        grip_track.push_back(s.gripper_pos);
        signal.push_back(s.gripper_open ? 0.0 : 1.0);
        std::array<double, 4> a = scripted_expert(s, task, wc);
        acts.push_back(a);
        world_step(s, a, wc);
        if (settle_left < 0 && task_success(s)) settle_left = cfg.settle_steps;
        if (settle_left > 0) --settle_left;
        if (settle_left == 0) break;
    }

    Episode ep;
    ep.length = static_cast<int>(obs_rows.size());
    ep.task_id = task.task_id;
    ep.observations = Mat(ep.length, kDObs);
    ep.actions = Mat(ep.length, 4);
    ep.tracks = Mat(ep.length, cfg.N * 3);
    ep.gripper_signal = signal;
    for (int t = 0; t < ep.length; ++t) {
        ep.observations.row(t) = obs_rows[t].row(0);
        for (int i = 0; i < 4; ++i) ep.actions(t, i) = acts[t][i];
        for (int n = 0; n < cfg.N; ++n)
            for (int d = 0; d < 3; ++d) ep.tracks(t, 3 * n + d) = grip_track[t][d] + offsets(n, d);
    }

    if (cfg.jitter_rate > 0.0)
        for (int t = 0; t < ep.length; ++t)
            if (rng.bernoulli(cfg.jitter_rate))
                ep.gripper_signal[t] = ep.gripper_signal[t] > 0.0 ? 0.0 : 1.0;

    return ep;
}

std::vector<uint8_t> binarize_gripper(const std::vector<double>& g) {
    if (g.empty()) throw std::invalid_argument("binarize_gripper: empty series");
    std::vector<uint8_t> b(g.size());
    for (size_t i = 0; i < g.size(); ++i) b[i] = g[i] > 0.0 ? 1 : 0;
    return b;
}

std::vector<AtomicSegment> segment_atomic(const std::vector<uint8_t>& b, int persistence,
                                          int min_len) {
    if (b.empty()) throw std::invalid_argument("segment_atomic: empty series");
    if (persistence < 1 || min_len < 1)
        throw std::invalid_argument("segment_atomic: persistence and min_len must be >= 1");
    const int H = static_cast<int>(b.size());

    // accepted boundaries: a switch away from the current stable state that
    // persists for >= `persistence` steps
    std::vector<AtomicSegment> segs;
    int cur_state = b[0];
    int start = 0;
    for (int t = 0; t + 1 < H; ++t) {
        int next = b[t + 1];
        if (next == cur_state) continue;
        if (t + persistence >= H) continue;  // cannot persist long enough
        bool stable = true;
        for (int j = t + 1; j <= t + persistence; ++j)
            if (b[j] != next) {
                stable = false;
                break;
            }
        if (!stable) continue;
        segs.push_back({start, t, cur_state});
        start = t + 1;
        cur_state = next;
    }
    segs.push_back({start, H - 1, cur_state});

    // merge short segments into the preceding one (the first into the next)
    bool changed = true;
    while (changed && segs.size() > 1) {
        changed = false;
        for (size_t i = 0; i < segs.size(); ++i) {
            int len = segs[i].end - segs[i].start + 1;
            if (len >= min_len) continue;
            if (i == 0) {
                segs[1].start = segs[0].start;
                segs.erase(segs.begin());
            } else {
                segs[i - 1].end = segs[i].end;
                segs.erase(segs.begin() + static_cast<long>(i));
            }
            changed = true;
            break;
        }
    }
    return segs;
}

std::vector<int> resample_keyframes(const AtomicSegment& segment, int start_override, int K,
                                    double gamma) {
    if (K < 2) throw std::invalid_argument("resample_keyframes: K must be >= 2");
    if (!(gamma > 0.0)) throw std::invalid_argument("resample_keyframes: gamma must be > 0");
    if (start_override < segment.start || start_override > segment.end)
        throw std::invalid_argument("resample_keyframes: start outside segment");
    const double s = static_cast<double>(start_override);
    const double e = static_cast<double>(segment.end);
    std::vector<int> out(K);
    for (int k = 0; k < K; ++k) {
        double u = std::pow(static_cast<double>(k) / (K - 1), gamma);
        out[k] = static_cast<int>(std::floor(s + u * (e - s)));
    }
    return out;
}

FlowTensor extract_flow_target(const Episode& ep, const std::vector<int>& keyframes) {
    const int N = static_cast<int>(ep.tracks.cols()) / 3;
    FlowTensor f(static_cast<int>(keyframes.size()), N);
    for (size_t k = 0; k < keyframes.size(); ++k) {
        int t = keyframes[k];
        if (t < 0 || t >= ep.length)
            throw std::out_of_range("extract_flow_target: keyframe outside episode");
        for (int n = 0; n < N; ++n)
            for (int d = 0; d < 3; ++d)
                f.at(static_cast<int>(k), n, d) = ep.track(t, n, d);
    }
    return f;
}

void FilterConfig::validate() const {
    if (!(static_threshold > 0.0 && outlier_mad_k > 0.0 && delta_max > 0.0))
        throw std::invalid_argument("FilterConfig: thresholds must be positive");
}

namespace {

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    size_t m = v.size() / 2;
    if (v.size() % 2 == 1) return v[m];
    return 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

std::vector<uint8_t> filter_tracks(const Mat& tracks, const FilterConfig& cfg) {
    cfg.validate();
    const int H = static_cast<int>(tracks.rows());
    const int N = static_cast<int>(tracks.cols()) / 3;
    if (H < 2) throw std::invalid_argument("filter_tracks: need H >= 2");

    std::vector<double> path(N, 0.0);
    std::vector<double> max_step(N, 0.0);
    for (int n = 0; n < N; ++n) {
        for (int t = 0; t + 1 < H; ++t) {
            double s = 0.0;
            for (int d = 0; d < 3; ++d) {
                double dd = tracks(t + 1, 3 * n + d) - tracks(t, 3 * n + d);
                s += dd * dd;
            }
            double step = std::sqrt(s);
            path[n] += step;
            max_step[n] = std::max(max_step[n], step);
        }
    }

    std::vector<uint8_t> keep(N, 1);
    for (int n = 0; n < N; ++n)
        if (path[n] < cfg.static_threshold) keep[n] = 0;  // (i) near-static

    std::vector<double> survivors;
    for (int n = 0; n < N; ++n)
        if (keep[n]) survivors.push_back(path[n]);
    if (!survivors.empty()) {
        double med = median_of(survivors);
        std::vector<double> dev;
        dev.reserve(survivors.size());
        for (double p : survivors) dev.push_back(std::abs(p - med));
        double mad = median_of(dev);
        for (int n = 0; n < N; ++n)
            if (keep[n] && path[n] > med + cfg.outlier_mad_k * mad) keep[n] = 0;  // (ii)
    }

    for (int n = 0; n < N; ++n)
        if (keep[n] && max_step[n] > cfg.delta_max) keep[n] = 0;  // (iii)

    return keep;
}

std::vector<TrainingPair> build_training_pairs(const Episode& ep, const DatagenConfig& cfg,
                                               uint64_t seed) {
    cfg.validate();
    auto b = binarize_gripper(ep.gripper_signal);
    auto segs = segment_atomic(b, cfg.persistence, cfg.min_len);
    Rng rng(mix_seed(seed, 0x70616972, static_cast<uint64_t>(ep.task_id)));
    const int N = static_cast<int>(ep.tracks.cols()) / 3;

    std::vector<TrainingPair> pairs;
    for (const auto& seg : segs) {
        int hi = std::max(seg.start, seg.end - cfg.K);
        for (int j = 0; j < cfg.pairs_per_segment; ++j) {
            TrainingPair p;
            p.segment = seg;
            p.task_id = ep.task_id;
            p.condition_frame = static_cast<int>(rng.uniform_int(seg.start, hi));
            p.observation = ep.observations.row(p.condition_frame);
            auto keyframes = resample_keyframes(seg, p.condition_frame, cfg.K, cfg.gamma);
            p.target = extract_flow_target(ep, keyframes);

            p.query_points = Mat(N, 2);
            for (int n = 0; n < N; ++n) {
                p.query_points(n, 0) = ep.track(p.condition_frame, n, 0);
                p.query_points(n, 1) = ep.track(p.condition_frame, n, 1);
            }

            p.proprio = Mat(1, 4);
            for (int d = 0; d < 3; ++d) p.proprio(0, d) = ep.observations(p.condition_frame, d);
            p.proprio(0, 3) = ep.observations(p.condition_frame, 3);

            p.expert_chunk = ActionChunk(cfg.H);
            for (int h = 0; h < cfg.H; ++h) {
                int t = p.condition_frame + h;
                if (t < ep.length) {
                    for (int d = 0; d < 3; ++d) p.expert_chunk.delta(h, d) = ep.actions(t, d);
                    p.expert_chunk.gripper[h] = ep.actions(t, 3);
                } else {
                    p.expert_chunk.gripper[h] = ep.actions(ep.length - 1, 3);
                }
            }

            for (int d = 0; d < 3; ++d) p.goal_pos[d] = ep.observations(seg.end, d);
            pairs.push_back(std::move(p));
        }
    }
    return pairs;
}

}  // namespace flow4d
