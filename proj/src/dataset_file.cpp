#include "flow4d/dataset_file.hpp"

#include <stdexcept>

#include "flow4d/io.hpp"

namespace flow4d {

Dataset build_dataset(const std::vector<TrainingPair>& pairs, int K, int N, int H) {
    if (pairs.empty()) throw std::invalid_argument("build_dataset: no pairs");
    Dataset ds;
    ds.K = K;
    ds.N = N;
    ds.D_obs = kDObs;
    ds.H = H;

    std::vector<FlowTensor> targets;
    targets.reserve(pairs.size());
    for (const auto& p : pairs) targets.push_back(p.target);
    ds.stats = compute_norm_stats(targets);

    for (const auto& p : pairs) {
        DatasetRecord r;
        r.observation = p.observation;
        r.task_id = p.task_id;
        r.query_points = p.query_points;
        r.flow = normalize(p.target, ds.stats);
        r.proprio = p.proprio;
        r.expert_chunk = p.expert_chunk;
        r.goal_pos = p.goal_pos;
        r.seg_start = static_cast<uint32_t>(p.segment.start);
        r.seg_end = static_cast<uint32_t>(p.segment.end);
        r.condition_frame = static_cast<uint32_t>(p.condition_frame);
        ds.records.push_back(std::move(r));
    }
    return ds;
}

namespace {

void write_mat_f32(BinWriter& w, const Mat& m) {
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) w.f32(static_cast<float>(m(r, c)));
}

Mat read_mat_f32(BinReader& rd, int rows, int cols) {
    Mat m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rd.f32();
    return m;
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& ds) {
    BinWriter w(path);
    w.magic("F4DD");
    w.u32(1);  // version
    w.u32(static_cast<uint32_t>(ds.K));
    w.u32(static_cast<uint32_t>(ds.N));
    w.u32(static_cast<uint32_t>(ds.D_obs));
    w.u32(static_cast<uint32_t>(ds.H));
    w.u32(static_cast<uint32_t>(ds.records.size()));
    for (double c : ds.stats.center) w.f64(c);
    w.f64(ds.stats.scale);
    for (const auto& r : ds.records) {
        write_mat_f32(w, r.observation);
        w.u32(static_cast<uint32_t>(r.task_id));
        write_mat_f32(w, r.query_points);
        write_flow(w, r.flow);
        write_mat_f32(w, r.proprio);
        w.f32_all(r.expert_chunk.deltas);
        w.f32_all(r.expert_chunk.gripper);
        for (double g : r.goal_pos) w.f32(static_cast<float>(g));
        w.u32(r.seg_start);
        w.u32(r.seg_end);
        w.u32(r.condition_frame);
    }
    w.close();
}

Dataset load_dataset(const std::string& path) {
    BinReader rd(path);
    rd.expect_magic("F4DD", "dataset");
    uint32_t version = rd.u32();
    if (version != 1) throw std::runtime_error("unsupported dataset version");
    Dataset ds;
    ds.K = static_cast<int>(rd.u32());
    ds.N = static_cast<int>(rd.u32());
    ds.D_obs = static_cast<int>(rd.u32());
    ds.H = static_cast<int>(rd.u32());
    uint32_t count = rd.u32();
    for (double& c : ds.stats.center) c = rd.f64();
    ds.stats.scale = rd.f64();
    ds.stats.validate();
    if (ds.D_obs != kDObs) throw std::runtime_error("dataset observation width mismatch");

    for (uint32_t i = 0; i < count; ++i) {
        DatasetRecord r;
        r.observation = read_mat_f32(rd, 1, ds.D_obs);
        r.task_id = static_cast<int>(rd.u32());
        r.query_points = read_mat_f32(rd, ds.N, 2);
        r.flow = read_flow(rd);
        if (r.flow.K != ds.K || r.flow.N != ds.N)
            throw std::runtime_error("dataset record flow shape mismatch");
        r.proprio = read_mat_f32(rd, 1, 4);
        r.expert_chunk = ActionChunk(ds.H);
        r.expert_chunk.deltas = rd.f32_all(static_cast<size_t>(ds.H) * 3);
        r.expert_chunk.gripper = rd.f32_all(static_cast<size_t>(ds.H));
        for (double& g : r.goal_pos) g = rd.f32();
        r.seg_start = rd.u32();
        r.seg_end = rd.u32();
        r.condition_frame = rd.u32();
        ds.records.push_back(std::move(r));
    }
    return ds;
}

TrainSample to_train_sample(const DatasetRecord& rec, const Featurizer& fz) {
    TrainSample s;
    s.obs = rec.observation;
    s.task_id = rec.task_id;
    s.query_points = rec.query_points;
    const int n_tok = rec.flow.K * rec.flow.N;
    s.x0 = Mat(n_tok, 3);
    s.weights = Mat(n_tok, 1);
    for (int k = 0; k < rec.flow.K; ++k)
        for (int n = 0; n < rec.flow.N; ++n) {
            for (int d = 0; d < 3; ++d) s.x0(k * rec.flow.N + n, d) = rec.flow.at(k, n, d);
            s.weights(k * rec.flow.N + n, 0) = rec.flow.w(k, n);
        }
    s.teacher_h = fz.teacher(rec.observation);
    return s;
}

PolicySample to_policy_sample(const DatasetRecord& rec, const NormStats& stats) {
    PolicySample s;
    s.base.obs = rec.observation;
    s.base.task_id = rec.task_id;
    s.base.proprio = rec.proprio;
    s.flow = denormalize(rec.flow, stats);
    s.expert = rec.expert_chunk;
    return s;
}

}  // namespace flow4d
