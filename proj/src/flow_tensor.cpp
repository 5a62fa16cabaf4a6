#include "flow4d/flow_tensor.hpp"

#include <cmath>
#include <stdexcept>

#include "flow4d/io.hpp"

namespace flow4d {

double FlowTensor::weight_sum() const {
    double s = 0.0;
    for (double v : weights) s += v;
    return s;
}

void FlowTensor::validate() const {
    if (K < 2) throw std::invalid_argument("FlowTensor: K must be >= 2");
    if (N < 1) throw std::invalid_argument("FlowTensor: N must be >= 1");
    if (values.size() != static_cast<size_t>(K) * N * 3)
        throw std::invalid_argument("FlowTensor: values size mismatch");
    if (weights.size() != static_cast<size_t>(K) * N)
        throw std::invalid_argument("FlowTensor: weights size mismatch");
    for (double v : values)
        if (!std::isfinite(v)) throw std::invalid_argument("FlowTensor: non-finite value");
    for (double w : weights)
        if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("FlowTensor: weight outside [0,1]");
}

void NormStats::validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw std::invalid_argument("NormStats: scale must be positive and finite");
    for (double c : center)
        if (!std::isfinite(c)) throw std::invalid_argument("NormStats: non-finite center");
}

void ActionChunk::validate() const {
    if (H < 1) throw std::invalid_argument("ActionChunk: H must be >= 1");
    if (deltas.size() != static_cast<size_t>(H) * 3 || gripper.size() != static_cast<size_t>(H))
        throw std::invalid_argument("ActionChunk: size mismatch");
    for (double v : deltas)
        if (!std::isfinite(v)) throw std::invalid_argument("ActionChunk: non-finite delta");
    for (double g : gripper)
        if (!(g >= 0.0 && g <= 1.0)) throw std::invalid_argument("ActionChunk: gripper outside [0,1]");
}

NormStats compute_norm_stats(const std::vector<FlowTensor>& dataset) {
    if (dataset.empty()) throw std::invalid_argument("empty dataset");

    NormStats s;
    // pass 1: mean of all first-keyframe keypoint positions
    double cnt = 0.0;
    std::array<double, 3> acc{0.0, 0.0, 0.0};
    for (const auto& f : dataset) {
        f.validate();
        for (int n = 0; n < f.N; ++n) {
            for (int d = 0; d < 3; ++d) acc[d] += f.at(0, n, d);
            cnt += 1.0;
        }
    }
    for (int d = 0; d < 3; ++d) s.center[d] = acc[d] / cnt;

    // pass 2: pooled standard deviation of every centered coordinate
    double sq = 0.0;
    double m = 0.0;
    for (const auto& f : dataset) {
        for (int k = 0; k < f.K; ++k)
            for (int n = 0; n < f.N; ++n)
                for (int d = 0; d < 3; ++d) {
                    double c = f.at(k, n, d) - s.center[d];
                    sq += c * c;
                    m += 1.0;
                }
    }
    s.scale = std::sqrt(sq / m);
    if (s.scale < 1e-6) s.scale = 1e-6;
    return s;
}

FlowTensor normalize(const FlowTensor& flow, const NormStats& stats) {
    stats.validate();
    FlowTensor out = flow;
    for (int k = 0; k < out.K; ++k)
        for (int n = 0; n < out.N; ++n)
            for (int d = 0; d < 3; ++d)
                out.at(k, n, d) = (flow.at(k, n, d) - stats.center[d]) / stats.scale;
    return out;
}

FlowTensor denormalize(const FlowTensor& flow, const NormStats& stats) {
    stats.validate();
    FlowTensor out = flow;
    for (int k = 0; k < out.K; ++k)
        for (int n = 0; n < out.N; ++n)
            for (int d = 0; d < 3; ++d)
                out.at(k, n, d) = flow.at(k, n, d) * stats.scale + stats.center[d];
    return out;
}

void write_flow(BinWriter& w, const FlowTensor& f) {
    w.magic("F4D1");
    w.u32(static_cast<uint32_t>(f.K));
    w.u32(static_cast<uint32_t>(f.N));
    w.f32_all(f.values);
    w.f32_all(f.weights);
}

FlowTensor read_flow(BinReader& r) {
    r.expect_magic("F4D1", "flow");
    FlowTensor f;
    f.K = static_cast<int>(r.u32());
    f.N = static_cast<int>(r.u32());
    if (f.K < 0 || f.N < 0 || f.K > 1 << 20 || f.N > 1 << 20)
        throw std::runtime_error("flow header out of range");
    f.values = r.f32_all(static_cast<size_t>(f.K) * f.N * 3);
    f.weights = r.f32_all(static_cast<size_t>(f.K) * f.N);
    return f;
}

void save_flow(const std::string& path, const FlowTensor& f) {
    BinWriter w(path);
    write_flow(w, f);
    w.close();
}

FlowTensor load_flow(const std::string& path) {
    BinReader r(path);
    return read_flow(r);
}

}  // namespace flow4d
