#pragma once

#include <array>
#include <string>
#include <vector>

namespace flow4d {

// A K-keyframe, N-keypoint 3D flow plus per-entry visibility weights.
// Values are stored row-major as [k][n][xyz]; weights as [k][n].
struct FlowTensor {
    int K = 0;
    int N = 0;
    std::vector<double> values;   // K*N*3
    std::vector<double> weights;  // K*N

    FlowTensor() = default;
    FlowTensor(int K_, int N_, double fill = 0.0, double weight = 1.0)
        : K(K_), N(N_), values(static_cast<size_t>(K_) * N_ * 3, fill),
          weights(static_cast<size_t>(K_) * N_, weight) {}

    double& at(int k, int n, int d) { return values[(static_cast<size_t>(k) * N + n) * 3 + d]; }
    double at(int k, int n, int d) const { return values[(static_cast<size_t>(k) * N + n) * 3 + d]; }
    double& w(int k, int n) { return weights[static_cast<size_t>(k) * N + n]; }
    double w(int k, int n) const { return weights[static_cast<size_t>(k) * N + n]; }

    double weight_sum() const;

    // Throws std::invalid_argument on any violated invariant:
    // finite values, weights in [0,1], K >= 2, N >= 1, matching sizes.
    void validate() const;
};

struct NormStats {
    std::array<double, 3> center{0.0, 0.0, 0.0};
    double scale = 1.0;

    void validate() const;  // scale > 0, finite
};

// H consecutive low-level commands: per-step displacement plus a gripper
// value in [0,1].
struct ActionChunk {
    int H = 0;
    std::vector<double> deltas;   // H*3
    std::vector<double> gripper;  // H

    ActionChunk() = default;
    explicit ActionChunk(int H_) : H(H_), deltas(static_cast<size_t>(H_) * 3, 0.0),
                                   gripper(static_cast<size_t>(H_), 0.0) {}

    double& delta(int h, int d) { return deltas[static_cast<size_t>(h) * 3 + d]; }
    double delta(int h, int d) const { return deltas[static_cast<size_t>(h) * 3 + d]; }

    void validate() const;
};

// dataset = per-tensor flows; center is the mean of first-keyframe points,
// scale a single pooled standard deviation floored at 1e-6.
NormStats compute_norm_stats(const std::vector<FlowTensor>& dataset);

FlowTensor normalize(const FlowTensor& flow, const NormStats& stats);
FlowTensor denormalize(const FlowTensor& flow, const NormStats& stats);

// Binary layout: "F4D1", K, N (u32), values then weights as f32 LE.
void write_flow(class BinWriter& w, const FlowTensor& f);
FlowTensor read_flow(class BinReader& r);
void save_flow(const std::string& path, const FlowTensor& f);
FlowTensor load_flow(const std::string& path);

}  // namespace flow4d
