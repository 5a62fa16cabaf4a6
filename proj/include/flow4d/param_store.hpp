#pragma once

#include <Eigen/Core>
#include <map>
#include <string>

#include "flow4d/rng.hpp"

namespace flow4d {

using Mat = Eigen::MatrixXd;

// Named parameter tensors. Shapes are fixed at creation; a std::map keeps
// iteration order (and therefore training) deterministic.
class ParamStore {
public:
    Mat& create(const std::string& name, int rows, int cols);
    Mat& get(const std::string& name);
    const Mat& get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }

    std::map<std::string, Mat>& all() { return params_; }
    const std::map<std::string, Mat>& all() const { return params_; }

    size_t scalar_count() const;
    bool all_finite() const;

    // Content hash for frozen-parameter assertions in tests.
    uint64_t fingerprint() const;

    // W uniform in +-sqrt(6/(fan_in+fan_out)), bias zero. Creates
    // "<prefix>.w" (in x out) and "<prefix>.b" (1 x out).
    void init_linear(Rng& rng, const std::string& prefix, int in, int out);
    void init_linear_zero(const std::string& prefix, int in, int out);
    // q/k/v/o projection set, all C x C with biases.
    void init_attention(Rng& rng, const std::string& prefix, int C);
    void init_zeros(const std::string& name, int rows, int cols);
    void init_embedding(Rng& rng, const std::string& name, int rows, int cols, double sd = 0.02);

private:
    std::map<std::string, Mat> params_;
};

// Uniform Xavier fill used by init_linear; exposed for tests.
void xavier_fill(Rng& rng, Mat& m, int fan_in, int fan_out);

}  // namespace flow4d
