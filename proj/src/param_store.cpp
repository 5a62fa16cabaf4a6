#include "flow4d/param_store.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace flow4d {

Mat& ParamStore::create(const std::string& name, int rows, int cols) {
    if (params_.count(name)) throw std::invalid_argument("duplicate parameter: " + name);
    return params_[name] = Mat::Zero(rows, cols);
}

Mat& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
}

const Mat& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
}

size_t ParamStore::scalar_count() const {
    size_t n = 0;
    for (const auto& [k, v] : params_) n += static_cast<size_t>(v.size());
    return n;
}

bool ParamStore::all_finite() const {
    for (const auto& [k, v] : params_)
        if (!v.allFinite()) return false;
    return true;
}

uint64_t ParamStore::fingerprint() const {
    uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& [k, v] : params_) {
        mix(k.data(), k.size());
        mix(v.data(), static_cast<size_t>(v.size()) * sizeof(double));
    }
    return h;
}

void xavier_fill(Rng& rng, Mat& m, int fan_in, int fan_out) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (long c = 0; c < m.cols(); ++c)
        for (long r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
}

void ParamStore::init_linear(Rng& rng, const std::string& prefix, int in, int out) {
    Mat& w = create(prefix + ".w", in, out);
    xavier_fill(rng, w, in, out);
    create(prefix + ".b", 1, out);
}

void ParamStore::init_linear_zero(const std::string& prefix, int in, int out) {
    create(prefix + ".w", in, out);
    create(prefix + ".b", 1, out);
}

void ParamStore::init_attention(Rng& rng, const std::string& prefix, int C) {
    init_linear(rng, prefix + ".q", C, C);
    // no key bias: a row-constant score shift that softmax cancels exactly
    Mat& wk = create(prefix + ".k.w", C, C);
    xavier_fill(rng, wk, C, C);
    init_linear(rng, prefix + ".v", C, C);
    init_linear(rng, prefix + ".o", C, C);
}

void ParamStore::init_zeros(const std::string& name, int rows, int cols) {
    create(name, rows, cols);
}

void ParamStore::init_embedding(Rng& rng, const std::string& name, int rows, int cols, double sd) {
    Mat& m = create(name, rows, cols);
    for (long c = 0; c < cols; ++c)
        for (long r = 0; r < rows; ++r) m(r, c) = sd * rng.normal();
}

}  // namespace flow4d
