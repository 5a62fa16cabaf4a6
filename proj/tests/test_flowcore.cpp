#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "flow4d/flow_tensor.hpp"
#include "flow4d/io.hpp"
#include "flow4d/rng.hpp"

using namespace flow4d;

namespace {

FlowTensor random_flow(Rng& rng, int K, int N, double scale = 1.0) {
    FlowTensor f(K, N);
    for (auto& v : f.values) v = scale * rng.normal();
    return f;
}

}  // namespace

TEST_CASE("norm stats: zero-variance dataset hits the scale floor") {
    FlowTensor f(2, 3);
    for (int k = 0; k < 2; ++k)
        for (int n = 0; n < 3; ++n) {
            f.at(k, n, 0) = 1.0;
            f.at(k, n, 1) = 2.0;
            f.at(k, n, 2) = 3.0;
        }
    NormStats s = compute_norm_stats({f});
    CHECK(s.center[0] == doctest::Approx(1.0));
    CHECK(s.center[1] == doctest::Approx(2.0));
    CHECK(s.center[2] == doctest::Approx(3.0));
    CHECK(s.scale == doctest::Approx(1e-6));
}

TEST_CASE("norm stats: center is the mean of first-keyframe points") {
    FlowTensor a(2, 2), b(2, 2);
    for (int n = 0; n < 2; ++n) {
        a.at(0, n, 0) = 0.0;
        b.at(0, n, 0) = 2.0;
    }
    NormStats s = compute_norm_stats({a, b});
    CHECK(s.center[0] == doctest::Approx(1.0));
    CHECK(s.center[1] == doctest::Approx(0.0));
    CHECK(s.center[2] == doctest::Approx(0.0));
}

TEST_CASE("norm stats match an independent two-pass oracle") {
    Rng rng(7);
    std::vector<FlowTensor> dataset;
    for (int i = 0; i < 10; ++i) dataset.push_back(random_flow(rng, 4, 5, 2.0));

    // brute force: mean over first-keyframe points, pooled centered std
    double cx = 0, cy = 0, cz = 0, cnt = 0;
    for (const auto& f : dataset)
        for (int n = 0; n < f.N; ++n) {
            cx += f.at(0, n, 0);
            cy += f.at(0, n, 1);
            cz += f.at(0, n, 2);
            cnt += 1;
        }
    cx /= cnt;
    cy /= cnt;
    cz /= cnt;
    double sq = 0, m = 0;
    for (const auto& f : dataset)
        for (int k = 0; k < f.K; ++k)
            for (int n = 0; n < f.N; ++n) {
                double c[3] = {cx, cy, cz};
                for (int d = 0; d < 3; ++d) {
                    double v = f.at(k, n, d) - c[d];
                    sq += v * v;
                    m += 1;
                }
            }
    double scale = std::sqrt(sq / m);

    NormStats s = compute_norm_stats(dataset);
    CHECK(s.center[0] == doctest::Approx(cx).epsilon(1e-12));
    CHECK(s.center[1] == doctest::Approx(cy).epsilon(1e-12));
    CHECK(s.center[2] == doctest::Approx(cz).epsilon(1e-12));
    CHECK(s.scale == doctest::Approx(scale).epsilon(1e-12));
}

TEST_CASE("norm stats are permutation invariant") {
    Rng rng(11);
    std::vector<FlowTensor> dataset;
    for (int i = 0; i < 6; ++i) dataset.push_back(random_flow(rng, 3, 4));
    NormStats a = compute_norm_stats(dataset);
    std::vector<FlowTensor> reversed(dataset.rbegin(), dataset.rend());
    NormStats b = compute_norm_stats(reversed);
    for (int d = 0; d < 3; ++d) CHECK(a.center[d] == doctest::Approx(b.center[d]).epsilon(1e-12));
    CHECK(a.scale == doctest::Approx(b.scale).epsilon(1e-12));
}

TEST_CASE("empty dataset is rejected") {
    CHECK_THROWS_WITH_AS(compute_norm_stats({}), "empty dataset", std::invalid_argument);
}

TEST_CASE("normalize maps the center to zero and scales isotropically") {
    NormStats s;
    s.center = {1.0, 0.0, 0.0};
    s.scale = 2.0;

    FlowTensor f(2, 1);
    for (int k = 0; k < 2; ++k) {
        f.at(k, 0, 0) = 1.0;
        f.at(k, 0, 1) = 0.0;
        f.at(k, 0, 2) = 0.0;
    }
    FlowTensor z = normalize(f, s);
    for (double v : z.values) CHECK(v == doctest::Approx(0.0));

    f.at(0, 0, 0) = 3.0;
    z = normalize(f, s);
    CHECK(z.at(0, 0, 0) == doctest::Approx(1.0));

    FlowTensor back = denormalize(z, s);
    CHECK(back.at(0, 0, 0) == doctest::Approx(3.0));
}

TEST_CASE("denormalize of zeros recovers the center") {
    NormStats s;
    s.center = {0.3, -0.2, 0.9};
    s.scale = 0.7;
    FlowTensor z(3, 2, 0.0);
    FlowTensor f = denormalize(z, s);
    for (int k = 0; k < 3; ++k)
        for (int n = 0; n < 2; ++n)
            for (int d = 0; d < 3; ++d) CHECK(f.at(k, n, d) == doctest::Approx(s.center[d]));
}

TEST_CASE("normalize/denormalize roundtrip identity") {
    Rng rng(3);
    NormStats s;
    s.center = {0.5, 0.25, -0.125};
    s.scale = 1.75;
    for (int trial = 0; trial < 50; ++trial) {
        FlowTensor f = random_flow(rng, 4, 3, 3.0);
        FlowTensor r1 = denormalize(normalize(f, s), s);
        FlowTensor r2 = normalize(denormalize(f, s), s);
        for (size_t i = 0; i < f.values.size(); ++i) {
            double ref = std::max(1.0, std::abs(f.values[i]));
            CHECK(std::abs(r1.values[i] - f.values[i]) / ref < 1e-9);
            CHECK(std::abs(r2.values[i] - f.values[i]) / ref < 1e-9);
        }
    }
}

TEST_CASE("validation rejects bad tensors") {
    FlowTensor f(2, 2);
    CHECK_NOTHROW(f.validate());

    FlowTensor nonfinite = f;
    nonfinite.values[0] = std::nan("");
    CHECK_THROWS_AS(nonfinite.validate(), std::invalid_argument);

    FlowTensor badw = f;
    badw.weights[1] = 1.5;
    CHECK_THROWS_AS(badw.validate(), std::invalid_argument);

    FlowTensor negw = f;
    negw.weights[0] = -0.1;
    CHECK_THROWS_AS(negw.validate(), std::invalid_argument);

    FlowTensor shortk = f;
    shortk.K = 1;
    shortk.values.resize(6);
    shortk.weights.resize(2);
    CHECK_THROWS_AS(shortk.validate(), std::invalid_argument);
}

TEST_CASE("flow serialization round-trips bit-exactly") {
    Rng rng(19);
    FlowTensor f(3, 4);
    // float32-representable payload so the f32 file encoding is lossless
    for (auto& v : f.values) v = static_cast<double>(static_cast<float>(rng.normal()));
    for (auto& w : f.weights) w = static_cast<double>(static_cast<float>(rng.uniform()));

    std::string path = "flow_roundtrip_test.f4d1";
    save_flow(path, f);
    FlowTensor g = load_flow(path);
    std::remove(path.c_str());

    REQUIRE(g.K == f.K);
    REQUIRE(g.N == f.N);
    for (size_t i = 0; i < f.values.size(); ++i) CHECK(g.values[i] == f.values[i]);
    for (size_t i = 0; i < f.weights.size(); ++i) CHECK(g.weights[i] == f.weights[i]);
}

TEST_CASE("action chunk validation") {
    ActionChunk c(3);
    CHECK_NOTHROW(c.validate());
    c.gripper[0] = 1.25;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
