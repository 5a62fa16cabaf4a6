#include "flow4d/checkpoint.hpp"

#include <stdexcept>

#include "flow4d/io.hpp"

namespace flow4d {

void save_checkpoint(const std::string& path, const char magic[4], const Config& cfg,
                     const ParamStore& params, const NormStats& stats) {
    BinWriter w(path);
    w.magic(magic);
    w.u32(1);  // version
    w.str(cfg.to_string());
    w.u32(static_cast<uint32_t>(params.all().size()));
    for (const auto& [name, m] : params.all()) {
        w.str(name);
        w.u32(static_cast<uint32_t>(m.rows()));
        w.u32(static_cast<uint32_t>(m.cols()));
        for (long r = 0; r < m.rows(); ++r)
            for (long c = 0; c < m.cols(); ++c) w.f64(m(r, c));
    }
    for (double c : stats.center) w.f64(c);
    w.f64(stats.scale);
    w.close();
}

Checkpoint load_checkpoint(const std::string& path, const char magic[4]) {
    BinReader rd(path);
    rd.expect_magic(magic, "checkpoint");
    uint32_t version = rd.u32();
    if (version != 1) throw std::runtime_error("unsupported checkpoint version");
    Checkpoint ck;
    ck.config = Config::from_string(rd.str());
    uint32_t count = rd.u32();
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = rd.str();
        int rows = static_cast<int>(rd.u32());
        int cols = static_cast<int>(rd.u32());
        Mat& m = ck.params.create(name, rows, cols);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) m(r, c) = rd.f64();
    }
    for (double& c : ck.stats.center) c = rd.f64();
    ck.stats.scale = rd.f64();
    ck.stats.validate();
    return ck;
}

}  // namespace flow4d
