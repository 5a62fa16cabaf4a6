#pragma once

#include <string>

#include "flow4d/config.hpp"
#include "flow4d/param_store.hpp"

namespace flow4d {

inline constexpr char kPlannerMagic[5] = "F4DC";
inline constexpr char kPolicyMagic[5] = "F4DP";

struct Checkpoint {
    Config config;
    ParamStore params;
    NormStats stats;
};

// Layout: magic, config text block, parameter sections (name, shape,
// 64-bit LE values), NormStats.
void save_checkpoint(const std::string& path, const char magic[4], const Config& cfg,
                     const ParamStore& params, const NormStats& stats);

Checkpoint load_checkpoint(const std::string& path, const char magic[4]);

}  // namespace flow4d
