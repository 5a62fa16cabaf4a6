#pragma once

#include <string>

#include "flow4d/flow_tensor.hpp"

namespace flow4d {

// Three 2D projections (xy, xz, yz) of the K keyframe trajectories, one
// polyline per keypoint, terminal keyframe marked.
void write_flow_svg(const std::string& path, const FlowTensor& flow, double world_min = 0.0,
                    double world_max = 1.0);

}  // namespace flow4d
