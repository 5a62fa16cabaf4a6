#pragma once

#include "flow4d/blocks.hpp"

namespace flow4d {

// Visibility-weighted mean squared error between (K*N) x 3 prediction and
// target rows; weights is (K*N) x 1. Throws if the weight sum is zero.
Var loss_diff_var(Tape& t, Var v_pred, Var v_target, const Mat& weights);

// Charbonnier penalty on second-order temporal differences of the
// recovered flow. Interior keyframes only; zero when K < 3. Normalized by
// the interior weight sum.
Var loss_smooth_var(Tape& t, Var x0_hat, const Mat& weights, int K, int N, double eps_c);

// || proj(c3d) - h ||^2 with a learnable projector "align.proj".
Var loss_align_var(Tape& t, Var c3d, const Mat& teacher_h, ParamStore& P);

// plain-value conveniences for tests and metrics
double loss_diff(const Mat& v_pred, const Mat& v_target, const Mat& weights);
double loss_smooth(const Mat& x0_hat, const Mat& weights, int K, int N, double eps_c);
double loss_align(const Mat& c3d, const Mat& teacher_h, ParamStore& P);

}  // namespace flow4d
