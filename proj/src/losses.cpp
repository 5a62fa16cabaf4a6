#include "flow4d/losses.hpp"

#include <stdexcept>

namespace flow4d {

Var loss_diff_var(Tape& t, Var v_pred, Var v_target, const Mat& weights) {
    if (weights.cols() != 1 || weights.rows() != t.val(v_pred).rows())
        throw std::invalid_argument("loss_diff: weights must be (K*N) x 1");
    double wsum = weights.sum();
    if (!(wsum > 0.0)) throw std::invalid_argument("no visible points");
    Var d = t.sub(v_pred, v_target);
    Var sq = t.row_sums(t.mul(d, d));           // (K*N) x 1
    Var wsq = t.mul(sq, t.constant(weights));   // mask first so zero weights kill grads
    return t.scale(t.sum(wsq), 1.0 / wsum);
}

Var loss_smooth_var(Tape& t, Var x0_hat, const Mat& weights, int K, int N, double eps_c) {
    if (K < 3) return t.constant(Mat::Zero(1, 1));
    const int interior = (K - 2) * N;
    Mat w_int = weights.middleRows(N, interior);
    double wsum = w_int.sum();
    if (!(wsum > 0.0)) throw std::invalid_argument("loss_smooth: no interior weight");
    Var up = t.slice_rows(x0_hat, 2 * N, interior);
    Var mid = t.slice_rows(x0_hat, N, interior);
    Var low = t.slice_rows(x0_hat, 0, interior);
    Var d2 = t.add(t.sub(up, t.scale(mid, 2.0)), low);
    Var norms = t.sqrt_shift(t.row_sums(t.mul(d2, d2)), eps_c * eps_c);
    Var wn = t.mul(norms, t.constant(w_int));
    return t.scale(t.sum(wn), 1.0 / wsum);
}

Var loss_align_var(Tape& t, Var c3d, const Mat& teacher_h, ParamStore& P) {
    Var r = t.sub(linear(t, c3d, P, "align.proj"), t.constant(teacher_h));
    return t.sum(t.mul(r, r));
}

double loss_diff(const Mat& v_pred, const Mat& v_target, const Mat& weights) {
    Tape t;
    return t.val(loss_diff_var(t, t.constant(v_pred), t.constant(v_target), weights))(0, 0);
}

double loss_smooth(const Mat& x0_hat, const Mat& weights, int K, int N, double eps_c) {
    Tape t;
    return t.val(loss_smooth_var(t, t.constant(x0_hat), weights, K, N, eps_c))(0, 0);
}

double loss_align(const Mat& c3d, const Mat& teacher_h, ParamStore& P) {
    Tape t;
    return t.val(loss_align_var(t, t.constant(c3d), teacher_h, P))(0, 0);
}

}  // namespace flow4d
