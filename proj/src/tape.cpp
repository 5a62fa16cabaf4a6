#include "flow4d/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "flow4d/param_store.hpp"

namespace flow4d {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Var Tape::push(Mat val, bool rg, const char* op, std::function<void(Tape&)> back) {
    if (check_finite_ && !val.allFinite())
        throw std::runtime_error(std::string("non-finite value in op ") + op);
    Node n;
    n.val = std::move(val);
    n.rg = rg;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Mat v) { return push(std::move(v), false, "constant", nullptr); }

Var Tape::input(Mat v) { return push(std::move(v), true, "input", nullptr); }

Var Tape::param(ParamStore& store, const std::string& name) {
    Var out = push(store.get(name), true, "param", nullptr);
    nodes_[out.i].pname = name;
    return out;
}

Var Tape::add(Var a, Var b) {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
        throw std::runtime_error("add: shape mismatch");
    Var out = push(val(a) + val(b), rg(a) || rg(b), "add", nullptr);
    nodes_[out.i].back = [a, b, out](Tape& t) {
        const Mat& go = t.g(out);
        if (t.rg(a)) t.g(a) += go;
        if (t.rg(b)) t.g(b) += go;
    };
    return out;
}

Var Tape::sub(Var a, Var b) {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
        throw std::runtime_error("sub: shape mismatch");
    Var out = push(val(a) - val(b), rg(a) || rg(b), "sub", nullptr);
    nodes_[out.i].back = [a, b, out](Tape& t) {
        const Mat& go = t.g(out);
        if (t.rg(a)) t.g(a) += go;
        if (t.rg(b)) t.g(b) -= go;
    };
    return out;
}

Var Tape::mul(Var a, Var b) {
    if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols())
        throw std::runtime_error("mul: shape mismatch");
    Var out = push(val(a).cwiseProduct(val(b)), rg(a) || rg(b), "mul", nullptr);
    nodes_[out.i].back = [a, b, out](Tape& t) {
        const Mat& go = t.g(out);
        if (t.rg(a)) t.g(a) += go.cwiseProduct(t.val(b));
        if (t.rg(b)) t.g(b) += go.cwiseProduct(t.val(a));
    };
    return out;
}

Var Tape::scale(Var a, double s) {
    Var out = push(val(a) * s, rg(a), "scale", nullptr);
    nodes_[out.i].back = [a, s, out](Tape& t) {
        if (t.rg(a)) t.g(a) += t.g(out) * s;
    };
    return out;
}

Var Tape::add_scalar(Var a, double s) {
    Var out = push((val(a).array() + s).matrix(), rg(a), "add_scalar", nullptr);
    nodes_[out.i].back = [a, out](Tape& t) {
        if (t.rg(a)) t.g(a) += t.g(out);
    };
    return out;
}

Var Tape::matmul(Var a, Var b) {
    if (val(a).cols() != val(b).rows()) throw std::runtime_error("matmul: shape mismatch");
    Var out = push(val(a) * val(b), rg(a) || rg(b), "matmul", nullptr);
    nodes_[out.i].back = [a, b, out](Tape& t) {
        const Mat& go = t.g(out);
        if (t.rg(a)) t.g(a).noalias() += go * t.val(b).transpose();
        if (t.rg(b)) t.g(b).noalias() += t.val(a).transpose() * go;
    };
    return out;
}

Var Tape::transpose(Var a) {
    Var out = push(val(a).transpose(), rg(a), "transpose", nullptr);
    nodes_[out.i].back = [a, out](Tape& t) {
        if (t.rg(a)) t.g(a) += t.g(out).transpose();
    };
    return out;
}

Var Tape::rowadd(Var a, Var v) {
    if (val(v).rows() != 1 || val(v).cols() != val(a).cols())
        throw std::runtime_error("rowadd: shape mismatch");
    Mat r = val(a);
    r.rowwise() += val(v).row(0);
    Var out = push(std::move(r), rg(a) || rg(v), "rowadd", nullptr);
    nodes_[out.i].back = [a, v, out](Tape& t) {
        const Mat& go = t.g(out);
        if (t.rg(a)) t.g(a) += go;
        if (t.rg(v)) t.g(v) += go.colwise().sum();
    };
    return out;
}

Var Tape::rowmul(Var a, Var v) {
    if (val(v).rows() != 1 || val(v).cols() != val(a).cols())
        throw std::runtime_error("rowmul: shape mismatch");
    Mat r = val(a).array().rowwise() * val(v).row(0).array();
    Var out = push(std::move(r), rg(a) || rg(v), "rowmul", nullptr);
    nodes_[out.i].back = [a, v, out](Tape& t) {
        const Mat& go = t.g(out);
        if (t.rg(a)) t.g(a) += (go.array().rowwise() * t.val(v).row(0).array()).matrix();
        if (t.rg(v)) t.g(v) += (go.array() * t.val(a).array()).colwise().sum().matrix();
    };
    return out;
}

Var Tape::concat_cols(Var a, Var b) {
    if (val(a).rows() != val(b).rows()) throw std::runtime_error("concat_cols: row mismatch");
    Mat r(val(a).rows(), val(a).cols() + val(b).cols());
    r << val(a), val(b);
    Var out = push(std::move(r), rg(a) || rg(b), "concat_cols", nullptr);
    nodes_[out.i].back = [a, b, out](Tape& t) {
        const Mat& go = t.g(out);
        long ca = t.val(a).cols();
        if (t.rg(a)) t.g(a) += go.leftCols(ca);
        if (t.rg(b)) t.g(b) += go.rightCols(go.cols() - ca);
    };
    return out;
}

Var Tape::concat_rows(Var a, Var b) {
    if (val(a).cols() != val(b).cols()) throw std::runtime_error("concat_rows: col mismatch");
    Mat r(val(a).rows() + val(b).rows(), val(a).cols());
    r << val(a), val(b);
    Var out = push(std::move(r), rg(a) || rg(b), "concat_rows", nullptr);
    nodes_[out.i].back = [a, b, out](Tape& t) {
        const Mat& go = t.g(out);
        long ra = t.val(a).rows();
        if (t.rg(a)) t.g(a) += go.topRows(ra);
        if (t.rg(b)) t.g(b) += go.bottomRows(go.rows() - ra);
    };
    return out;
}

Var Tape::slice_cols(Var a, int start, int n) {
    Var out = push(val(a).middleCols(start, n), rg(a), "slice_cols", nullptr);
    nodes_[out.i].back = [a, start, n, out](Tape& t) {
        if (t.rg(a)) t.g(a).middleCols(start, n) += t.g(out);
    };
    return out;
}

Var Tape::slice_rows(Var a, int start, int n) {
    Var out = push(val(a).middleRows(start, n), rg(a), "slice_rows", nullptr);
    nodes_[out.i].back = [a, start, n, out](Tape& t) {
        if (t.rg(a)) t.g(a).middleRows(start, n) += t.g(out);
    };
    return out;
}

Var Tape::gather_rows(Var a, std::vector<int> idx) {
    Mat r(static_cast<long>(idx.size()), val(a).cols());
    for (size_t i = 0; i < idx.size(); ++i) r.row(static_cast<long>(i)) = val(a).row(idx[i]);
    Var out = push(std::move(r), rg(a), "gather_rows", nullptr);
    nodes_[out.i].back = [a, idx = std::move(idx), out](Tape& t) {
        if (!t.rg(a)) return;
        const Mat& go = t.g(out);
        for (size_t i = 0; i < idx.size(); ++i)
            t.g(a).row(idx[i]) += go.row(static_cast<long>(i));
    };
    return out;
}

Var Tape::reshape_rowmajor(Var a, int rows, int cols) {
    const Mat& x = val(a);
    if (x.rows() * x.cols() != static_cast<long>(rows) * cols)
        throw std::runtime_error("reshape: element count mismatch");
    Mat r(rows, cols);
    long ic = x.cols();
    for (long f = 0; f < static_cast<long>(rows) * cols; ++f)
        r(f / cols, f % cols) = x(f / ic, f % ic);
    Var out = push(std::move(r), rg(a), "reshape", nullptr);
    nodes_[out.i].back = [a, out](Tape& t) {
        if (!t.rg(a)) return;
        const Mat& go = t.g(out);
        Mat& ga = t.g(a);
        long ic = ga.cols(), oc = go.cols();
        for (long f = 0; f < go.rows() * oc; ++f)
            ga(f / ic, f % ic) += go(f / oc, f % oc);
    };
    return out;
}

Var Tape::softmax_rows(Var a, std::shared_ptr<const Mat> add_mask) {
    Mat z = val(a);
    if (add_mask) {
        if (add_mask->rows() != z.rows() || add_mask->cols() != z.cols())
            throw std::runtime_error("softmax mask shape mismatch");
        z += *add_mask;
    }
    for (long r = 0; r < z.rows(); ++r) {
        double m = z.row(r).maxCoeff();
        z.row(r) = (z.row(r).array() - m).exp();
        z.row(r) /= z.row(r).sum();
    }
    Var out = push(std::move(z), rg(a), "softmax", nullptr);
    nodes_[out.i].back = [a, out](Tape& t) {
        if (!t.rg(a)) return;
        const Mat& y = t.val(out);
        const Mat& go = t.g(out);
        for (long r = 0; r < y.rows(); ++r) {
            double dot = go.row(r).dot(y.row(r));
            t.g(a).row(r) += (go.row(r).array() - dot).matrix().cwiseProduct(y.row(r));
        }
    };
    return out;
}

Var Tape::layernorm_rows(Var a, double eps) {
    const Mat& x = val(a);
    Mat y(x.rows(), x.cols());
    Eigen::VectorXd rstd(x.rows());
    for (long r = 0; r < x.rows(); ++r) {
        double mean = x.row(r).mean();
        double var = (x.row(r).array() - mean).square().mean();
        double rs = 1.0 / std::sqrt(var + eps);
        rstd(r) = rs;
        y.row(r) = (x.row(r).array() - mean) * rs;
    }
    Var out = push(std::move(y), rg(a), "layernorm", nullptr);
    nodes_[out.i].back = [a, out, rstd = std::move(rstd)](Tape& t) {
        if (!t.rg(a)) return;
        const Mat& y = t.val(out);
        const Mat& go = t.g(out);
        for (long r = 0; r < y.rows(); ++r) {
            double m1 = go.row(r).mean();
            double m2 = go.row(r).cwiseProduct(y.row(r)).mean();
            t.g(a).row(r) +=
                rstd(r) * (go.row(r).array() - m1 - y.row(r).array() * m2).matrix();
        }
    };
    return out;
}

Var Tape::gelu(Var a) {
    const Mat& x = val(a);
    Mat y = x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
    Var out = push(std::move(y), rg(a), "gelu", nullptr);
    nodes_[out.i].back = [a, out](Tape& t) {
        if (!t.rg(a)) return;
        const Mat& x = t.val(a);
        Mat d = x.unaryExpr([](double v) {
            double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            return cdf + v * pdf;
        });
        t.g(a) += t.g(out).cwiseProduct(d);
    };
    return out;
}

Var Tape::silu(Var a) {
    const Mat& x = val(a);
    Mat y = x.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
    Var out = push(std::move(y), rg(a), "silu", nullptr);
    nodes_[out.i].back = [a, out](Tape& t) {
        if (!t.rg(a)) return;
        Mat d = t.val(a).unaryExpr([](double v) {
            double s = 1.0 / (1.0 + std::exp(-v));
            return s * (1.0 + v * (1.0 - s));
        });
        t.g(a) += t.g(out).cwiseProduct(d);
    };
    return out;
}

Var Tape::tanh_(Var a) {
    Mat y = val(a).array().tanh().matrix();
    Var out = push(std::move(y), rg(a), "tanh", nullptr);
    nodes_[out.i].back = [a, out](Tape& t) {
        if (!t.rg(a)) return;
        t.g(a) += t.g(out).cwiseProduct((1.0 - t.val(out).array().square()).matrix());
    };
    return out;
}

Var Tape::sigmoid_(Var a) {
    Mat y = val(a).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    Var out = push(std::move(y), rg(a), "sigmoid", nullptr);
    nodes_[out.i].back = [a, out](Tape& t) {
        if (!t.rg(a)) return;
        const Mat& y = t.val(out);
        t.g(a) += t.g(out).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
    };
    return out;
}

Var Tape::softplus_(Var a) {
    Mat y = val(a).unaryExpr([](double v) {
        if (v > 30.0) return v;
        return std::log1p(std::exp(v));
    });
    Var out = push(std::move(y), rg(a), "softplus", nullptr);
    nodes_[out.i].back = [a, out](Tape& t) {
        if (!t.rg(a)) return;
        Mat d = t.val(a).unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
        t.g(a) += t.g(out).cwiseProduct(d);
    };
    return out;
}

Var Tape::sqrt_shift(Var a, double shift) {
    Mat y = (val(a).array() + shift).sqrt().matrix();
    Var out = push(std::move(y), rg(a), "sqrt_shift", nullptr);
    nodes_[out.i].back = [a, out](Tape& t) {
        if (!t.rg(a)) return;
        t.g(a) += t.g(out).cwiseQuotient(2.0 * t.val(out));
    };
    return out;
}

Var Tape::sum(Var a) {
    Mat y(1, 1);
    y(0, 0) = val(a).sum();
    Var out = push(std::move(y), rg(a), "sum", nullptr);
    nodes_[out.i].back = [a, out](Tape& t) {
        if (t.rg(a)) t.g(a).array() += t.g(out)(0, 0);
    };
    return out;
}

Var Tape::mean_rows(Var a) {
    Mat y = val(a).colwise().mean();
    Var out = push(std::move(y), rg(a), "mean_rows", nullptr);
    nodes_[out.i].back = [a, out](Tape& t) {
        if (!t.rg(a)) return;
        double inv = 1.0 / static_cast<double>(t.val(a).rows());
        t.g(a) += (t.g(out) * inv).replicate(t.val(a).rows(), 1);
    };
    return out;
}

Var Tape::row_sums(Var a) {
    Mat y = val(a).rowwise().sum();
    Var out = push(std::move(y), rg(a), "row_sums", nullptr);
    nodes_[out.i].back = [a, out](Tape& t) {
        if (!t.rg(a)) return;
        t.g(a) += t.g(out).replicate(1, t.val(a).cols());
    };
    return out;
}

void Tape::backward(Var loss) {
    if (val(loss).rows() != 1 || val(loss).cols() != 1)
        throw std::runtime_error("backward: loss must be scalar");
    pgrads_.clear();
    for (auto& n : nodes_) n.grad = Mat::Zero(n.val.rows(), n.val.cols());
    nodes_[loss.i].grad(0, 0) = 1.0;
    for (int i = loss.i; i >= 0; --i) {
        if (!nodes_[i].rg || !nodes_[i].back) continue;
        nodes_[i].back(*this);
    }
    for (auto& n : nodes_) {
        if (!n.pname.empty()) {
            auto it = pgrads_.find(n.pname);
            if (it == pgrads_.end())
                pgrads_[n.pname] = n.grad;
            else
                it->second += n.grad;
        }
    }
}

}  // namespace flow4d
