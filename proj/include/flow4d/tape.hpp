#pragma once

#include <Eigen/Core>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace flow4d {

using Mat = Eigen::MatrixXd;

class ParamStore;

// Handle into a Tape.
struct Var {
    int i = -1;
};

// Dynamic reverse-mode tape over matrix-valued nodes. One tape per forward
// pass; parameters are bound by name and their gradients are collected into
// a name -> matrix map by backward().
class Tape {
public:
    explicit Tape(bool check_finite = true) : check_finite_(check_finite) {}

    Var constant(Mat v);
    Var input(Mat v);  // differentiable leaf
    Var param(ParamStore& store, const std::string& name);

    const Mat& val(Var v) const { return nodes_[v.i].val; }
    const Mat& grad(Var v) const { return nodes_[v.i].grad; }

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var scale(Var a, double s);
    Var add_scalar(Var a, double s);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var rowadd(Var a, Var v);  // (n x C) + broadcast (1 x C)
    Var rowmul(Var a, Var v);  // (n x C) * broadcast (1 x C)
    Var concat_cols(Var a, Var b);
    Var concat_rows(Var a, Var b);
    Var slice_cols(Var a, int start, int n);
    Var slice_rows(Var a, int start, int n);
    Var gather_rows(Var a, std::vector<int> idx);
    Var reshape_rowmajor(Var a, int rows, int cols);
    Var softmax_rows(Var a, std::shared_ptr<const Mat> add_mask = nullptr);
    Var layernorm_rows(Var a, double eps = 1e-6);
    Var gelu(Var a);
    Var silu(Var a);
    Var tanh_(Var a);
    Var sigmoid_(Var a);
    Var softplus_(Var a);
    Var sqrt_shift(Var a, double shift);  // sqrt(a + shift), elementwise
    Var sum(Var a);                       // -> 1x1
    Var mean_rows(Var a);                 // n x C -> 1 x C
    Var row_sums(Var a);                  // n x C -> n x 1

    // Runs the reverse sweep from a scalar (1x1) loss node.
    void backward(Var loss);

    // Parameter gradients accumulated by the last backward().
    const std::map<std::string, Mat>& param_grads() const { return pgrads_; }

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        Mat val;
        Mat grad;
        std::function<void(Tape&)> back;
        bool rg = false;           // requires grad
        std::string pname;         // non-empty for parameter leaves
    };

    Var push(Mat val, bool rg, const char* op, std::function<void(Tape&)> back);
    bool rg(Var v) const { return nodes_[v.i].rg; }
    Mat& g(Var v) { return nodes_[v.i].grad; }

    std::vector<Node> nodes_;
    std::map<std::string, Mat> pgrads_;
    bool check_finite_;
};

}  // namespace flow4d
