#pragma once

#include <functional>
#include <vector>

#include "usflab/tensor.hpp"

namespace usflab::ad {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode tape. A tape is built per evaluation and discarded; nodes
/// are recorded in topological (creation) order, so backward() is a single
/// reverse sweep. Every operation checks its output for non-finite values
/// and throws NumericError naming the op that produced them.
///
/// Shapes follow a batch-first convention: rank-2 values are [n, d] with
/// one sample per row; rank-1 values are either per-sample vectors of
/// length n or plain coordinate vectors, depending on the op.
class Tape {
public:
    Var leaf(Tensor value);
    Var param(ParamNode& p);

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    double scalar(Var v) const;

    // Elementwise (operands must share a shape).
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var neg(Var a);
    Var scale(Var a, double s);
    Var add_const(Var a, double c);
    Var mul_const(Var a, const Tensor& m);
    Var square(Var a);
    Var exp(Var a);
    Var log(Var a);
    Var sqrt(Var a);
    Var tanh(Var a);
    Var softplus(Var a);
    Var leaky_relu(Var a, double slope);
    Var sin(Var a);

    // Linear algebra on rank-2 values.
    Var matmul(Var a, Var b);    // [n,k] x [k,m] -> [n,m]
    Var matmul_nt(Var a, Var b); // [n,k] x [m,k]^T -> [n,m]
    Var add_rowvec(Var X, Var b);
    Var sub_rowvec(Var X, Var b);
    Var mul_rowvec(Var X, Var b);

    /// Solves T * x_r = b_r for every row b_r of B; returns the solutions
    /// as rows. Differentiable in both T and B.
    Var tri_solve_rows(Var T, Var B, bool lower, bool unit_diag);

    // Structured assembly for LU-parameterized affine maps.
    Var unit_lower(Var packed_strict, std::size_t d);
    Var upper(Var packed_strict, Var diag, std::size_t d);

    // Reductions and broadcasts.
    Var sum(Var a);                               // -> [1]
    Var mean(Var a);                              // -> [1]
    Var row_sum(Var X);                           // [n,d] -> [n]
    Var broadcast_rows(Var s, std::size_t n);     // [1] -> [n]

    /// Reverse sweep from a scalar loss. Gradients of every reachable
    /// ParamNode with requires_grad are accumulated into its grad tensor.
    void backward(Var loss);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool grad_live = false;
        ParamNode* param = nullptr;
        std::function<void(Tape&)> back;
    };

    std::vector<Node> nodes_;

    Var record(Tensor value, const char* op, std::function<void(Tape&)> back);
    Tensor& grad_ref(int id);
    bool grad_live(int id) const { return nodes_[id].grad_live; }
    void check_finite(const Tensor& t, const char* op) const;
};

/// Central finite differences of a deterministic scalar function with
/// respect to the given parameters. Test oracle; independent of the tape.
std::vector<Tensor> finite_diff_grad(const std::function<double()>& f,
                                     const std::vector<ParamNode*>& params,
                                     double step);

} // namespace usflab::ad
