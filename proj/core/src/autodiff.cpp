#include "usflab/autodiff.hpp"

#include <cmath>

#include "usflab/linalg.hpp"

namespace usflab::ad {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) throw ContractError(std::string(op) + ": shape mismatch");
}

} // namespace

void Tape::check_finite(const Tensor& t, const char* op) const {
    if (!t.all_finite()) {
        throw NumericError(op, "non-finite value produced");
    }
}

Var Tape::record(Tensor value, const char* op, std::function<void(Tape&)> back) {
    check_finite(value, op);
    Node n;
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_ref(int id) {
    Node& n = nodes_[id];
    if (!n.grad_live) {
        n.grad = Tensor::zeros(n.value.shape());
        n.grad_live = true;
    }
    return n.grad;
}

Var Tape::leaf(Tensor value) { return record(std::move(value), "leaf", nullptr); }

Var Tape::param(ParamNode& p) {
    Var v = record(p.value, "param", nullptr);
    nodes_[v.id].param = &p;
    return v;
}

double Tape::scalar(Var v) const {
    const Tensor& t = value(v);
    if (t.size() != 1) throw ContractError("Tape::scalar: value is not a scalar");
    return t[0];
}

// Ops record the output node first, then install a backward closure that
// captures its own node id. The macro keeps that pattern in one place.
#define USFLAB_OP(out_tensor, op_name, body)                                  \
    Var out = record(std::move(out_tensor), op_name, nullptr);               \
    const int self = out.id;                                                  \
    nodes_[self].back = [=](Tape& t) body;                                    \
    return out;

Var Tape::add(Var a, Var b) {
    check_same_shape(value(a), value(b), "add");
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += value(b)[i];
    int ia = a.id, ib = b.id;
    USFLAB_OP(o, "add", {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(ia);
        Tensor& gb = t.grad_ref(ib);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    })
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(value(a), value(b), "sub");
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= value(b)[i];
    int ia = a.id, ib = b.id;
    USFLAB_OP(o, "sub", {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(ia);
        Tensor& gb = t.grad_ref(ib);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    })
}

Var Tape::mul(Var a, Var b) {
    check_same_shape(value(a), value(b), "mul");
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= value(b)[i];
    int ia = a.id, ib = b.id;
    USFLAB_OP(o, "mul", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.nodes_[ia].value;
        const Tensor& vb = t.nodes_[ib].value;
        Tensor& ga = t.grad_ref(ia);
        Tensor& gb = t.grad_ref(ib);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * vb[i];
            gb[i] += g[i] * va[i];
        }
    })
}

Var Tape::div(Var a, Var b) {
    check_same_shape(value(a), value(b), "div");
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] /= value(b)[i];
    int ia = a.id, ib = b.id;
    USFLAB_OP(o, "div", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.nodes_[ia].value;
        const Tensor& vb = t.nodes_[ib].value;
        Tensor& ga = t.grad_ref(ia);
        Tensor& gb = t.grad_ref(ib);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] / vb[i];
            gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
        }
    })
}

Var Tape::neg(Var a) { return scale(a, -1.0); }

Var Tape::scale(Var a, double s) {
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= s;
    int ia = a.id;
    USFLAB_OP(o, "scale", {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
    })
}

Var Tape::add_const(Var a, double c) {
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += c;
    int ia = a.id;
    USFLAB_OP(o, "add_const", {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    })
}

Var Tape::mul_const(Var a, const Tensor& m) {
    check_same_shape(value(a), m, "mul_const");
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= m[i];
    int ia = a.id;
    Tensor mc = m;
    USFLAB_OP(o, "mul_const", {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mc[i];
    })
}

Var Tape::square(Var a) {
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= o[i];
    int ia = a.id;
    USFLAB_OP(o, "square", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.nodes_[ia].value;
        Tensor& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * g[i] * va[i];
    })
}

Var Tape::exp(Var a) {
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::exp(o[i]);
    int ia = a.id;
    USFLAB_OP(o, "exp", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& vo = t.nodes_[self].value;
        Tensor& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vo[i];
    })
}

Var Tape::log(Var a) {
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::log(o[i]);
    int ia = a.id;
    USFLAB_OP(o, "log", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.nodes_[ia].value;
        Tensor& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / va[i];
    })
}

Var Tape::sqrt(Var a) {
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::sqrt(o[i]);
    int ia = a.id;
    USFLAB_OP(o, "sqrt", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& vo = t.nodes_[self].value;
        Tensor& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 0.5 * g[i] / vo[i];
    })
}

Var Tape::tanh(Var a) {
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(o[i]);
    int ia = a.id;
    USFLAB_OP(o, "tanh", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& vo = t.nodes_[self].value;
        Tensor& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - vo[i] * vo[i]);
    })
}

Var Tape::softplus(Var a) {
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) {
        const double x = o[i];
        o[i] = x > 30.0 ? x : std::log1p(std::exp(x));
    }
    int ia = a.id;
    USFLAB_OP(o, "softplus", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.nodes_[ia].value;
        Tensor& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] / (1.0 + std::exp(-va[i]));
        }
    })
}

Var Tape::leaky_relu(Var a, double slope) {
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) {
        if (o[i] < 0.0) o[i] *= slope;
    }
    int ia = a.id;
    USFLAB_OP(o, "leaky_relu", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.nodes_[ia].value;
        Tensor& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * (va[i] < 0.0 ? slope : 1.0);
        }
    })
}

Var Tape::sin(Var a) {
    Tensor o = value(a);
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::sin(o[i]);
    int ia = a.id;
    USFLAB_OP(o, "sin", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.nodes_[ia].value;
        Tensor& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * std::cos(va[i]);
    })
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    Tensor C = usflab::matmul(A, B);
    int ia = a.id, ib = b.id;
    USFLAB_OP(C, "matmul", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.nodes_[ia].value;
        const Tensor& vb = t.nodes_[ib].value;
        Tensor& ga = t.grad_ref(ia);
        Tensor& gb = t.grad_ref(ib);
        // dA += G * B^T
        for (std::size_t i = 0; i < va.rows(); ++i)
            for (std::size_t j = 0; j < vb.cols(); ++j) {
                const double gij = g.at(i, j);
                if (gij == 0.0) continue;
                for (std::size_t k = 0; k < va.cols(); ++k) ga.at(i, k) += gij * vb.at(k, j);
            }
        // dB += A^T * G
        for (std::size_t k = 0; k < va.cols(); ++k)
            for (std::size_t i = 0; i < va.rows(); ++i) {
                const double aik = va.at(i, k);
                if (aik == 0.0) continue;
                for (std::size_t j = 0; j < vb.cols(); ++j) gb.at(k, j) += aik * g.at(i, j);
            }
    })
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& A = value(a);
    const Tensor& B = value(b);
    if (A.cols() != B.cols()) throw ContractError("matmul_nt: dimension mismatch");
    Tensor C({A.rows(), B.rows()});
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < B.rows(); ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < A.cols(); ++k) s += A.at(i, k) * B.at(j, k);
            C.at(i, j) = s;
        }
    int ia = a.id, ib = b.id;
    USFLAB_OP(C, "matmul_nt", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& va = t.nodes_[ia].value;
        const Tensor& vb = t.nodes_[ib].value;
        Tensor& ga = t.grad_ref(ia);
        Tensor& gb = t.grad_ref(ib);
        // C = A B^T: dA += G B, dB += G^T A
        for (std::size_t i = 0; i < va.rows(); ++i)
            for (std::size_t j = 0; j < vb.rows(); ++j) {
                const double gij = g.at(i, j);
                if (gij == 0.0) continue;
                for (std::size_t k = 0; k < va.cols(); ++k) {
                    ga.at(i, k) += gij * vb.at(j, k);
                    gb.at(j, k) += gij * va.at(i, k);
                }
            }
    })
}

Var Tape::add_rowvec(Var X, Var b) {
    const Tensor& A = value(X);
    const Tensor& v = value(b);
    if (A.cols() != v.size()) throw ContractError("add_rowvec: dimension mismatch");
    Tensor o = A;
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) o.at(i, j) += v[j];
    int ix = X.id, ib = b.id;
    USFLAB_OP(o, "add_rowvec", {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gx = t.grad_ref(ix);
        Tensor& gb = t.grad_ref(ib);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) {
                gx.at(i, j) += g.at(i, j);
                gb[j] += g.at(i, j);
            }
    })
}

Var Tape::sub_rowvec(Var X, Var b) {
    const Tensor& A = value(X);
    const Tensor& v = value(b);
    if (A.cols() != v.size()) throw ContractError("sub_rowvec: dimension mismatch");
    Tensor o = A;
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) o.at(i, j) -= v[j];
    int ix = X.id, ib = b.id;
    USFLAB_OP(o, "sub_rowvec", {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gx = t.grad_ref(ix);
        Tensor& gb = t.grad_ref(ib);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) {
                gx.at(i, j) += g.at(i, j);
                gb[j] -= g.at(i, j);
            }
    })
}

Var Tape::mul_rowvec(Var X, Var b) {
    const Tensor& A = value(X);
    const Tensor& v = value(b);
    if (A.cols() != v.size()) throw ContractError("mul_rowvec: dimension mismatch");
    Tensor o = A;
    for (std::size_t i = 0; i < A.rows(); ++i)
        for (std::size_t j = 0; j < A.cols(); ++j) o.at(i, j) *= v[j];
    int ix = X.id, ib = b.id;
    USFLAB_OP(o, "mul_rowvec", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& vx = t.nodes_[ix].value;
        const Tensor& vb = t.nodes_[ib].value;
        Tensor& gx = t.grad_ref(ix);
        Tensor& gb = t.grad_ref(ib);
        for (std::size_t i = 0; i < g.rows(); ++i)
            for (std::size_t j = 0; j < g.cols(); ++j) {
                gx.at(i, j) += g.at(i, j) * vb[j];
                gb[j] += g.at(i, j) * vx.at(i, j);
            }
    })
}

Var Tape::tri_solve_rows(Var T, Var B, bool lower, bool unit_diag) {
    const Tensor& M = value(T);
    const Tensor& R = value(B);
    if (M.rows() != R.cols()) throw ContractError("tri_solve_rows: dimension mismatch");
    const std::size_t n = R.rows();
    const std::size_t d = M.rows();
    Tensor X({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        Tensor x = triangular_solve(M, R.row(r), lower, unit_diag);
        for (std::size_t j = 0; j < d; ++j) X.at(r, j) = x[j];
    }
    int im = T.id, ib = B.id;
    USFLAB_OP(X, "tri_solve_rows", {
        const Tensor& g = t.nodes_[self].grad;
        const Tensor& M2 = t.nodes_[im].value;
        const Tensor& Xv = t.nodes_[self].value;
        Tensor& gm = t.grad_ref(im);
        Tensor& gb = t.grad_ref(ib);
        const Tensor Mt = transpose(M2);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            // gbar solves M^T gbar = g_r; it is both dB and the outer-product
            // factor for dM.
            Tensor gbar = triangular_solve(Mt, g.row(r), !lower, unit_diag);
            for (std::size_t i = 0; i < gbar.size(); ++i) gb.at(r, i) += gbar[i];
            for (std::size_t i = 0; i < gbar.size(); ++i) {
                if (gbar[i] == 0.0) continue;
                for (std::size_t j = 0; j < gbar.size(); ++j) {
                    const bool in_tri = lower ? (j < i || (!unit_diag && j == i))
                                              : (j > i || (!unit_diag && j == i));
                    if (in_tri) gm.at(i, j) -= gbar[i] * Xv.at(r, j);
                }
            }
        }
    })
}

Var Tape::unit_lower(Var packed_strict, std::size_t d) {
    const Tensor& p = value(packed_strict);
    if (p.size() != d * (d - 1) / 2) throw ContractError("unit_lower: packed size mismatch");
    Tensor L = Tensor::identity(d);
    std::size_t k = 0;
    for (std::size_t i = 1; i < d; ++i)
        for (std::size_t j = 0; j < i; ++j) L.at(i, j) = p[k++];
    int ip = packed_strict.id;
    USFLAB_OP(L, "unit_lower", {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gp = t.grad_ref(ip);
        std::size_t k2 = 0;
        for (std::size_t i = 1; i < g.rows(); ++i)
            for (std::size_t j = 0; j < i; ++j) gp[k2++] += g.at(i, j);
    })
}

Var Tape::upper(Var packed_strict, Var diag, std::size_t d) {
    const Tensor& p = value(packed_strict);
    const Tensor& u = value(diag);
    if (p.size() != d * (d - 1) / 2) throw ContractError("upper: packed size mismatch");
    if (u.size() != d) throw ContractError("upper: diagonal size mismatch");
    Tensor U({d, d});
    std::size_t k = 0;
    for (std::size_t i = 0; i < d; ++i) {
        U.at(i, i) = u[i];
        for (std::size_t j = i + 1; j < d; ++j) U.at(i, j) = p[k++];
    }
    int ip = packed_strict.id, iu = diag.id;
    USFLAB_OP(U, "upper", {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gp = t.grad_ref(ip);
        Tensor& gu = t.grad_ref(iu);
        std::size_t k2 = 0;
        for (std::size_t i = 0; i < g.rows(); ++i) {
            gu[i] += g.at(i, i);
            for (std::size_t j = i + 1; j < g.cols(); ++j) gp[k2++] += g.at(i, j);
        }
    })
}

Var Tape::sum(Var a) {
    const Tensor& v = value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[i];
    Tensor o({1});
    o[0] = s;
    int ia = a.id;
    USFLAB_OP(o, "sum", {
        const double g = t.nodes_[self].grad[0];
        Tensor& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    })
}

Var Tape::mean(Var a) {
    const Tensor& v = value(a);
    if (v.size() == 0) throw ContractError("mean: empty tensor");
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += v[i];
    Tensor o({1});
    o[0] = s / static_cast<double>(v.size());
    int ia = a.id;
    const double inv = 1.0 / static_cast<double>(v.size());
    USFLAB_OP(o, "mean", {
        const double g = t.nodes_[self].grad[0] * inv;
        Tensor& ga = t.grad_ref(ia);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    })
}

Var Tape::row_sum(Var X) {
    const Tensor& A = value(X);
    Tensor o({A.rows()});
    for (std::size_t i = 0; i < A.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < A.cols(); ++j) s += A.at(i, j);
        o[i] = s;
    }
    int ix = X.id;
    USFLAB_OP(o, "row_sum", {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gx = t.grad_ref(ix);
        for (std::size_t i = 0; i < gx.rows(); ++i)
            for (std::size_t j = 0; j < gx.cols(); ++j) gx.at(i, j) += g[i];
    })
}

Var Tape::broadcast_rows(Var s, std::size_t n) {
    const Tensor& v = value(s);
    if (v.size() != 1) throw ContractError("broadcast_rows: scalar required");
    Tensor o = Tensor::full({n}, v[0]);
    int is = s.id;
    USFLAB_OP(o, "broadcast_rows", {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& gs = t.grad_ref(is);
        for (std::size_t i = 0; i < g.size(); ++i) gs[0] += g[i];
    })
}

void Tape::backward(Var loss) {
    if (!loss.valid()) throw ContractError("backward: invalid loss variable");
    const Tensor& lv = value(loss);
    if (lv.size() != 1) throw ContractError("backward: loss must be a scalar");
    if (!lv.all_finite()) throw NumericError("backward", "loss is non-finite");

    grad_ref(loss.id)[0] = 1.0;
    for (std::size_t k = nodes_.size(); k-- > 0;) {
        Node& n = nodes_[k];
        if (!n.grad_live) continue;
        if (n.back) n.back(*this);
        if (n.param && n.param->requires_grad) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) n.param->grad[i] += n.grad[i];
        }
    }
}

std::vector<Tensor> finite_diff_grad(const std::function<double()>& f,
                                     const std::vector<ParamNode*>& params,
                                     double step) {
    if (step <= 0.0) throw ContractError("finite_diff_grad: step must be positive");
    std::vector<Tensor> grads;
    grads.reserve(params.size());
    for (ParamNode* p : params) {
        Tensor g = Tensor::zeros(p->value.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double orig = p->value[i];
            p->value[i] = orig + step;
            const double fp = f();
            p->value[i] = orig - step;
            const double fm = f();
            p->value[i] = orig;
            g[i] = (fp - fm) / (2.0 * step);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

} // namespace usflab::ad
