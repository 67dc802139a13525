#include "usflab/oneclass.hpp"

#include <cmath>

namespace usflab {

namespace {

Tensor as_matrix(const Tensor& v) {
    if (v.rank() == 2) return v;
    Tensor m({1, v.size()});
    for (std::size_t i = 0; i < v.size(); ++i) m.at(0, i) = v[i];
    return m;
}

} // namespace

std::vector<std::size_t> SvddModel::schedule(std::size_t d, std::size_t depth) {
    if (depth < 2 || depth > 6) throw ContractError("SvddModel: depth must be in 2..6");
    // depth 2 -> [d, d]; depth k -> [d, 2^(k-2) d, ..., 2d, d]
    std::vector<std::size_t> widths;
    widths.push_back(d);
    for (std::size_t i = depth - 2; i >= 1; --i) {
        widths.push_back((static_cast<std::size_t>(1) << i) * d);
        if (i == 1) break;
    }
    widths.push_back(d);
    return widths;
}

SvddModel SvddModel::make(std::size_t d, std::size_t depth, double lambda,
                          RngStream& stream) {
    if (lambda < 0.0) throw ContractError("SvddModel: lambda must be >= 0");
    SvddModel m;
    m.widths = schedule(d, depth);
    m.lambda = lambda;
    for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
        ParamNode w(Tensor({m.widths[l + 1], m.widths[l]}));
        const double scale = 1.0 / std::sqrt(static_cast<double>(m.widths[l]));
        for (std::size_t i = 0; i < w.value.size(); ++i) w.value[i] = scale * stream.normal();
        m.weights.push_back(std::move(w));
    }
    m.center = Tensor::zeros({m.widths.back()});
    return m;
}

ad::Var SvddModel::encode(ad::Tape& tape, ad::Var x) const {
    ad::Var h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        ad::Var w = tape.param(const_cast<ParamNode&>(weights[l]));
        h = tape.matmul_nt(h, w);
        if (l + 1 < weights.size()) h = tape.leaky_relu(h, leak);
    }
    return h;
}

Tensor SvddModel::encode_eval(const Tensor& batch) const {
    ad::Tape tape;
    return tape.value(encode(tape, tape.leaf(as_matrix(batch))));
}

std::vector<ParamNode*> SvddModel::parameters() {
    std::vector<ParamNode*> ps;
    for (auto& w : weights) ps.push_back(&w);
    return ps;
}

ad::Var svdd_loss(ad::Tape& tape, const SvddModel& model, ad::Var batch) {
    if (tape.value(batch).rows() == 0) throw ContractError("svdd_loss: empty batch");
    ad::Var z = model.encode(tape, batch);
    ad::Var r = tape.sub_rowvec(z, tape.leaf(model.center));
    ad::Var loss = tape.mean(tape.row_sum(tape.square(r)));
    if (model.lambda > 0.0) {
        ad::Var reg = tape.leaf(Tensor::zeros({1}));
        for (const auto& w : model.weights) {
            ad::Var wv = tape.param(const_cast<ParamNode&>(w));
            reg = tape.add(reg, tape.sum(tape.square(wv)));
        }
        loss = tape.add(loss, tape.scale(reg, model.lambda / 2.0));
    }
    return loss;
}

double svdd_loss_value(const SvddModel& model, const Tensor& batch) {
    ad::Tape tape;
    return tape.scalar(svdd_loss(tape, model, tape.leaf(as_matrix(batch))));
}

double svdd_score(const SvddModel& model, const Tensor& x) {
    const Tensor z = model.encode_eval(x);
    double s = 0.0;
    for (std::size_t j = 0; j < z.size(); ++j) {
        const double diff = z[j] - model.center[j];
        s += diff * diff;
    }
    return s;
}

Tensor init_center(const SvddModel& model, const Tensor& data) {
    const Tensor Z = model.encode_eval(data);
    const std::size_t n = Z.rows();
    if (n == 0) throw ContractError("init_center: empty data");
    Tensor c({Z.cols()});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < Z.cols(); ++j) c[j] += Z.at(i, j);
    double norm2 = 0.0;
    for (std::size_t j = 0; j < c.size(); ++j) {
        c[j] /= static_cast<double>(n);
        norm2 += c[j] * c[j];
    }
    if (std::sqrt(norm2) < 0.1) {
        for (std::size_t j = 0; j < c.size(); ++j) c[j] += 0.1;
    }
    return c;
}

FAlphaMap::FAlphaMap(double a, std::size_t d) : alpha(a), dim(d) {
    if (a <= 0.0) throw ContractError("FAlphaMap: alpha must be positive");
    if (d <= 2) throw ContractError("FAlphaMap: dimension must exceed 2");
}

Tensor f_alpha_apply(const FAlphaMap& map, const Tensor& x) {
    if (x.size() != map.dim) throw ContractError("f_alpha_apply: dimension mismatch");
    double norm2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) norm2 += x[i] * x[i];
    Tensor out({x.size()});
    if (norm2 == 0.0) return out;
    const double s = 1.0 / (map.alpha * norm2);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = s * x[i];
    return out;
}

double f_alpha_expected_loss(double alpha, std::size_t d) {
    if (alpha <= 0.0) throw ContractError("f_alpha_expected_loss: alpha must be positive");
    if (d <= 2) throw Error("f_alpha_expected_loss: diverges for d <= 2");
    return 1.0 / (alpha * alpha * static_cast<double>(d - 2));
}

double f_alpha_monte_carlo_loss(double alpha, std::size_t d, std::size_t n,
                                RngStream& stream) {
    const FAlphaMap map(alpha, d);
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Tensor x = stream.normal_tensor({d});
        const Tensor y = f_alpha_apply(map, x);
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += y[j] * y[j];
        acc += s;
    }
    return acc / static_cast<double>(n);
}

bool density_inversion_check(const FAlphaMap& map,
                             const std::vector<std::pair<Tensor, Tensor>>& pairs) {
    auto norm2 = [](const Tensor& v) {
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * v[i];
        return s;
    };
    for (const auto& [x, y] : pairs) {
        const double nx = norm2(x);
        const double ny = norm2(y);
        if (nx == 0.0 || ny == 0.0) {
            throw ContractError("density_inversion_check: zero vector in pair");
        }
        const double fx = norm2(f_alpha_apply(map, x));
        const double fy = norm2(f_alpha_apply(map, y));
        if (fx < fy) {
            // N(x) < N(y) iff ||x|| > ||y|| for a standard normal.
            if (!(nx > ny)) return false;
        }
    }
    return true;
}

} // namespace usflab
