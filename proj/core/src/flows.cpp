#include "usflab/flows.hpp"

#include <cmath>
#include <string>

#include "usflab/linalg.hpp"

namespace usflab {

namespace {

constexpr double kLn2Pi = 1.8378770664093454835606594728112;
constexpr double kPi = 3.14159265358979323846;

Tensor as_matrix(const Tensor& v) {
    if (v.rank() == 2) return v;
    Tensor m({1, v.size()});
    for (std::size_t i = 0; i < v.size(); ++i) m.at(0, i) = v[i];
    return m;
}

Tensor as_vector(const Tensor& m) {
    Tensor v({m.size()});
    for (std::size_t i = 0; i < m.size(); ++i) v[i] = m[i];
    return v;
}

void fill_normal(ParamNode& p, double scale, RngStream& stream) {
    for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] = scale * stream.normal();
}

} // namespace

Tensor CouplingMask::complement() const {
    Tensor c = bits;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 1.0 - c[i];
    return c;
}

CouplingMask CouplingMask::alternating(std::size_t d, bool start_with_one) {
    Tensor bits({d});
    for (std::size_t i = 0; i < d; ++i) {
        bits[i] = (i % 2 == 0) == start_with_one ? 1.0 : 0.0;
    }
    return CouplingMask{std::move(bits)};
}

Conditioner::Heads Conditioner::apply(ad::Tape& tape, ad::Var x) const {
    ad::Var h = x;
    for (const auto& layer : hidden) {
        ad::Var w = tape.param(const_cast<ParamNode&>(layer.weight));
        ad::Var b = tape.param(const_cast<ParamNode&>(layer.bias));
        h = tape.softplus(tape.add_rowvec(tape.matmul_nt(h, w), b));
    }
    Heads out;
    {
        ad::Var w = tape.param(const_cast<ParamNode&>(head_f.weight));
        ad::Var b = tape.param(const_cast<ParamNode&>(head_f.bias));
        out.f = tape.add_rowvec(tape.matmul_nt(h, w), b);
    }
    if (has_mult_head) {
        ad::Var w = tape.param(const_cast<ParamNode&>(head_g.weight));
        ad::Var b = tape.param(const_cast<ParamNode&>(head_g.bias));
        ad::Var pre = tape.add_rowvec(tape.matmul_nt(h, w), b);
        out.log_g = tape.scale(tape.tanh(pre), g_clamp);
        out.has_g = true;
    }
    return out;
}

std::vector<ParamNode*> Conditioner::parameters() {
    std::vector<ParamNode*> ps;
    for (auto& l : hidden) {
        ps.push_back(&l.weight);
        ps.push_back(&l.bias);
    }
    ps.push_back(&head_f.weight);
    ps.push_back(&head_f.bias);
    if (has_mult_head) {
        ps.push_back(&head_g.weight);
        ps.push_back(&head_g.bias);
    }
    return ps;
}

Conditioner Conditioner::make(std::size_t d, std::size_t depth, std::size_t width,
                              bool mult_head, double g_clamp, RngStream& stream) {
    if (d == 0 || depth == 0 || width == 0) {
        throw ContractError("Conditioner::make: zero dimension");
    }
    Conditioner c;
    c.dim = d;
    c.has_mult_head = mult_head;
    c.g_clamp = g_clamp;
    std::size_t in = d;
    for (std::size_t l = 0; l < depth; ++l) {
        DenseLayer layer;
        layer.weight = ParamNode(Tensor({width, in}));
        layer.bias = ParamNode(Tensor({width}));
        fill_normal(layer.weight, 1.0 / std::sqrt(static_cast<double>(in)), stream);
        c.hidden.push_back(std::move(layer));
        in = width;
    }
    c.head_f.weight = ParamNode(Tensor({d, in}));
    c.head_f.bias = ParamNode(Tensor({d}));
    if (mult_head) {
        c.head_g.weight = ParamNode(Tensor({d, in}));
        c.head_g.bias = ParamNode(Tensor({d}));
    }
    return c;
}

LULayerParams LULayerParams::identity(std::size_t d) {
    LULayerParams p;
    p.dim = d;
    p.lower_packed = ParamNode(Tensor({d * (d - 1) / 2}));
    p.upper_packed = ParamNode(Tensor({d * (d - 1) / 2}));
    p.diag_raw = ParamNode(Tensor({d}));
    p.diag_sign = Tensor::full({d}, 1.0);
    p.bias = ParamNode(Tensor({d}));
    return p;
}

Tensor LULayerParams::lower_matrix() const {
    Tensor L = Tensor::identity(dim);
    std::size_t k = 0;
    for (std::size_t i = 1; i < dim; ++i)
        for (std::size_t j = 0; j < i; ++j) L.at(i, j) = lower_packed.value[k++];
    return L;
}

Tensor LULayerParams::upper_matrix() const {
    Tensor U({dim, dim});
    const Tensor u = diag_values();
    std::size_t k = 0;
    for (std::size_t i = 0; i < dim; ++i) {
        U.at(i, i) = u[i];
        for (std::size_t j = i + 1; j < dim; ++j) U.at(i, j) = upper_packed.value[k++];
    }
    return U;
}

Tensor LULayerParams::diag_values() const {
    Tensor u({dim});
    for (std::size_t i = 0; i < dim; ++i) {
        u[i] = diag_sign[i] * std::exp(diag_raw.value[i]);
    }
    return u;
}

double LULayerParams::logdet() const {
    double s = 0.0;
    for (std::size_t i = 0; i < dim; ++i) s += diag_raw.value[i];
    return s;
}

std::vector<ParamNode*> LULayerParams::parameters() {
    return {&lower_packed, &upper_packed, &diag_raw, &bias};
}

FlowVars additive_coupling_forward(ad::Tape& tape, ad::Var x, const CouplingMask& mask,
                                   const Conditioner& cond) {
    const std::size_t n = tape.value(x).rows();
    ad::Var m = tape.leaf(mask.bits);
    ad::Var mc = tape.leaf(mask.complement());
    ad::Var heads_in = tape.mul_rowvec(x, m);
    Conditioner::Heads heads = cond.apply(tape, heads_in);
    ad::Var y = tape.add(x, tape.mul_rowvec(heads.f, mc));
    return FlowVars{y, tape.leaf(Tensor::zeros({n}))};
}

FlowVars affine_coupling_forward(ad::Tape& tape, ad::Var x, const CouplingMask& mask,
                                 const Conditioner& cond) {
    if (!cond.has_mult_head) {
        throw ContractError("affine_coupling_forward: conditioner lacks multiplicative head");
    }
    ad::Var m = tape.leaf(mask.bits);
    ad::Var mc = tape.leaf(mask.complement());
    ad::Var heads_in = tape.mul_rowvec(x, m);
    Conditioner::Heads heads = cond.apply(tape, heads_in);
    // Multiplier is exp(log_g) on unmasked coordinates and exactly 1 on
    // masked ones (exp of a zeroed log-scale).
    ad::Var log_g_eff = tape.mul_rowvec(heads.log_g, mc);
    ad::Var mult = tape.exp(log_g_eff);
    ad::Var y = tape.add(tape.mul(x, mult), tape.mul_rowvec(heads.f, mc));
    ad::Var logdet = tape.row_sum(log_g_eff);
    return FlowVars{y, logdet};
}

FlowVars lu_forward(ad::Tape& tape, ad::Var x, const LULayerParams& params) {
    auto& p = const_cast<LULayerParams&>(params);
    ad::Var r = tape.param(p.diag_raw);
    ad::Var u = tape.mul_const(tape.exp(r), p.diag_sign);
    ad::Var L = tape.unit_lower(tape.param(p.lower_packed), p.dim);
    ad::Var U = tape.upper(tape.param(p.upper_packed), u, p.dim);
    // Row convention: A(x) = L U x + b becomes Y = ((X U^T) L^T) + b.
    ad::Var y = tape.add_rowvec(tape.matmul_nt(tape.matmul_nt(x, U), L), tape.param(p.bias));
    // ln|u_i| = raw_i by the sign*exp parameterization.
    ad::Var logdet = tape.broadcast_rows(tape.sum(r), tape.value(x).rows());
    return FlowVars{y, logdet};
}

FlowVars lu_inverse(ad::Tape& tape, ad::Var y, const LULayerParams& params) {
    auto& p = const_cast<LULayerParams&>(params);
    ad::Var r = tape.param(p.diag_raw);
    ad::Var u = tape.mul_const(tape.exp(r), p.diag_sign);
    ad::Var L = tape.unit_lower(tape.param(p.lower_packed), p.dim);
    ad::Var U = tape.upper(tape.param(p.upper_packed), u, p.dim);
    ad::Var rhs = tape.sub_rowvec(y, tape.param(p.bias));
    ad::Var w = tape.tri_solve_rows(L, rhs, /*lower=*/true, /*unit_diag=*/true);
    ad::Var x = tape.tri_solve_rows(U, w, /*lower=*/false, /*unit_diag=*/false);
    ad::Var logdet = tape.neg(tape.broadcast_rows(tape.sum(r), tape.value(y).rows()));
    return FlowVars{x, logdet};
}

FlowVars flow_forward(ad::Tape& tape, const FlowModel& model, ad::Var x) {
    if (tape.value(x).cols() != model.dim) {
        throw ContractError("flow_forward: input dimension mismatch");
    }
    const std::size_t n = tape.value(x).rows();
    ad::Var h = x;
    ad::Var logdet = tape.leaf(Tensor::zeros({n}));
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        const FlowBlock& blk = model.blocks[i];
        try {
            FlowVars a = lu_forward(tape, h, blk.affine);
            FlowVars c = model.kind == FlowKind::UniformlyScaling
                             ? additive_coupling_forward(tape, a.z, blk.mask, blk.cond)
                             : affine_coupling_forward(tape, a.z, blk.mask, blk.cond);
            FlowVars inv = lu_inverse(tape, c.z, blk.affine);
            h = inv.z;
            // A_i and A_i^{-1} share parameters, so their determinants
            // cancel identically; only the coupling term survives.
            logdet = tape.add(logdet, c.logdet);
        } catch (const NumericError& e) {
            throw NumericError("block " + std::to_string(i) + "/" + e.where(), e.what());
        }
    }
    try {
        FlowVars fin = lu_forward(tape, h, model.final_affine);
        logdet = tape.add(logdet, fin.logdet);
        return FlowVars{fin.z, logdet};
    } catch (const NumericError& e) {
        throw NumericError("final_affine/" + e.where(), e.what());
    }
}

ad::Var base_logpdf_rows(ad::Tape& tape, const GaussianSpec& base, ad::Var z) {
    const std::size_t d = base.dim();
    if (tape.value(z).cols() != d) throw ContractError("base_logpdf_rows: dimension mismatch");
    ad::Var r = tape.sub_rowvec(z, tape.leaf(base.mean));
    switch (base.cov_kind) {
    case GaussianSpec::Cov::Isotropic: {
        ad::Var q = tape.row_sum(tape.square(r));
        const double c = -0.5 * static_cast<double>(d) * (kLn2Pi + std::log(base.iso_variance));
        return tape.add_const(tape.scale(q, -1.0 / (2.0 * base.iso_variance)), c);
    }
    case GaussianSpec::Cov::Diagonal: {
        Tensor inv2({d});
        double c = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            inv2[i] = 1.0 / (2.0 * base.diag[i]);
            c += -0.5 * (kLn2Pi + std::log(base.diag[i]));
        }
        ad::Var q = tape.row_sum(tape.mul_rowvec(tape.square(r), tape.leaf(inv2)));
        return tape.add_const(tape.neg(q), c);
    }
    case GaussianSpec::Cov::Full:
        throw ContractError("base_logpdf_rows: full-covariance base not supported for flows");
    }
    throw ContractError("base_logpdf_rows: unknown covariance kind");
}

ad::Var flow_nll(ad::Tape& tape, const FlowModel& model, ad::Var batch) {
    if (tape.value(batch).rows() == 0) throw ContractError("flow_nll: empty batch");
    FlowVars fw = flow_forward(tape, model, batch);
    ad::Var lp = base_logpdf_rows(tape, model.base, fw.z);
    return tape.neg(tape.mean(tape.add(lp, fw.logdet)));
}

ad::Var det_prior_penalty(ad::Tape& tape, const FlowModel& model, double sigma0) {
    if (sigma0 <= 0.0) throw ContractError("det_prior_penalty: sigma0 must be positive");
    const double s2 = sigma0 * sigma0;
    // -ln BiLogNormal(u; 0, sigma0^2) with ln|u| = raw:
    //   ln 2 + raw + ln(sigma0 sqrt(2 pi)) + raw^2 / (2 sigma0^2)
    const double per_entry_const = std::log(2.0) + 0.5 * std::log(2.0 * kPi * s2);

    std::vector<const LULayerParams*> layers;
    for (const auto& blk : model.blocks) layers.push_back(&blk.affine);
    layers.push_back(&model.final_affine);

    ad::Var total = tape.leaf(Tensor::zeros({1}));
    std::size_t entries = 0;
    for (const LULayerParams* lp : layers) {
        ad::Var r = tape.param(const_cast<LULayerParams*>(lp)->diag_raw);
        ad::Var quad = tape.scale(tape.sum(tape.square(r)), 1.0 / (2.0 * s2));
        total = tape.add(total, tape.add(quad, tape.sum(r)));
        entries += lp->dim;
    }
    return tape.add_const(total, per_entry_const * static_cast<double>(entries));
}

std::vector<ParamNode*> FlowModel::parameters() {
    std::vector<ParamNode*> ps;
    for (auto& blk : blocks) {
        for (auto* p : blk.affine.parameters()) ps.push_back(p);
        for (auto* p : blk.cond.parameters()) ps.push_back(p);
    }
    for (auto* p : final_affine.parameters()) ps.push_back(p);
    return ps;
}

void FlowModel::randomize(double scale, RngStream& stream) {
    for (ParamNode* p : parameters()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = scale * stream.normal();
    }
}

FlowModel FlowModel::make(FlowKind kind, std::size_t d, std::size_t n_blocks,
                          std::size_t cond_depth, GaussianSpec base,
                          double g_clamp, RngStream& stream, std::size_t cond_width) {
    if (d < 1) throw ContractError("FlowModel::make: dimension must be >= 1");
    if (n_blocks < 1) throw ContractError("FlowModel::make: need at least one coupling block");
    if (base.dim() != d) throw ContractError("FlowModel::make: base dimension mismatch");
    FlowModel m;
    m.kind = kind;
    m.dim = d;
    m.base = std::move(base);
    m.g_clamp = g_clamp;
    m.cond_depth = cond_depth;
    m.cond_width = cond_width == 0 ? 4 * d : cond_width;
    const bool mult = kind == FlowKind::Affine;
    for (std::size_t i = 0; i < n_blocks; ++i) {
        FlowBlock blk;
        blk.affine = LULayerParams::identity(d);
        blk.mask = CouplingMask::alternating(d, i % 2 == 0);
        blk.cond = Conditioner::make(d, cond_depth, m.cond_width, mult, g_clamp, stream);
        m.blocks.push_back(std::move(blk));
    }
    m.final_affine = LULayerParams::identity(d);
    return m;
}

FlowEval flow_forward_eval(const FlowModel& model, const Tensor& batch) {
    ad::Tape tape;
    FlowVars fw = flow_forward(tape, model, tape.leaf(as_matrix(batch)));
    return FlowEval{tape.value(fw.z), tape.value(fw.logdet)};
}

double flow_nll_value(const FlowModel& model, const Tensor& batch) {
    ad::Tape tape;
    return tape.scalar(flow_nll(tape, model, tape.leaf(as_matrix(batch))));
}

namespace {

Tensor coupling_inverse_rows(const Tensor& y, const CouplingMask& mask,
                             const Conditioner& cond, bool affine) {
    ad::Tape tape;
    const Tensor Y = as_matrix(y);
    ad::Var masked = tape.mul_rowvec(tape.leaf(Y), tape.leaf(mask.bits));
    Conditioner::Heads heads = cond.apply(tape, masked);
    const Tensor& f = tape.value(heads.f);
    const Tensor mc = mask.complement();
    Tensor x = Y;
    for (std::size_t i = 0; i < Y.rows(); ++i) {
        for (std::size_t j = 0; j < Y.cols(); ++j) {
            if (mc[j] == 0.0) continue;
            double v = Y.at(i, j) - f.at(i, j);
            if (affine) v /= std::exp(tape.value(heads.log_g).at(i, j));
            x.at(i, j) = v;
        }
    }
    return y.rank() == 1 ? as_vector(x) : x;
}

Tensor lu_apply_rows(const LULayerParams& p, const Tensor& X) {
    const Tensor L = p.lower_matrix();
    const Tensor U = p.upper_matrix();
    Tensor Y({X.rows(), X.cols()});
    for (std::size_t r = 0; r < X.rows(); ++r) {
        Tensor v = matvec(L, matvec(U, X.row(r)));
        for (std::size_t j = 0; j < X.cols(); ++j) Y.at(r, j) = v[j] + p.bias.value[j];
    }
    return Y;
}

Tensor lu_invert_rows(const LULayerParams& p, const Tensor& Y) {
    const Tensor L = p.lower_matrix();
    const Tensor U = p.upper_matrix();
    Tensor X({Y.rows(), Y.cols()});
    for (std::size_t r = 0; r < Y.rows(); ++r) {
        Tensor rhs = Y.row(r);
        for (std::size_t j = 0; j < rhs.size(); ++j) rhs[j] -= p.bias.value[j];
        Tensor w = triangular_solve(L, rhs, /*lower=*/true, /*unit_diag=*/true);
        Tensor x = triangular_solve(U, w, /*lower=*/false, /*unit_diag=*/false);
        for (std::size_t j = 0; j < Y.cols(); ++j) X.at(r, j) = x[j];
    }
    return X;
}

} // namespace

Tensor additive_coupling_inverse(const Tensor& y, const CouplingMask& mask,
                                 const Conditioner& cond) {
    return coupling_inverse_rows(y, mask, cond, /*affine=*/false);
}

Tensor affine_coupling_inverse(const Tensor& y, const CouplingMask& mask,
                               const Conditioner& cond) {
    if (!cond.has_mult_head) {
        throw ContractError("affine_coupling_inverse: conditioner lacks multiplicative head");
    }
    return coupling_inverse_rows(y, mask, cond, /*affine=*/true);
}

Tensor flow_inverse(const FlowModel& model, const Tensor& latents) {
    Tensor h = lu_invert_rows(model.final_affine, as_matrix(latents));
    const bool affine = model.kind == FlowKind::Affine;
    for (std::size_t k = model.blocks.size(); k-- > 0;) {
        const FlowBlock& blk = model.blocks[k];
        // B^{-1} = A^{-1} o C^{-1} o A
        h = lu_apply_rows(blk.affine, h);
        h = coupling_inverse_rows(h, blk.mask, blk.cond, affine);
        h = lu_invert_rows(blk.affine, h);
    }
    return latents.rank() == 1 ? as_vector(h) : h;
}

double svdd_equivalence_gap(const FlowModel& model, const Tensor& batch) {
    if (model.kind != FlowKind::UniformlyScaling) {
        throw ContractError("svdd_equivalence_gap: model must be uniformly scaling");
    }
    if (model.base.cov_kind != GaussianSpec::Cov::Isotropic ||
        std::abs(model.base.iso_variance - 0.5) > 1e-15) {
        throw ContractError("svdd_equivalence_gap: base must be N(c, I/2)");
    }
    const Tensor X = as_matrix(batch);
    const double nll = flow_nll_value(model, X);
    FlowEval ev = flow_forward_eval(model, X);
    const std::size_t d = model.dim;
    double msd = 0.0;
    for (std::size_t r = 0; r < ev.z.rows(); ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = ev.z.at(r, j) - model.base.mean[j];
            msd += diff * diff;
        }
    }
    msd /= static_cast<double>(ev.z.rows());
    double mean_logdet = 0.0;
    for (std::size_t r = 0; r < ev.logdet.size(); ++r) mean_logdet += ev.logdet[r];
    mean_logdet /= static_cast<double>(ev.logdet.size());
    const double rhs = msd - mean_logdet + 0.5 * static_cast<double>(d) * std::log(kPi);
    return std::abs(nll - rhs);
}

LULayerParams sample_lu_prior(std::size_t d, double sigma0, RngStream& stream) {
    if (sigma0 <= 0.0) throw ContractError("sample_lu_prior: sigma0 must be positive");
    LULayerParams p = LULayerParams::identity(d);
    for (std::size_t i = 0; i < d; ++i) {
        p.diag_sign[i] = stream.uniform01() < 0.5 ? -1.0 : 1.0;
        p.diag_raw.value[i] = sigma0 * stream.normal(); // ln|u_i| ~ N(0, sigma0^2)
    }
    return p;
}

} // namespace usflab

