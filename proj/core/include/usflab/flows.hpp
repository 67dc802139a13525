#pragma once

#include <vector>

#include "usflab/autodiff.hpp"
#include "usflab/distributions.hpp"
#include "usflab/rng.hpp"

namespace usflab {

struct CouplingMask {
    Tensor bits; // [d], entries 0 or 1

    Tensor complement() const;
    static CouplingMask alternating(std::size_t d, bool start_with_one);
};

/// Fully connected layer; weights [out, in], bias [out].
struct DenseLayer {
    ParamNode weight;
    ParamNode bias;
};

/// Conditioner network shared by both coupling kinds: a softplus MLP trunk
/// with an additive head and, for affine coupling, a multiplicative head
/// whose log-scale output is clamp * tanh(pre-activation).
struct Conditioner {
    std::size_t dim = 0;
    std::vector<DenseLayer> hidden;
    DenseLayer head_f;
    bool has_mult_head = false;
    DenseLayer head_g;
    double g_clamp = 2.0;

    struct Heads {
        ad::Var f;
        ad::Var log_g; // valid only when has_g
        bool has_g = false;
    };

    /// Trunk and heads applied to [n, d] input rows.
    Heads apply(ad::Tape& tape, ad::Var x) const;

    std::vector<ParamNode*> parameters();

    /// Hidden layers randomly initialized, head layers zero-initialized so
    /// the induced coupling layer starts as the identity.
    static Conditioner make(std::size_t d, std::size_t depth, std::size_t width,
                            bool mult_head, double g_clamp, RngStream& stream);
};

/// LU-factored bijective affine map A(x) = L U x + b. The diagonal of U is
/// stored as sign_i * exp(raw_i), so it is smooth and never zero and
/// ln|u_i| = raw_i.
struct LULayerParams {
    std::size_t dim = 0;
    ParamNode lower_packed; // strictly lower entries, row-major, d(d-1)/2
    ParamNode upper_packed; // strictly upper entries, row-major
    ParamNode diag_raw;     // [d]
    Tensor diag_sign;       // [d], fixed +-1 chosen at initialization
    ParamNode bias;         // [d]

    static LULayerParams identity(std::size_t d);

    Tensor lower_matrix() const;
    Tensor upper_matrix() const;
    Tensor diag_values() const; // effective u_i
    double logdet() const;      // sum of raw entries = sum ln|u_i|

    std::vector<ParamNode*> parameters();
};

enum class FlowKind { UniformlyScaling, Affine };

struct FlowBlock {
    LULayerParams affine; // A_i; shared by the forward and inverse application
    CouplingMask mask;
    Conditioner cond;
};

/// phi = A_{n+1} o B_n o ... o B_1 with B_i = A_i^{-1} o C_i o A_i.
struct FlowModel {
    FlowKind kind = FlowKind::UniformlyScaling;
    std::size_t dim = 0;
    std::vector<FlowBlock> blocks;
    LULayerParams final_affine;
    GaussianSpec base;
    double g_clamp = 2.0;
    std::size_t cond_depth = 2;
    std::size_t cond_width = 0;

    /// cond_width 0 selects the default width 4d.
    static FlowModel make(FlowKind kind, std::size_t d, std::size_t n_blocks,
                          std::size_t cond_depth, GaussianSpec base,
                          double g_clamp, RngStream& stream, std::size_t cond_width = 0);

    std::vector<ParamNode*> parameters();
    void randomize(double scale, RngStream& stream); // for property tests
};

/// A pushed-forward batch: z is [n, d], logdet is the per-sample
/// log |det J| as an [n] vector.
struct FlowVars {
    ad::Var z;
    ad::Var logdet;
};

// Tape-level layer primitives.
FlowVars additive_coupling_forward(ad::Tape& tape, ad::Var x, const CouplingMask& mask,
                                   const Conditioner& cond);
FlowVars affine_coupling_forward(ad::Tape& tape, ad::Var x, const CouplingMask& mask,
                                 const Conditioner& cond);
FlowVars lu_forward(ad::Tape& tape, ad::Var x, const LULayerParams& params);
FlowVars lu_inverse(ad::Tape& tape, ad::Var y, const LULayerParams& params);

/// Full flow on the tape. Block-internal affine determinants cancel by
/// parameter sharing, so only coupling terms and the final affine
/// contribute to logdet.
FlowVars flow_forward(ad::Tape& tape, const FlowModel& model, ad::Var x);

/// Per-row base log-density on the tape (isotropic or diagonal base).
ad::Var base_logpdf_rows(ad::Tape& tape, const GaussianSpec& base, ad::Var z);

/// Mean negative log-likelihood of the batch under the flow (scalar Var).
ad::Var flow_nll(ad::Tape& tape, const FlowModel& model, ad::Var batch);

/// MAP penalty: negative BiLogNormal(0, sigma0^2) log-density summed over
/// every effective diagonal u_i of every LU layer in the model.
ad::Var det_prior_penalty(ad::Tape& tape, const FlowModel& model, double sigma0);

// Plain-tensor conveniences (no gradients).
struct FlowEval {
    Tensor z;      // [n, d]
    Tensor logdet; // [n]
};
FlowEval flow_forward_eval(const FlowModel& model, const Tensor& batch);
Tensor flow_inverse(const FlowModel& model, const Tensor& latents);
double flow_nll_value(const FlowModel& model, const Tensor& batch);

// Single-vector layer conveniences used by tests and the CLI.
Tensor additive_coupling_inverse(const Tensor& y, const CouplingMask& mask,
                                 const Conditioner& cond);
Tensor affine_coupling_inverse(const Tensor& y, const CouplingMask& mask,
                               const Conditioner& cond);

/// |flow_nll - (mean ||phi(x)-c||^2 - logdet + (d/2) ln pi)| for a
/// uniformly scaling model with base N(c, I/2). Contract: < 1e-9.
double svdd_equivalence_gap(const FlowModel& model, const Tensor& batch);

/// LU layer with u_i ~ BiLogNormal(0, sigma0^2) on the diagonal and zero
/// elsewhere; ln|det| is then N(0, d * sigma0^2) distributed.
LULayerParams sample_lu_prior(std::size_t d, double sigma0, RngStream& stream);

} // namespace usflab
