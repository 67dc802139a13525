#pragma once

#include <vector>

#include "usflab/autodiff.hpp"
#include "usflab/rng.hpp"
#include "usflab/tensor.hpp"

namespace usflab {

/// Bias-free encoder with a fixed non-trainable center. Activations are
/// leaky ReLU, which is unbounded and positively homogeneous.
struct SvddModel {
    std::vector<ParamNode> weights; // layer l maps [widths[l+1], widths[l]]
    std::vector<std::size_t> widths;
    Tensor center;      // fixed after initialization, never zero
    double lambda = 1e-6;
    double leak = 0.1;

    /// Widths follow the decreasing schedule [d, d], [d, 2d, d], ...,
    /// [d, 16d, 8d, 4d, 2d, d] selected by depth in 2..6.
    static std::vector<std::size_t> schedule(std::size_t d, std::size_t depth);
    static SvddModel make(std::size_t d, std::size_t depth, double lambda,
                          RngStream& stream);

    ad::Var encode(ad::Tape& tape, ad::Var x) const; // [n,d] -> [n,latent]
    Tensor encode_eval(const Tensor& batch) const;

    std::vector<ParamNode*> parameters();
};

/// Mean squared center distance plus (lambda/2) * sum of squared weights.
ad::Var svdd_loss(ad::Tape& tape, const SvddModel& model, ad::Var batch);
double svdd_loss_value(const SvddModel& model, const Tensor& batch);

/// Squared latent distance to the center; the anomaly score.
double svdd_score(const SvddModel& model, const Tensor& x);

/// Mean of the encoded training data, shifted by +0.1 per coordinate when
/// its norm falls below 0.1 (collapse guard).
Tensor init_center(const SvddModel& model, const Tensor& data);

/// Radial map x -> x / (alpha ||x||^2); norm 1/(alpha ||x||), F(0) = 0.
/// Inverts the density ordering of a standard normal around c = 0.
struct FAlphaMap {
    double alpha = 1.0;
    std::size_t dim = 3;

    FAlphaMap(double a, std::size_t d);
};

Tensor f_alpha_apply(const FAlphaMap& map, const Tensor& x);

/// Closed form 1/(alpha^2 (d-2)); throws for d <= 2 where the inverse
/// chi-squared moment diverges.
double f_alpha_expected_loss(double alpha, std::size_t d);

/// Mean of ||F_alpha(x)||^2 over n standard normal draws.
double f_alpha_monte_carlo_loss(double alpha, std::size_t d, std::size_t n,
                                RngStream& stream);

/// True iff ||F(x)|| < ||F(y)|| implies N(x) < N(y) for every pair.
bool density_inversion_check(const FAlphaMap& map,
                             const std::vector<std::pair<Tensor, Tensor>>& pairs);

} // namespace usflab
