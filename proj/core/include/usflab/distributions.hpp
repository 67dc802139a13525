#pragma once

#include <vector>

#include "usflab/rng.hpp"
#include "usflab/tensor.hpp"

namespace usflab {

/// Gaussian with one of three covariance parameterizations.
struct GaussianSpec {
    enum class Cov { Isotropic, Diagonal, Full };

    Tensor mean;              // [d]
    Cov cov_kind = Cov::Isotropic;
    double iso_variance = 1.0;
    Tensor diag;              // [d], Cov::Diagonal
    Tensor full;              // [d,d], Cov::Full

    static GaussianSpec isotropic(Tensor mean, double variance);
    static GaussianSpec diagonal(Tensor mean, Tensor variances);
    static GaussianSpec full_cov(Tensor mean, Tensor covariance);

    std::size_t dim() const { return mean.size(); }
};

struct GaussianMixtureSpec {
    std::vector<GaussianSpec> components;
    std::vector<double> weights;

    std::size_t dim() const;
    void validate() const; // weights sum to 1 within 1e-12, >=1 component
};

/// Symmetric distribution on R\{0} whose absolute value is log-normal.
struct BiLogNormalSpec {
    double mu = 0.0;
    double sigma2 = 1.0;
};

double gaussian_logpdf(const Tensor& x, const GaussianSpec& spec);
Tensor gaussian_sample(const GaussianSpec& spec, RngStream& stream);

/// Log-sum-exp over components with max subtraction.
double gm_logpdf(const Tensor& x, const GaussianMixtureSpec& spec);

/// n samples as rows of an [n, d] matrix, component chosen by weight.
Tensor gm_sample(const GaussianMixtureSpec& spec, std::size_t n, RngStream& stream);

/// Throws Error for x == 0 where the density is undefined.
double bilognormal_logpdf(double x, const BiLogNormalSpec& spec);
double bilognormal_sample(const BiLogNormalSpec& spec, RngStream& stream);

} // namespace usflab
