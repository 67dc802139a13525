#include "usflab/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "usflab/linalg.hpp"

namespace usflab {

namespace {
constexpr double kLn2Pi = 1.8378770664093454835606594728112;
}

GaussianSpec GaussianSpec::isotropic(Tensor mean, double variance) {
    if (variance <= 0.0) throw ContractError("GaussianSpec: variance must be positive");
    GaussianSpec s;
    s.mean = std::move(mean);
    s.cov_kind = Cov::Isotropic;
    s.iso_variance = variance;
    return s;
}

GaussianSpec GaussianSpec::diagonal(Tensor mean, Tensor variances) {
    if (mean.size() != variances.size()) {
        throw ContractError("GaussianSpec: mean/variance dimension mismatch");
    }
    for (std::size_t i = 0; i < variances.size(); ++i) {
        if (variances[i] <= 0.0) throw ContractError("GaussianSpec: variances must be positive");
    }
    GaussianSpec s;
    s.mean = std::move(mean);
    s.cov_kind = Cov::Diagonal;
    s.diag = std::move(variances);
    return s;
}

GaussianSpec GaussianSpec::full_cov(Tensor mean, Tensor covariance) {
    if (covariance.rank() != 2 || covariance.rows() != mean.size() ||
        covariance.cols() != mean.size()) {
        throw ContractError("GaussianSpec: covariance shape mismatch");
    }
    cholesky(covariance); // reject non-PD matrices up front
    GaussianSpec s;
    s.mean = std::move(mean);
    s.cov_kind = Cov::Full;
    s.full = std::move(covariance);
    return s;
}

std::size_t GaussianMixtureSpec::dim() const {
    if (components.empty()) throw ContractError("GaussianMixtureSpec: no components");
    return components.front().dim();
}

void GaussianMixtureSpec::validate() const {
    if (components.empty()) throw ContractError("GaussianMixtureSpec: no components");
    if (components.size() != weights.size()) {
        throw ContractError("GaussianMixtureSpec: component/weight count mismatch");
    }
    double s = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ContractError("GaussianMixtureSpec: negative weight");
        s += w;
    }
    if (std::abs(s - 1.0) > 1e-12) {
        throw ContractError("GaussianMixtureSpec: weights must sum to 1");
    }
    const std::size_t d = components.front().dim();
    for (const auto& c : components) {
        if (c.dim() != d) throw ContractError("GaussianMixtureSpec: inconsistent dimensions");
    }
}

double gaussian_logpdf(const Tensor& x, const GaussianSpec& spec) {
    const std::size_t d = spec.dim();
    if (x.size() != d) throw ContractError("gaussian_logpdf: dimension mismatch");

    switch (spec.cov_kind) {
    case GaussianSpec::Cov::Isotropic: {
        double q = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double r = x[i] - spec.mean[i];
            q += r * r;
        }
        return -0.5 * static_cast<double>(d) * (kLn2Pi + std::log(spec.iso_variance)) -
               q / (2.0 * spec.iso_variance);
    }
    case GaussianSpec::Cov::Diagonal: {
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            const double r = x[i] - spec.mean[i];
            acc += -0.5 * (kLn2Pi + std::log(spec.diag[i])) - r * r / (2.0 * spec.diag[i]);
        }
        return acc;
    }
    case GaussianSpec::Cov::Full: {
        const Tensor L = cholesky(spec.full);
        Tensor r({d});
        for (std::size_t i = 0; i < d; ++i) r[i] = x[i] - spec.mean[i];
        const Tensor y = triangular_solve(L, r, /*lower=*/true, /*unit_diag=*/false);
        double q = 0.0, halflogdet = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            q += y[i] * y[i];
            halflogdet += std::log(L.at(i, i));
        }
        return -0.5 * static_cast<double>(d) * kLn2Pi - halflogdet - 0.5 * q;
    }
    }
    throw ContractError("gaussian_logpdf: unknown covariance kind");
}

Tensor gaussian_sample(const GaussianSpec& spec, RngStream& stream) {
    const std::size_t d = spec.dim();
    Tensor eps = stream.normal_tensor({d});
    Tensor out({d});
    switch (spec.cov_kind) {
    case GaussianSpec::Cov::Isotropic: {
        const double s = std::sqrt(spec.iso_variance);
        for (std::size_t i = 0; i < d; ++i) out[i] = spec.mean[i] + s * eps[i];
        return out;
    }
    case GaussianSpec::Cov::Diagonal:
        for (std::size_t i = 0; i < d; ++i) {
            out[i] = spec.mean[i] + std::sqrt(spec.diag[i]) * eps[i];
        }
        return out;
    case GaussianSpec::Cov::Full: {
        const Tensor L = cholesky(spec.full);
        Tensor v = matvec(L, eps);
        for (std::size_t i = 0; i < d; ++i) out[i] = spec.mean[i] + v[i];
        return out;
    }
    }
    throw ContractError("gaussian_sample: unknown covariance kind");
}

double gm_logpdf(const Tensor& x, const GaussianMixtureSpec& spec) {
    spec.validate();
    double maxlog = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(spec.components.size());
    for (std::size_t k = 0; k < spec.components.size(); ++k) {
        if (spec.weights[k] == 0.0) {
            logs[k] = -std::numeric_limits<double>::infinity();
            continue;
        }
        logs[k] = std::log(spec.weights[k]) + gaussian_logpdf(x, spec.components[k]);
        maxlog = std::max(maxlog, logs[k]);
    }
    double s = 0.0;
    for (double l : logs) s += std::exp(l - maxlog);
    return maxlog + std::log(s);
}

Tensor gm_sample(const GaussianMixtureSpec& spec, std::size_t n, RngStream& stream) {
    spec.validate();
    if (n == 0) throw ContractError("gm_sample: n must be positive");
    const std::size_t d = spec.dim();
    Tensor out({n, d});
    for (std::size_t r = 0; r < n; ++r) {
        const double u = stream.uniform01();
        double acc = 0.0;
        std::size_t k = spec.components.size() - 1;
        for (std::size_t j = 0; j < spec.components.size(); ++j) {
            acc += spec.weights[j];
            if (u < acc) {
                k = j;
                break;
            }
        }
        const Tensor s = gaussian_sample(spec.components[k], stream);
        for (std::size_t j = 0; j < d; ++j) out.at(r, j) = s[j];
    }
    return out;
}

double bilognormal_logpdf(double x, const BiLogNormalSpec& spec) {
    if (spec.sigma2 <= 0.0) throw ContractError("bilognormal_logpdf: sigma2 must be positive");
    if (x == 0.0) throw Error("bilognormal_logpdf: density undefined at 0");
    const double a = std::abs(x);
    const double lx = std::log(a);
    const double r = lx - spec.mu;
    // ln(1/2) + LogNormal(|x|) log-density
    return -std::log(2.0) - lx - 0.5 * std::log(2.0 * 3.14159265358979323846 * spec.sigma2) -
           r * r / (2.0 * spec.sigma2);
}

double bilognormal_sample(const BiLogNormalSpec& spec, RngStream& stream) {
    if (spec.sigma2 <= 0.0) throw ContractError("bilognormal_sample: sigma2 must be positive");
    const double sign = stream.uniform01() < 0.5 ? -1.0 : 1.0;
    return sign * std::exp(spec.mu + std::sqrt(spec.sigma2) * stream.normal());
}

} // namespace usflab
