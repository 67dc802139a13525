#include <doctest.h>

#include <cmath>
#include <functional>

#include "usflab/distributions.hpp"

using namespace usflab;

namespace {

// Simpson's rule on [a, b].
double simpson(const std::function<double(double)>& f, double a, double b, int n) {
    if (n % 2 != 0) ++n;
    const double h = (b - a) / n;
    double s = f(a) + f(b);
    for (int i = 1; i < n; ++i) s += f(a + i * h) * (i % 2 == 1 ? 4.0 : 2.0);
    return s * h / 3.0;
}

} // namespace

TEST_SUITE("distributions") {

TEST_CASE("isotropic gaussian logpdf against a hand value") {
    // d=2, mean (1,-1), var 2, x = 0: -ln(4 pi) - 1/2
    GaussianSpec g = GaussianSpec::isotropic(Tensor::of({1.0, -1.0}), 2.0);
    const double lp = gaussian_logpdf(Tensor::of({0.0, 0.0}), g);
    CHECK(lp == doctest::Approx(-3.0310242469692907).epsilon(1e-14));
}

TEST_CASE("diagonal gaussian logpdf against a hand value") {
    // d=2, mean 0, diag (1, 4), x = (1, 2):
    //   -0.5*(2 ln 2pi + ln 4) - 0.5*(1 + 1)
    GaussianSpec g = GaussianSpec::diagonal(Tensor::zeros({2}), Tensor::of({1.0, 4.0}));
    const double expect = -0.5 * (2.0 * std::log(2.0 * M_PI) + std::log(4.0)) - 1.0;
    CHECK(gaussian_logpdf(Tensor::of({1.0, 2.0}), g) ==
          doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("full covariance logpdf against a hand value") {
    // Sigma = [[4,2],[2,3]], det 8, x - mean = (1,1):
    //   quad = (1,1) Sigma^{-1} (1,1)^T = 3/8
    GaussianSpec g = GaussianSpec::full_cov(Tensor::zeros({2}), Tensor({2, 2}, {4, 2, 2, 3}));
    CHECK(gaussian_logpdf(Tensor::of({1.0, 1.0}), g) ==
          doctest::Approx(-3.0650978372492634).epsilon(1e-13));
}

TEST_CASE("full covariance agrees with isotropic on scaled identity") {
    GaussianSpec iso = GaussianSpec::isotropic(Tensor::of({0.5, -0.5}), 2.0);
    GaussianSpec full =
        GaussianSpec::full_cov(Tensor::of({0.5, -0.5}), Tensor({2, 2}, {2, 0, 0, 2}));
    const Tensor x = Tensor::of({1.0, 2.0});
    CHECK(gaussian_logpdf(x, full) == doctest::Approx(gaussian_logpdf(x, iso)).epsilon(1e-13));
}

TEST_CASE("invalid covariances are rejected") {
    CHECK_THROWS_AS(GaussianSpec::isotropic(Tensor::zeros({2}), 0.0), ContractError);
    CHECK_THROWS_AS(GaussianSpec::diagonal(Tensor::zeros({2}), Tensor::of({1.0, -1.0})),
                    ContractError);
    CHECK_THROWS(GaussianSpec::full_cov(Tensor::zeros({2}), Tensor({2, 2}, {1, 2, 2, 1})));
}

TEST_CASE("1d gaussian density integrates to one") {
    GaussianSpec g = GaussianSpec::isotropic(Tensor::of({0.3}), 1.7);
    const double mass = simpson(
        [&](double x) { return std::exp(gaussian_logpdf(Tensor::of({x}), g)); }, -15.0, 15.0,
        2000);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("mixture logpdf equals direct log of weighted sum") {
    GaussianMixtureSpec gm;
    gm.components.push_back(GaussianSpec::isotropic(Tensor::of({1.0, 1.0}), 1.0));
    gm.components.push_back(
        GaussianSpec::diagonal(Tensor::of({-1.0, -1.0}), Tensor::of({5.0, 0.5})));
    gm.weights = {0.3, 0.7};
    gm.validate();
    const Tensor x = Tensor::of({0.2, -0.4});
    const double direct =
        std::log(0.3 * std::exp(gaussian_logpdf(x, gm.components[0])) +
                 0.7 * std::exp(gaussian_logpdf(x, gm.components[1])));
    CHECK(gm_logpdf(x, gm) == doctest::Approx(direct).epsilon(1e-13));
}

TEST_CASE("mixture weights must sum to one") {
    GaussianMixtureSpec gm;
    gm.components.push_back(GaussianSpec::isotropic(Tensor::zeros({1}), 1.0));
    gm.weights = {0.9};
    CHECK_THROWS_AS(gm.validate(), ContractError);
}

TEST_CASE("mixture sampling matches component moments") {
    GaussianMixtureSpec gm;
    gm.components.push_back(GaussianSpec::isotropic(Tensor::of({3.0}), 0.5));
    gm.components.push_back(GaussianSpec::isotropic(Tensor::of({-3.0}), 0.5));
    gm.weights = {0.5, 0.5};
    RngStream stream(31);
    const std::size_t n = 50000;
    Tensor s = gm_sample(gm, n, stream);
    CHECK(s.rows() == n);
    double mean = 0.0, pos = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean += s.at(i, 0);
        if (s.at(i, 0) > 0.0) pos += 1.0;
    }
    mean /= static_cast<double>(n);
    CHECK(std::abs(mean) < 0.06);                       // ~4 stderr of mean
    CHECK(std::abs(pos / n - 0.5) < 0.01);              // balanced components
}

TEST_CASE("bilognormal logpdf against a hand value") {
    // x = e, mu = 0, sigma^2 = 1:
    //   -ln 2 - 1 - 0.5 ln(2 pi) - 0.5
    BiLogNormalSpec b;
    const double expect = -std::log(2.0) - 1.0 - 0.5 * std::log(2.0 * M_PI) - 0.5;
    CHECK(bilognormal_logpdf(std::exp(1.0), b) == doctest::Approx(expect).epsilon(1e-14));
    // symmetric in sign
    CHECK(bilognormal_logpdf(-std::exp(1.0), b) ==
          doctest::Approx(bilognormal_logpdf(std::exp(1.0), b)).epsilon(1e-14));
}

TEST_CASE("bilognormal undefined at zero") {
    BiLogNormalSpec b;
    CHECK_THROWS_AS(bilognormal_logpdf(0.0, b), Error);
}

TEST_CASE("bilognormal density integrates to one") {
    // substitute x = e^t on the positive half; total mass is twice that
    BiLogNormalSpec b{0.2, 0.8};
    const double half = simpson(
        [&](double t) {
            const double x = std::exp(t);
            return std::exp(bilognormal_logpdf(x, b)) * x;
        },
        -12.0, 12.0, 4000);
    CHECK(2.0 * half == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("bilognormal samples match the log-domain law") {
    BiLogNormalSpec b{0.5, 0.25};
    RngStream stream(37);
    const std::size_t n = 50000;
    double mean = 0.0, var = 0.0, neg = 0.0;
    std::vector<double> logs(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = bilognormal_sample(b, stream);
        if (x < 0.0) neg += 1.0;
        logs[i] = std::log(std::abs(x));
        mean += logs[i];
    }
    mean /= static_cast<double>(n);
    for (double l : logs) var += (l - mean) * (l - mean);
    var /= static_cast<double>(n);
    CHECK(std::abs(mean - 0.5) < 4.0 * std::sqrt(0.25 / n));
    CHECK(std::abs(var - 0.25) < 4.0 * 0.25 * std::sqrt(2.0 / n));
    CHECK(std::abs(neg / n - 0.5) < 0.01);
}

TEST_CASE("gaussian sampling moments") {
    GaussianSpec g = GaussianSpec::diagonal(Tensor::of({1.0, -2.0}), Tensor::of({0.5, 2.0}));
    RngStream stream(41);
    const std::size_t n = 50000;
    double m0 = 0.0, m1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor x = gaussian_sample(g, stream);
        m0 += x[0];
        m1 += x[1];
    }
    CHECK(m0 / n == doctest::Approx(1.0).epsilon(0.02));
    CHECK(m1 / n == doctest::Approx(-2.0).epsilon(0.02));
}

} // TEST_SUITE
