#include <doctest.h>

#include <cmath>

#include "testutil.hpp"
#include "usflab/distributions.hpp"
#include "usflab/hybridvae.hpp"

using namespace usflab;
using testutil::grad_mismatch;

namespace {

VaeModel small_vae(std::uint64_t seed, FlowKind prior = FlowKind::UniformlyScaling) {
    RngStream stream(seed);
    VaeModel m = VaeModel::make(/*data_dim=*/3, /*latent_dim=*/2, /*hidden_width=*/6,
                                /*depth=*/1, prior, /*prior_blocks=*/1, stream);
    return m;
}

void randomize(VaeModel& m, double scale, std::uint64_t seed) {
    RngStream stream(seed);
    for (auto* p : m.parameters()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] += scale * stream.normal();
    }
}

} // namespace

TEST_SUITE("hybridvae") {

TEST_CASE("construction contracts and initial posterior") {
    RngStream stream(121);
    CHECK_THROWS_AS(VaeModel::make(3, 3, 6, 1, FlowKind::UniformlyScaling, 1, stream),
                    ContractError);

    VaeModel m = small_vae(122);
    Tensor x = stream.normal_tensor({4, 3});
    auto [mu, var] = vae_encode(m, x);
    CHECK(mu.rows() == 4);
    CHECK(mu.cols() == 2);
    // zero-initialized heads: q(z|x) = N(0, I) for every input
    for (std::size_t i = 0; i < mu.size(); ++i) {
        CHECK(mu[i] == 0.0);
        CHECK(var[i] == 1.0);
    }
}

TEST_CASE("reparameterization") {
    Tensor mu({2, 2}, {1.0, 2.0, 3.0, 4.0});
    Tensor var({2, 2}, {4.0, 1.0, 0.25, 9.0});
    RngStream stream(123);
    Tensor z = reparam_sample(mu, var, stream);
    CHECK(z.rows() == 2);
    // z - mu scaled back by sqrt(var) must be standard-normal sized
    RngStream replay(123);
    for (std::size_t i = 0; i < z.size(); ++i) {
        CHECK(z[i] == doctest::Approx(mu[i] + std::sqrt(var[i]) * replay.normal()).epsilon(1e-14));
    }
    CHECK_THROWS_AS(reparam_sample(mu, Tensor::zeros({3}), stream), ContractError);
}

TEST_CASE("elbo matches a per-term hand computation") {
    VaeModel m = small_vae(124);
    randomize(m, 0.2, 125);
    RngStream stream(126);
    Tensor x = stream.normal_tensor({3, 3});
    std::vector<Tensor> noise = {stream.normal_tensor({3, 2})};

    ad::Tape tape;
    const double got = tape.scalar(elbo_with_noise(tape, m, tape.leaf(x), noise));

    auto [mu, var] = vae_encode(m, x);
    Tensor z = mu;
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::sqrt(var[i]) * noise[0][i];

    ad::Tape t2;
    Tensor dec = t2.value(m.decode_vars(t2, t2.leaf(z)));
    FlowEval fe = flow_forward_eval(m.prior, z);
    const double s2 = m.sigma_min * m.sigma_min;
    double expect = 0.0;
    for (std::size_t r = 0; r < 3; ++r) {
        double recon = -0.5 * 3.0 * std::log(2.0 * M_PI * s2);
        for (std::size_t j = 0; j < 3; ++j) {
            const double d = x.at(r, j) - dec.at(r, j);
            recon -= d * d / (2.0 * s2);
        }
        double logq = 0.0;
        for (std::size_t j = 0; j < 2; ++j) {
            const double d = z.at(r, j) - mu.at(r, j);
            logq += -0.5 * std::log(2.0 * M_PI * var.at(r, j)) - d * d / (2.0 * var.at(r, j));
        }
        const double prior_lp = gaussian_logpdf(fe.z.row(r), m.prior.base) + fe.logdet[r];
        expect += recon - logq + prior_lp;
    }
    expect /= 3.0;
    CHECK(got == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("elbo gradients match finite differences with fixed noise") {
    for (FlowKind prior : {FlowKind::UniformlyScaling, FlowKind::Affine}) {
        VaeModel m = small_vae(127, prior);
        randomize(m, 0.2, 128);
        RngStream stream(129);
        const Tensor x = stream.normal_tensor({4, 3});
        const std::vector<Tensor> noise = {stream.normal_tensor({4, 2})};
        auto build = [&](ad::Tape& t) {
            return t.neg(elbo_with_noise(t, m, t.leaf(x), noise));
        };
        CHECK(grad_mismatch(build, m.parameters()) < 1e-5);
    }
}

TEST_CASE("anomaly score decomposes into latent nll and reconstruction") {
    VaeModel m = small_vae(130);
    randomize(m, 0.2, 131);
    RngStream stream(132);
    Tensor x = stream.normal_tensor({5, 3});
    const double score = vae_anomaly_score(m, x);

    auto [mu, var] = vae_encode(m, x);
    (void)var;
    FlowEval fe = flow_forward_eval(m.prior, mu);
    ad::Tape t;
    Tensor dec = t.value(m.decode_vars(t, t.leaf(mu)));
    double expect = 0.0;
    for (std::size_t r = 0; r < 5; ++r) {
        expect -= gaussian_logpdf(fe.z.row(r), m.prior.base) + fe.logdet[r];
        for (std::size_t j = 0; j < 3; ++j) {
            const double d = x.at(r, j) - dec.at(r, j);
            expect += m.recon_weight * d * d;
        }
    }
    CHECK(score == doctest::Approx(expect / 5.0).epsilon(1e-12));
}

TEST_CASE("elbo error provenance names the failing term") {
    VaeModel m = small_vae(133);
    // an absurd decoder weight forces an overflow in the reconstruction term
    m.dec_out.weight.value.fill(1e200);
    m.dec_out.bias.value.fill(1e308);
    RngStream stream(134);
    Tensor x = stream.normal_tensor({2, 3});
    std::vector<Tensor> noise = {stream.normal_tensor({2, 2})};
    ad::Tape tape;
    try {
        (void)elbo_with_noise(tape, m, tape.leaf(x), noise);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(e.where().find("elbo") != std::string::npos);
    }
}

TEST_CASE("stochastic elbo averages over samples deterministically by seed") {
    VaeModel m = small_vae(135);
    randomize(m, 0.2, 136);
    RngStream data(137);
    Tensor x = data.normal_tensor({4, 3});
    RngStream s1(7), s2(7);
    CHECK(elbo_value(m, x, s1, 3) == elbo_value(m, x, s2, 3));
}

} // TEST_SUITE
