#include <doctest.h>

#include <cmath>
#include <functional>

#include "testutil.hpp"
#include "usflab/distributions.hpp"
#include "usflab/flows.hpp"
#include "usflab/linalg.hpp"

using namespace usflab;
using testutil::grad_mismatch;

namespace {

FlowModel small_flow(FlowKind kind, std::size_t d, std::uint64_t seed, double base_var = 1.0) {
    RngStream stream(seed);
    GaussianSpec base = GaussianSpec::isotropic(stream.normal_tensor({d}), base_var);
    FlowModel m = FlowModel::make(kind, d, 2, 2, std::move(base), 2.0, stream);
    m.randomize(0.4, stream);
    return m;
}

Tensor map_single(const FlowModel& m, const Tensor& x) {
    Tensor batch({1, x.size()});
    for (std::size_t i = 0; i < x.size(); ++i) batch.at(0, i) = x[i];
    return flow_forward_eval(m, batch).z.row(0);
}

// Determinant by Gaussian elimination with partial pivoting; test oracle.
double brute_det(Tensor A) {
    const std::size_t d = A.rows();
    double det = 1.0;
    for (std::size_t c = 0; c < d; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < d; ++r) {
            if (std::abs(A.at(r, c)) > std::abs(A.at(piv, c))) piv = r;
        }
        if (piv != c) {
            for (std::size_t j = 0; j < d; ++j) std::swap(A.at(c, j), A.at(piv, j));
            det = -det;
        }
        det *= A.at(c, c);
        for (std::size_t r = c + 1; r < d; ++r) {
            const double f = A.at(r, c) / A.at(c, c);
            for (std::size_t j = c; j < d; ++j) A.at(r, j) -= f * A.at(c, j);
        }
    }
    return det;
}

// Central-difference Jacobian of a vector map at x.
Tensor numeric_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                        double step = 1e-6) {
    const std::size_t d = x.size();
    Tensor J({d, d});
    for (std::size_t j = 0; j < d; ++j) {
        Tensor xp = x, xm = x;
        xp[j] += step;
        xm[j] -= step;
        const Tensor fp = f(xp);
        const Tensor fm = f(xm);
        for (std::size_t i = 0; i < d; ++i) J.at(i, j) = (fp[i] - fm[i]) / (2.0 * step);
    }
    return J;
}

} // namespace

TEST_SUITE("flows") {

TEST_CASE("alternating masks and complements") {
    CouplingMask m = CouplingMask::alternating(5, /*start_with_one=*/true);
    CHECK(m.bits[0] == 1.0);
    CHECK(m.bits[1] == 0.0);
    CHECK(m.bits[4] == 1.0);
    Tensor c = m.complement();
    for (std::size_t i = 0; i < 5; ++i) CHECK(m.bits[i] + c[i] == 1.0);
}

TEST_CASE("freshly made couplings are the identity") {
    RngStream stream(51);
    Conditioner cond = Conditioner::make(4, 2, 8, /*mult_head=*/true, 2.0, stream);
    CouplingMask mask = CouplingMask::alternating(4, true);
    ad::Tape tape;
    Tensor x = stream.normal_tensor({3, 4});
    FlowVars add = additive_coupling_forward(tape, tape.leaf(x), mask, cond);
    FlowVars aff = affine_coupling_forward(tape, tape.leaf(x), mask, cond);
    for (std::size_t i = 0; i < x.size(); ++i) {
        CHECK(tape.value(add.z)[i] == doctest::Approx(x[i]).epsilon(1e-14));
        CHECK(tape.value(aff.z)[i] == doctest::Approx(x[i]).epsilon(1e-14));
    }
}

TEST_CASE("additive coupling has zero logdet and exact inverse") {
    RngStream stream(52);
    Conditioner cond = Conditioner::make(4, 2, 8, false, 2.0, stream);
    for (auto* p : cond.parameters()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = 0.3 * stream.normal();
    }
    CouplingMask mask = CouplingMask::alternating(4, false);
    ad::Tape tape;
    Tensor x = stream.normal_tensor({5, 4});
    FlowVars fw = additive_coupling_forward(tape, tape.leaf(x), mask, cond);
    for (std::size_t i = 0; i < 5; ++i) CHECK(tape.value(fw.logdet)[i] == 0.0);
    for (std::size_t r = 0; r < 5; ++r) {
        Tensor back = additive_coupling_inverse(tape.value(fw.z).row(r), mask, cond);
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(back[j] == doctest::Approx(x.at(r, j)).epsilon(1e-12));
        }
    }
}

TEST_CASE("affine coupling logdet matches a numeric Jacobian") {
    RngStream stream(53);
    Conditioner cond = Conditioner::make(3, 2, 8, true, 2.0, stream);
    for (auto* p : cond.parameters()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = 0.3 * stream.normal();
    }
    CouplingMask mask = CouplingMask::alternating(3, true);
    auto apply = [&](const Tensor& v) {
        ad::Tape t;
        Tensor batch({1, 3});
        for (std::size_t i = 0; i < 3; ++i) batch.at(0, i) = v[i];
        return t.value(affine_coupling_forward(t, t.leaf(batch), mask, cond).z).row(0);
    };
    for (int rep = 0; rep < 5; ++rep) {
        Tensor x = stream.normal_tensor({3});
        ad::Tape t;
        Tensor batch({1, 3});
        for (std::size_t i = 0; i < 3; ++i) batch.at(0, i) = x[i];
        const double logdet =
            t.value(affine_coupling_forward(t, t.leaf(batch), mask, cond).logdet)[0];
        const double num = brute_det(numeric_jacobian(apply, x));
        CHECK(std::log(std::abs(num)) == doctest::Approx(logdet).epsilon(1e-5));
        // inverse round trip
        Tensor y = apply(x);
        Tensor back = affine_coupling_inverse(y, mask, cond);
        for (std::size_t j = 0; j < 3; ++j) CHECK(back[j] == doctest::Approx(x[j]).epsilon(1e-9));
    }
}

TEST_CASE("lu layer applies L U x + b exactly") {
    RngStream stream(54);
    LULayerParams p = sample_lu_prior(4, 0.4, stream);
    for (std::size_t i = 0; i < p.lower_packed.value.size(); ++i) {
        p.lower_packed.value[i] = 0.5 * stream.normal();
        p.upper_packed.value[i] = 0.5 * stream.normal();
    }
    for (std::size_t i = 0; i < 4; ++i) p.bias.value[i] = stream.normal();

    Tensor x = stream.normal_tensor({4});
    Tensor expect = matvec(matmul(p.lower_matrix(), p.upper_matrix()), x);
    for (std::size_t i = 0; i < 4; ++i) expect[i] += p.bias.value[i];

    ad::Tape tape;
    Tensor batch({1, 4});
    for (std::size_t i = 0; i < 4; ++i) batch.at(0, i) = x[i];
    FlowVars fw = lu_forward(tape, tape.leaf(batch), p);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(tape.value(fw.z).at(0, i) == doctest::Approx(expect[i]).epsilon(1e-12));
    }

    // logdet is the sum of raw diagonal entries and matches the matrix
    double raw_sum = 0.0, diag_log = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        raw_sum += p.diag_raw.value[i];
        diag_log += std::log(std::abs(p.diag_values()[i]));
    }
    CHECK(tape.value(fw.logdet)[0] == doctest::Approx(raw_sum).epsilon(1e-13));
    CHECK(raw_sum == doctest::Approx(diag_log).epsilon(1e-12));
    CHECK(p.logdet() == doctest::Approx(raw_sum).epsilon(1e-14));

    // inverse undoes forward
    FlowVars inv = lu_inverse(tape, fw.z, p);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(tape.value(inv.z).at(0, i) == doctest::Approx(x[i]).epsilon(1e-10));
    }
    CHECK(tape.value(inv.logdet)[0] == doctest::Approx(-raw_sum).epsilon(1e-13));
}

TEST_CASE("uniformly scaling flows have input-independent logdet") {
    for (std::uint64_t seed : {61ull, 62ull, 63ull}) {
        FlowModel m = small_flow(FlowKind::UniformlyScaling, 4, seed);
        RngStream stream(seed + 100);
        FlowEval fe = flow_forward_eval(m, stream.normal_tensor({200, 4}));
        for (std::size_t i = 1; i < 200; ++i) {
            CHECK(std::abs(fe.logdet[i] - fe.logdet[0]) < 1e-12);
        }
        // and it equals the final affine layer's diagonal sum
        CHECK(fe.logdet[0] == doctest::Approx(m.final_affine.logdet()).epsilon(1e-12));
    }
}

TEST_CASE("full flow logdet matches a numeric Jacobian for both kinds") {
    for (FlowKind kind : {FlowKind::UniformlyScaling, FlowKind::Affine}) {
        FlowModel m = small_flow(kind, 3, 71);
        RngStream stream(72);
        for (int rep = 0; rep < 3; ++rep) {
            Tensor x = stream.normal_tensor({3});
            Tensor batch({1, 3});
            for (std::size_t i = 0; i < 3; ++i) batch.at(0, i) = x[i];
            const double logdet = flow_forward_eval(m, batch).logdet[0];
            const double num =
                brute_det(numeric_jacobian([&](const Tensor& v) { return map_single(m, v); }, x));
            CHECK(std::log(std::abs(num)) == doctest::Approx(logdet).epsilon(1e-4));
        }
    }
}

TEST_CASE("flow inverse round trip") {
    for (FlowKind kind : {FlowKind::UniformlyScaling, FlowKind::Affine}) {
        FlowModel m = small_flow(kind, 5, 81);
        RngStream stream(82);
        Tensor x = stream.normal_tensor({20, 5});
        Tensor back = flow_inverse(m, flow_forward_eval(m, x).z);
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(std::abs(back[i] - x[i]) < 1e-8);
        }
    }
}

TEST_CASE("base logpdf rows agree with the scalar density") {
    RngStream stream(91);
    for (const GaussianSpec& base :
         {GaussianSpec::isotropic(stream.normal_tensor({3}), 0.7),
          GaussianSpec::diagonal(stream.normal_tensor({3}), Tensor::of({0.5, 1.5, 2.5}))}) {
        Tensor z = stream.normal_tensor({6, 3});
        ad::Tape tape;
        Tensor lp = tape.value(base_logpdf_rows(tape, base, tape.leaf(z)));
        for (std::size_t r = 0; r < 6; ++r) {
            CHECK(lp[r] == doctest::Approx(gaussian_logpdf(z.row(r), base)).epsilon(1e-12));
        }
    }
}

TEST_CASE("flow nll equals the change-of-variables formula") {
    FlowModel m = small_flow(FlowKind::Affine, 3, 95);
    RngStream stream(96);
    Tensor x = stream.normal_tensor({10, 3});
    FlowEval fe = flow_forward_eval(m, x);
    double acc = 0.0;
    for (std::size_t r = 0; r < 10; ++r) {
        acc += gaussian_logpdf(fe.z.row(r), m.base) + fe.logdet[r];
    }
    CHECK(flow_nll_value(m, x) == doctest::Approx(-acc / 10.0).epsilon(1e-12));
}

TEST_CASE("nll gradients match finite differences for both kinds") {
    RngStream data_stream(97);
    const Tensor x = data_stream.normal_tensor({6, 3});
    for (FlowKind kind : {FlowKind::UniformlyScaling, FlowKind::Affine}) {
        FlowModel m = small_flow(kind, 3, 98);
        auto build = [&](ad::Tape& t) { return flow_nll(t, m, t.leaf(x)); };
        CHECK(grad_mismatch(build, m.parameters()) < 1e-6);
    }
}

TEST_CASE("det prior penalty is the negated bilognormal log density") {
    FlowModel m = small_flow(FlowKind::UniformlyScaling, 3, 99);
    const double sigma0 = 0.7;
    double expect = 0.0;
    BiLogNormalSpec prior{0.0, sigma0 * sigma0};
    auto add_layer = [&](const LULayerParams& p) {
        const Tensor u = p.diag_values();
        for (std::size_t i = 0; i < u.size(); ++i) expect -= bilognormal_logpdf(u[i], prior);
    };
    for (const auto& blk : m.blocks) add_layer(blk.affine);
    add_layer(m.final_affine);
    ad::Tape tape;
    CHECK(tape.scalar(det_prior_penalty(tape, m, sigma0)) ==
          doctest::Approx(expect).epsilon(1e-11));

    auto build = [&](ad::Tape& t) { return det_prior_penalty(t, m, sigma0); };
    CHECK(grad_mismatch(build, m.parameters()) < 1e-7);
}

TEST_CASE("svdd equivalence gap is tiny for valid models and guarded otherwise") {
    RngStream stream(101);
    GaussianSpec base = GaussianSpec::isotropic(stream.normal_tensor({4}), 0.5);
    FlowModel m = FlowModel::make(FlowKind::UniformlyScaling, 4, 2, 2, std::move(base), 2.0,
                                  stream);
    m.randomize(0.4, stream);
    CHECK(svdd_equivalence_gap(m, stream.normal_tensor({30, 4})) < 1e-12);

    FlowModel wrong_var = small_flow(FlowKind::UniformlyScaling, 4, 102, 1.0);
    CHECK_THROWS_AS(svdd_equivalence_gap(wrong_var, stream.normal_tensor({5, 4})),
                    ContractError);
    FlowModel affine = small_flow(FlowKind::Affine, 4, 103, 0.5);
    CHECK_THROWS_AS(svdd_equivalence_gap(affine, stream.normal_tensor({5, 4})), ContractError);
}

TEST_CASE("prior-sampled lu layers follow the bilognormal law") {
    RngStream stream(104);
    const std::size_t d = 8, n = 20000;
    const double sigma0 = 0.5;
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ld = sample_lu_prior(d, sigma0, stream).logdet();
        sum += ld;
        sumsq += ld * ld;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double target = d * sigma0 * sigma0;
    CHECK(std::abs(mean) < 4.0 * std::sqrt(target / n));
    CHECK(std::abs(var - target) < 4.0 * target * std::sqrt(2.0 / (n - 1.0)));
}

TEST_CASE("construction contracts") {
    RngStream stream(105);
    GaussianSpec base = GaussianSpec::isotropic(Tensor::zeros({3}), 1.0);
    CHECK_THROWS_AS(FlowModel::make(FlowKind::Affine, 0, 2, 2, base, 2.0, stream),
                    ContractError);
    CHECK_THROWS_AS(FlowModel::make(FlowKind::Affine, 3, 0, 2, base, 2.0, stream),
                    ContractError);
    // dimension mismatch between input and model
    FlowModel m = small_flow(FlowKind::Affine, 3, 106);
    CHECK_THROWS_AS(flow_forward_eval(m, stream.normal_tensor({2, 4})), ContractError);
}

} // TEST_SUITE
