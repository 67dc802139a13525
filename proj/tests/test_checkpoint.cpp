#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "usflab/checkpoint.hpp"
#include "usflab/distributions.hpp"

using namespace usflab;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

struct Cleanup {
    std::string path;
    ~Cleanup() { std::filesystem::remove(path); }
};

bool params_equal(std::vector<ParamNode*> a, std::vector<ParamNode*> b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i]->value.values() != b[i]->value.values()) return false;
    }
    return true;
}

} // namespace

TEST_SUITE("checkpoint") {

TEST_CASE("flow round trip is bit exact for both kinds") {
    for (FlowKind kind : {FlowKind::UniformlyScaling, FlowKind::Affine}) {
        RngStream stream(161);
        GaussianSpec base = GaussianSpec::isotropic(stream.normal_tensor({3}), 0.5);
        FlowModel m = FlowModel::make(kind, 3, 2, 2, std::move(base), 1.7, stream);
        m.randomize(0.5, stream);

        const std::string path = tmp_path("usflab-test-flow.ckpt");
        Cleanup c{path};
        save_flow_checkpoint(m, path);
        CHECK(checkpoint_kind(path) ==
              (kind == FlowKind::UniformlyScaling ? "usf" : "non-usf"));
        FlowModel back = load_flow_checkpoint(path);
        CHECK(back.kind == kind);
        CHECK(back.dim == 3);
        CHECK(back.g_clamp == 1.7);
        CHECK(params_equal(m.parameters(), back.parameters()));
        CHECK(back.base.mean.values() == m.base.mean.values());
        CHECK(back.base.iso_variance == 0.5);

        // identical behavior, not just identical bytes
        Tensor x = stream.normal_tensor({8, 3});
        CHECK(flow_nll_value(m, x) == flow_nll_value(back, x));
    }
}

TEST_CASE("flow round trip with a diagonal base") {
    RngStream stream(162);
    GaussianSpec base =
        GaussianSpec::diagonal(stream.normal_tensor({2}), Tensor::of({0.5, 2.0}));
    FlowModel m = FlowModel::make(FlowKind::UniformlyScaling, 2, 1, 2, std::move(base), 2.0,
                                  stream);
    const std::string path = tmp_path("usflab-test-diag.ckpt");
    Cleanup c{path};
    save_flow_checkpoint(m, path);
    FlowModel back = load_flow_checkpoint(path);
    CHECK(back.base.cov_kind == GaussianSpec::Cov::Diagonal);
    CHECK(back.base.diag.values() == m.base.diag.values());
}

TEST_CASE("svdd round trip") {
    RngStream stream(163);
    SvddModel m = SvddModel::make(3, 4, 1e-4, stream);
    m.center = Tensor::of({0.3, -0.2, 0.9});
    const std::string path = tmp_path("usflab-test-svdd.ckpt");
    Cleanup c{path};
    save_svdd_checkpoint(m, path);
    CHECK(checkpoint_kind(path) == "svdd");
    SvddModel back = load_svdd_checkpoint(path);
    CHECK(back.widths == m.widths);
    CHECK(back.lambda == m.lambda);
    CHECK(back.center.values() == m.center.values());
    CHECK(params_equal(m.parameters(), back.parameters()));
    Tensor x = stream.normal_tensor({4, 3});
    CHECK(svdd_loss_value(m, x) == svdd_loss_value(back, x));
}

TEST_CASE("vae round trip including the flow prior") {
    RngStream stream(164);
    VaeModel m = VaeModel::make(4, 2, 6, 2, FlowKind::Affine, 2, stream);
    RngStream noise(165);
    for (auto* p : m.parameters()) {
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] += 0.1 * noise.normal();
    }
    const std::string path = tmp_path("usflab-test-vae.ckpt");
    Cleanup c{path};
    save_vae_checkpoint(m, path);
    CHECK(checkpoint_kind(path) == "vae-flow");
    VaeModel back = load_vae_checkpoint(path);
    CHECK(back.data_dim == 4);
    CHECK(back.latent_dim == 2);
    CHECK(back.prior.kind == FlowKind::Affine);
    CHECK(params_equal(m.parameters(), back.parameters()));
    Tensor x = stream.normal_tensor({3, 4});
    CHECK(vae_anomaly_score(m, x) == vae_anomaly_score(back, x));
}

TEST_CASE("malformed files are rejected") {
    const std::string path = tmp_path("usflab-test-bad.ckpt");
    Cleanup c{path};
    {
        std::ofstream out(path);
        out << "not-a-checkpoint\n";
    }
    CHECK_THROWS_AS(load_flow_checkpoint(path), ConfigError);
    CHECK_THROWS_AS(checkpoint_kind(path), ConfigError);
    CHECK_THROWS_AS(load_flow_checkpoint(tmp_path("usflab-missing.ckpt")), ConfigError);

    // wrong kind
    RngStream stream(166);
    SvddModel m = SvddModel::make(2, 2, 1e-6, stream);
    save_svdd_checkpoint(m, path);
    CHECK_THROWS_AS(load_flow_checkpoint(path), ConfigError);
}

} // TEST_SUITE
