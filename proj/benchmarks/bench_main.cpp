#include <benchmark/benchmark.h>

#include "usflab/experiment.hpp"
#include "usflab/flows.hpp"
#include "usflab/oneclass.hpp"
#include "usflab/rankcorr.hpp"
#include "usflab/training.hpp"

using namespace usflab;

namespace {

FlowModel make_flow(FlowKind kind, std::size_t d, std::size_t blocks) {
    RngStream stream(7);
    GaussianSpec base = GaussianSpec::isotropic(Tensor::zeros({d}), 1.0);
    FlowModel m = FlowModel::make(kind, d, blocks, 2, std::move(base), 2.0, stream);
    m.randomize(0.2, stream);
    return m;
}

void bm_flow_forward(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    FlowModel m = make_flow(FlowKind::UniformlyScaling, d, 4);
    RngStream stream(8);
    const Tensor batch = stream.normal_tensor({128, d});
    for (auto _ : state) {
        benchmark::DoNotOptimize(flow_forward_eval(m, batch));
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * 128);
}
BENCHMARK(bm_flow_forward)->Arg(2)->Arg(8)->Arg(32)->Arg(128);

void bm_flow_nll_backward(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    FlowModel m = make_flow(FlowKind::Affine, d, 4);
    RngStream stream(9);
    const Tensor batch = stream.normal_tensor({128, d});
    Trainable t = make_flow_trainable(m, ObjectiveKind::FlowMle, 1.0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(t.loss(batch, true));
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * 128);
}
BENCHMARK(bm_flow_nll_backward)->Arg(2)->Arg(8)->Arg(32);

void bm_flow_inverse(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    FlowModel m = make_flow(FlowKind::Affine, d, 4);
    RngStream stream(10);
    const Tensor z = flow_forward_eval(m, stream.normal_tensor({128, d})).z;
    for (auto _ : state) {
        benchmark::DoNotOptimize(flow_inverse(m, z));
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * 128);
}
BENCHMARK(bm_flow_inverse)->Arg(2)->Arg(8)->Arg(32);

void bm_svdd_loss(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    RngStream stream(11);
    SvddModel m = SvddModel::make(d, 4, 1e-6, stream);
    m.center = Tensor::full({d}, 0.5);
    const Tensor batch = stream.normal_tensor({128, d});
    for (auto _ : state) {
        benchmark::DoNotOptimize(svdd_loss_value(m, batch));
    }
    state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * 128);
}
BENCHMARK(bm_svdd_loss)->Arg(2)->Arg(32);

void bm_gm_logpdf(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    const GaussianMixtureSpec gm = make_gm_spec(d);
    RngStream stream(12);
    const Tensor x = stream.normal_tensor({d});
    for (auto _ : state) {
        benchmark::DoNotOptimize(gm_logpdf(x, gm));
    }
}
BENCHMARK(bm_gm_logpdf)->Arg(2)->Arg(32)->Arg(128);

void bm_rank_correlations(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    RngStream stream(13);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = stream.normal();
        b[i] = a[i] + stream.normal();
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(spearman_rho(a, b));
        benchmark::DoNotOptimize(kendall_tau(a, b));
    }
}
BENCHMARK(bm_rank_correlations)->Arg(1000)->Arg(10000);

} // namespace

BENCHMARK_MAIN();
