#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "usflab/checkpoint.hpp"
#include "usflab/experiment.hpp"
#include "usflab/rankcorr.hpp"

namespace {

using namespace usflab;

constexpr int kExitConfig = 2;
constexpr int kExitTraining = 3;
constexpr int kExitInvariant = 4;

struct CommonFlags {
    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    std::string model_name;
    std::size_t dim = 0;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "Configuration file");
    cmd->add_option("--seed", f.seed, "Master seed")->each([&](const std::string&) {
        f.seed_set = true;
    });
    cmd->add_option("--out", f.out_dir, "Output directory");
    cmd->add_option("--model", f.model_name, "Model kind")
        ->check(CLI::IsMember({"usf", "non-usf", "svdd", "vae-usf", "vae-non-usf"}));
    cmd->add_option("--dim", f.dim, "Data dimension");
}

ExperimentConfig resolve_config(const CommonFlags& f) {
    ExperimentConfig cfg;
    if (!f.config_path.empty()) {
        cfg = ExperimentConfig::from_config(ConfigFile::parse_file(f.config_path));
    }
    if (f.seed_set) cfg.seed = f.seed;
    if (!f.out_dir.empty()) cfg.out_dir = f.out_dir;
    if (!f.model_name.empty()) cfg.model = parse_model_kind(f.model_name);
    if (f.dim != 0) cfg.dim = f.dim;
    return cfg;
}

void print_record(const TrainRecord& r) {
    if (r.failed) {
        std::cout << "training failed: " << r.failure_reason << "\n";
        return;
    }
    std::cout << "best epoch " << r.best_epoch << ", best val loss " << r.best_val_loss
              << ", wall time " << r.wall_time_seconds << "s\n";
}

int cmd_gm_experiment(const CommonFlags& f) {
    ExperimentConfig cfg = resolve_config(f);
    ExperimentResult res = run_experiment(cfg);
    std::cout << "sweep: " << res.sweep.settings.size() << " trials, "
              << res.sweep.failed_count << " failed, best trial " << res.sweep.best_trial
              << "\n";
    print_record(res.final_record);
    std::cout << "spearman(true, -latent norm) = " << res.report.rho_norm << "\n"
              << "kendall(true, -latent norm)  = " << res.report.tau_norm << "\n"
              << "spearman(true, estimate)     = " << res.report.rho_score << "\n"
              << "kendall(true, estimate)      = " << res.report.tau_score << "\n"
              << "artifacts in " << cfg.out_dir << "\n";
    return 0;
}

int cmd_train(const CommonFlags& f) {
    ExperimentConfig cfg = resolve_config(f);
    cfg.validate();
    const GaussianMixtureSpec gm = make_gm_spec(cfg.dim);
    RngStream master(cfg.seed);
    RngStream ts = master.derive(1);
    RngStream vs = master.derive(2);
    const Tensor train_data = gm_sample(gm, cfg.train_samples, ts);
    const Tensor val_data = gm_sample(gm, cfg.val_samples, vs);

    TrialSetting setting;
    setting.coupling_blocks = 4;
    setting.cond_depth = 2;
    setting.svdd_depth = 3;
    setting.batch_size = 128;
    setting.learning_rate = 1e-3;
    setting.seed = master.derive(4).seed();

    TrainedModel tm = train_model(cfg, setting, train_data, val_data);
    print_record(tm.record);
    if (tm.record.failed) return kExitTraining;

    std::filesystem::create_directories(cfg.out_dir);
    const std::string path = (std::filesystem::path(cfg.out_dir) / "model.ckpt").string();
    if (tm.flow) {
        save_flow_checkpoint(*tm.flow, path);
    } else if (tm.svdd) {
        save_svdd_checkpoint(*tm.svdd, path);
    } else {
        save_vae_checkpoint(*tm.vae, path);
    }
    std::cout << "checkpoint written to " << path << "\n";
    return 0;
}

struct LoadedModel {
    std::string kind;
    std::optional<FlowModel> flow;
    std::optional<SvddModel> svdd;
    std::optional<VaeModel> vae;

    std::size_t data_dim() const {
        if (flow) return flow->dim;
        if (svdd) return svdd->widths.front();
        return vae->data_dim;
    }
};

LoadedModel load_any(const std::string& path) {
    LoadedModel m;
    m.kind = checkpoint_kind(path);
    if (m.kind == "usf" || m.kind == "non-usf") {
        m.flow = load_flow_checkpoint(path);
    } else if (m.kind == "svdd") {
        m.svdd = load_svdd_checkpoint(path);
    } else if (m.kind == "vae-flow") {
        m.vae = load_vae_checkpoint(path);
    } else {
        throw ConfigError("unknown checkpoint kind " + m.kind);
    }
    return m;
}

int cmd_eval(const std::string& ckpt, std::uint64_t seed, std::size_t n) {
    LoadedModel m = load_any(ckpt);
    const GaussianMixtureSpec gm = make_gm_spec(m.data_dim());
    RngStream stream(seed);
    RngStream test_stream = stream.derive(3);
    const Tensor test = gm_sample(gm, n, test_stream);
    if (m.flow) {
        std::cout << "mean NLL: " << flow_nll_value(*m.flow, test) << "\n";
    } else if (m.svdd) {
        std::cout << "mean squared center distance: " << svdd_loss_value(*m.svdd, test)
                  << "\n";
    } else {
        std::cout << "mean anomaly score: " << vae_anomaly_score(*m.vae, test) << "\n";
    }
    return 0;
}

int cmd_alignment(const std::string& ckpt, std::uint64_t seed, std::size_t n,
                  const std::string& out_dir) {
    LoadedModel m = load_any(ckpt);
    const GaussianMixtureSpec gm = make_gm_spec(m.data_dim());
    RngStream stream(seed);
    RngStream test_stream = stream.derive(3);
    const Tensor test = gm_sample(gm, n, test_stream);
    AlignmentReport rep;
    if (m.flow) {
        rep = alignment_report(*m.flow, test, gm);
    } else if (m.svdd) {
        rep = alignment_report(*m.svdd, test, gm);
    } else {
        rep = alignment_report(*m.vae, test, gm);
    }
    std::cout << "spearman(true, -latent norm) = " << rep.rho_norm << "\n"
              << "kendall(true, -latent norm)  = " << rep.tau_norm << "\n"
              << "spearman(true, estimate)     = " << rep.rho_score << "\n"
              << "kendall(true, estimate)      = " << rep.tau_score << "\n";
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        const std::string path =
            (std::filesystem::path(out_dir) / "alignment.csv").string();
        emit_scatter_data(rep, path);
        std::cout << "scatter data written to " << path << "\n";
    }
    return 0;
}

// ---- invariant suite -------------------------------------------------

double logdet_stdev(const FlowModel& model, const Tensor& batch) {
    const FlowEval fe = flow_forward_eval(model, batch);
    double mean = 0.0;
    for (std::size_t i = 0; i < fe.logdet.size(); ++i) mean += fe.logdet[i];
    mean /= static_cast<double>(fe.logdet.size());
    double var = 0.0;
    for (std::size_t i = 0; i < fe.logdet.size(); ++i) {
        const double d = fe.logdet[i] - mean;
        var += d * d;
    }
    return std::sqrt(var / static_cast<double>(fe.logdet.size()));
}

FlowModel random_flow(FlowKind kind, std::size_t d, double base_var, RngStream& stream) {
    GaussianSpec base = GaussianSpec::isotropic(stream.normal_tensor({d}), base_var);
    FlowModel m = FlowModel::make(kind, d, 3, 2, std::move(base), 2.0, stream);
    m.randomize(0.4, stream);
    return m;
}

bool check_constant_logdet(RngStream& stream) {
    for (std::size_t d : {2ul, 8ul}) {
        for (int rep = 0; rep < 3; ++rep) {
            FlowModel m = random_flow(FlowKind::UniformlyScaling, d, 1.0, stream);
            if (logdet_stdev(m, stream.normal_tensor({200, d})) >= 1e-9) return false;
        }
    }
    return true;
}

bool check_svdd_equivalence(RngStream& stream) {
    for (std::size_t d : {2ul, 8ul}) {
        for (int rep = 0; rep < 5; ++rep) {
            FlowModel m = random_flow(FlowKind::UniformlyScaling, d, 0.5, stream);
            if (svdd_equivalence_gap(m, stream.normal_tensor({50, d})) >= 1e-9) return false;
        }
    }
    return true;
}

bool check_inverse_roundtrip(RngStream& stream) {
    for (FlowKind kind : {FlowKind::UniformlyScaling, FlowKind::Affine}) {
        FlowModel m = random_flow(kind, 3, 1.0, stream);
        const Tensor x = stream.normal_tensor({20, 3});
        const Tensor back = flow_inverse(m, flow_forward_eval(m, x).z);
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (std::abs(back[i] - x[i]) >= 1e-6) return false;
        }
    }
    return true;
}

bool check_det_prior_law(RngStream& stream) {
    const std::size_t d = 16, n = 20000;
    const double sigma0 = 0.25;
    const double var_target = static_cast<double>(d) * sigma0 * sigma0;
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double ld = sample_lu_prior(d, sigma0, stream).logdet();
        sum += ld;
        sumsq += ld * ld;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double mean_tol = 4.0 * std::sqrt(var_target / n);
    const double var_tol = 4.0 * var_target * std::sqrt(2.0 / (n - 1.0));
    return std::abs(mean) < mean_tol && std::abs(var - var_target) < var_tol;
}

// Definition-level oracles, deliberately distinct from the library routines.
double brute_spearman(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    auto ranks = [n](const std::vector<double>& v) {
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) {
            double less = 0.0, equal = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (v[j] < v[i]) less += 1.0;
                if (j != i && v[j] == v[i]) equal += 1.0;
            }
            r[i] = 1.0 + less + equal / 2.0;
        }
        return r;
    };
    const auto ra = ranks(a), rb = ranks(b);
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double num = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    return num / std::sqrt(va * vb);
}

double brute_kendall(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    double conc = 0.0, disc = 0.0, tie_a = 0.0, tie_b = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double da = a[i] - a[j], db = b[i] - b[j];
            if (da == 0.0 && db == 0.0) continue;
            if (da == 0.0) {
                tie_a += 1.0;
            } else if (db == 0.0) {
                tie_b += 1.0;
            } else if (da * db > 0.0) {
                conc += 1.0;
            } else {
                disc += 1.0;
            }
        }
    }
    const double n0 = 0.5 * n * (n - 1);
    double tt = 0.0, tu = 0.0; // pairs tied in a resp. b (incl. both)
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (a[i] == a[j]) tt += 1.0;
            if (b[i] == b[j]) tu += 1.0;
        }
    }
    return (conc - disc) / std::sqrt((n0 - tt) * (n0 - tu));
}

bool check_rank_oracle(RngStream& stream) {
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 2 + stream.uniform_index(7);
        std::vector<double> a(n), b(n);
        bool const_a = true, const_b = true;
        for (std::size_t i = 0; i < n; ++i) {
            a[i] = static_cast<double>(stream.uniform_index(4)); // ties likely
            b[i] = static_cast<double>(stream.uniform_index(4));
            if (a[i] != a[0]) const_a = false;
            if (b[i] != b[0]) const_b = false;
        }
        if (const_a || const_b) continue;
        if (std::abs(spearman_rho(a, b) - brute_spearman(a, b)) > 1e-12) return false;
        if (std::abs(kendall_tau(a, b) - brute_kendall(a, b)) > 1e-12) return false;
    }
    return true;
}

bool check_gm_spec() {
    for (std::size_t d : {2ul, 8ul, 32ul, 128ul}) {
        const GaussianMixtureSpec gm = make_gm_spec(d);
        double det = 1.0;
        for (std::size_t i = 0; i < d; ++i) {
            if (gm.components[0].mean[i] != 1.0 || gm.components[1].mean[i] != -1.0) {
                return false;
            }
            det *= gm.components[1].diag[i];
        }
        if (std::abs(det / std::pow(2.5, d / 2.0) - 1.0) > 1e-12) return false;
    }
    return true;
}

bool check_falpha_inversion(RngStream& stream) {
    for (std::size_t d : {3ul, 8ul}) {
        FAlphaMap map(1.0, d);
        std::vector<std::pair<Tensor, Tensor>> pairs;
        pairs.reserve(10000);
        for (int i = 0; i < 10000; ++i) {
            pairs.emplace_back(stream.normal_tensor({d}), stream.normal_tensor({d}));
        }
        if (!density_inversion_check(map, pairs)) return false;
    }
    return true;
}

bool check_checkpoint_roundtrip(RngStream& stream) {
    FlowModel m = random_flow(FlowKind::UniformlyScaling, 4, 1.0, stream);
    const auto tmp = std::filesystem::temp_directory_path() / "usflab-check.ckpt";
    save_flow_checkpoint(m, tmp.string());
    FlowModel back = load_flow_checkpoint(tmp.string());
    std::filesystem::remove(tmp);
    auto pa = m.parameters(), pb = back.parameters();
    if (pa.size() != pb.size()) return false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        if (pa[i]->value.values() != pb[i]->value.values()) return false;
    }
    return true;
}

bool check_loaded(const std::string& path, RngStream& stream) {
    LoadedModel m = load_any(path);
    if (m.flow && m.flow->kind == FlowKind::UniformlyScaling) {
        const Tensor x = stream.normal_tensor({100, m.flow->dim});
        if (logdet_stdev(*m.flow, x) >= 1e-9) return false;
        if (!std::isfinite(flow_nll_value(*m.flow, x))) return false;
    } else if (m.flow) {
        const Tensor x = stream.normal_tensor({100, m.flow->dim});
        if (!std::isfinite(flow_nll_value(*m.flow, x))) return false;
    }
    return true;
}

int cmd_check(std::uint64_t seed, const std::string& ckpt) {
    RngStream stream(seed);
    std::vector<std::pair<std::string, std::function<bool()>>> checks = {
        {"constant-logdet (uniformly scaling)", [&] { return check_constant_logdet(stream); }},
        {"svdd objective equivalence", [&] { return check_svdd_equivalence(stream); }},
        {"flow inverse round-trip", [&] { return check_inverse_roundtrip(stream); }},
        {"determinant prior law", [&] { return check_det_prior_law(stream); }},
        {"rank correlations vs pair counting", [&] { return check_rank_oracle(stream); }},
        {"mixture benchmark parameters", [&] { return check_gm_spec(); }},
        {"radial map density inversion", [&] { return check_falpha_inversion(stream); }},
        {"checkpoint round-trip", [&] { return check_checkpoint_roundtrip(stream); }},
    };
    if (!ckpt.empty()) {
        checks.push_back({"checkpoint invariants (" + ckpt + ")",
                          [&] { return check_loaded(ckpt, stream); }});
    }
    bool all_ok = true;
    for (auto& [name, fn] : checks) {
        const bool ok = fn();
        all_ok = all_ok && ok;
        std::cout << (ok ? "ok    " : "FAIL  ") << name << "\n";
    }
    return all_ok ? 0 : kExitInvariant;
}

int cmd_falpha_demo(std::uint64_t seed, std::size_t n) {
    RngStream stream(seed);
    std::printf("%6s %4s %14s %14s %10s\n", "alpha", "d", "closed form", "monte carlo",
                "rel err");
    for (double alpha : {1.0, 2.0}) {
        for (std::size_t d : {3ul, 8ul, 32ul}) {
            const double exact = f_alpha_expected_loss(alpha, d);
            const double mc = f_alpha_monte_carlo_loss(alpha, d, n, stream);
            std::printf("%6.1f %4zu %14.8f %14.8f %9.4f%%\n", alpha, d, exact, mc,
                        100.0 * std::abs(mc / exact - 1.0));
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Uniformly scaling flow laboratory"};
    app.require_subcommand(1);

    CommonFlags gm_flags, train_flags;
    CLI::App* gm = app.add_subcommand("gm-experiment",
                                      "Run the Gaussian-mixture benchmark end to end");
    add_common(gm, gm_flags);
    CLI::App* tr = app.add_subcommand("train", "Train one model with fixed hyperparameters");
    add_common(tr, train_flags);

    std::string eval_ckpt, align_ckpt, align_out, check_ckpt;
    std::uint64_t eval_seed = 0, align_seed = 0, check_seed = 0, demo_seed = 0;
    std::size_t eval_n = 2000, align_n = 5000, demo_n = 100000;

    CLI::App* ev = app.add_subcommand("eval", "Evaluate a checkpoint on fresh mixture data");
    ev->add_option("--checkpoint", eval_ckpt, "Checkpoint path")->required();
    ev->add_option("--seed", eval_seed, "Data seed");
    ev->add_option("--samples", eval_n, "Test sample count");

    CLI::App* al = app.add_subcommand("alignment", "Alignment report for a checkpoint");
    al->add_option("--checkpoint", align_ckpt, "Checkpoint path")->required();
    al->add_option("--seed", align_seed, "Data seed");
    al->add_option("--samples", align_n, "Test sample count");
    al->add_option("--out", align_out, "Directory for the scatter CSV");

    CLI::App* ck = app.add_subcommand("check", "Run the invariant suite");
    ck->add_option("--seed", check_seed, "Suite seed");
    ck->add_option("--checkpoint", check_ckpt, "Also verify this checkpoint");

    CLI::App* fd = app.add_subcommand("falpha-demo",
                                      "Closed-form vs Monte-Carlo radial map loss");
    fd->add_option("--seed", demo_seed, "Sampling seed");
    fd->add_option("--samples", demo_n, "Monte-Carlo sample count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (gm->parsed()) return cmd_gm_experiment(gm_flags);
        if (tr->parsed()) return cmd_train(train_flags);
        if (ev->parsed()) return cmd_eval(eval_ckpt, eval_seed, eval_n);
        if (al->parsed()) return cmd_alignment(align_ckpt, align_seed, align_n, align_out);
        if (ck->parsed()) return cmd_check(check_seed, check_ckpt);
        if (fd->parsed()) return cmd_falpha_demo(demo_seed, demo_n);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ContractError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitTraining;
    }
    return 0;
}
