#include "usflab/experiment.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "usflab/checkpoint.hpp"
#include "usflab/rankcorr.hpp"

namespace usflab {

namespace {

std::string fmt17(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

std::vector<double> negated(const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = -v[i];
    return out;
}

Tensor chunk_rows(const Tensor& data, std::size_t begin, std::size_t end) {
    Tensor out({end - begin, data.cols()});
    for (std::size_t r = begin; r < end; ++r) {
        for (std::size_t j = 0; j < data.cols(); ++j) out.at(r - begin, j) = data.at(r, j);
    }
    return out;
}

double row_norm(const Tensor& m, std::size_t r, const Tensor& center) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) {
        const double d = m.at(r, j) - center[j];
        s += d * d;
    }
    return std::sqrt(s);
}

/// Chunked evaluation; a failing chunk is replayed row by row so the error
/// carries the offending sample index.
void for_chunks(const Tensor& data, std::size_t chunk,
                const std::function<void(const Tensor&, std::size_t)>& eval) {
    for (std::size_t b = 0; b < data.rows(); b += chunk) {
        const std::size_t e = std::min(data.rows(), b + chunk);
        try {
            eval(chunk_rows(data, b, e), b);
        } catch (const NumericError&) {
            for (std::size_t r = b; r < e; ++r) {
                try {
                    eval(chunk_rows(data, r, r + 1), r);
                } catch (const NumericError& inner) {
                    throw NumericError("sample " + std::to_string(r) + "/" + inner.where(),
                                       inner.what());
                }
            }
            throw; // chunk failed but no single row did; keep the original
        }
    }
}

void finish_report(AlignmentReport& rep) {
    rep.rho_norm = spearman_rho(rep.true_logpdf, negated(rep.latent_norm));
    rep.tau_norm = kendall_tau(rep.true_logpdf, negated(rep.latent_norm));
    const std::vector<double> est =
        rep.score_is_logpdf ? rep.score : negated(rep.score);
    rep.rho_score = spearman_rho(rep.true_logpdf, est);
    rep.tau_score = kendall_tau(rep.true_logpdf, est);
}

std::vector<double> gm_logpdf_rows(const Tensor& data, const GaussianMixtureSpec& gm) {
    std::vector<double> lp(data.rows());
    for (std::size_t r = 0; r < data.rows(); ++r) lp[r] = gm_logpdf(data.row(r), gm);
    return lp;
}

} // namespace

ModelKind parse_model_kind(const std::string& name) {
    if (name == "usf") return ModelKind::Usf;
    if (name == "non-usf") return ModelKind::NonUsf;
    if (name == "svdd") return ModelKind::Svdd;
    if (name == "vae-usf") return ModelKind::VaeUsf;
    if (name == "vae-non-usf") return ModelKind::VaeNonUsf;
    throw ConfigError("unknown model kind '" + name + "'");
}

std::string to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::Usf: return "usf";
    case ModelKind::NonUsf: return "non-usf";
    case ModelKind::Svdd: return "svdd";
    case ModelKind::VaeUsf: return "vae-usf";
    case ModelKind::VaeNonUsf: return "vae-non-usf";
    }
    throw ContractError("invalid model kind");
}

GaussianMixtureSpec make_gm_spec(std::size_t d) {
    if (d < 2) throw ContractError("make_gm_spec: d must be >= 2");
    Tensor mu1 = Tensor::full({d}, 1.0);
    Tensor mu2 = Tensor::full({d}, -1.0);
    Tensor theta({d});
    const std::size_t half = (d + 1) / 2;
    for (std::size_t i = 0; i < d; ++i) theta[i] = i < half ? 5.0 : 0.5;
    GaussianMixtureSpec gm;
    gm.components.push_back(GaussianSpec::isotropic(std::move(mu1), 1.0));
    gm.components.push_back(GaussianSpec::diagonal(std::move(mu2), std::move(theta)));
    gm.weights = {0.5, 0.5};
    gm.validate();
    return gm;
}

void ExperimentConfig::validate() const {
    if (dim < 2) throw ConfigError("experiment: dim must be >= 2");
    if (train_samples < 1 || val_samples < 1 || test_samples < 1) {
        throw ConfigError("experiment: sample counts must be >= 1");
    }
    if (max_epochs < 1) throw ConfigError("experiment: max_epochs must be >= 1");
    search.validate();
}

ExperimentConfig ExperimentConfig::from_config(const ConfigFile& cfg) {
    ExperimentConfig c;
    c.dim = cfg.get_size_or("experiment", "dim", c.dim);
    c.model = parse_model_kind(cfg.get_or("experiment", "model", to_string(c.model)));
    c.train_samples = cfg.get_size_or("experiment", "train_samples", c.train_samples);
    c.val_samples = cfg.get_size_or("experiment", "val_samples", c.val_samples);
    c.test_samples = cfg.get_size_or("experiment", "test_samples", c.test_samples);
    c.seed = cfg.get_size_or("experiment", "seed", c.seed);
    c.out_dir = cfg.get_or("experiment", "out", c.out_dir);

    c.search.trials = cfg.get_size_or("sweep", "trials", c.search.trials);
    c.search.coupling_blocks_min =
        cfg.get_size_or("sweep", "coupling_blocks_min", c.search.coupling_blocks_min);
    c.search.coupling_blocks_max =
        cfg.get_size_or("sweep", "coupling_blocks_max", c.search.coupling_blocks_max);
    c.search.cond_depth_min = cfg.get_size_or("sweep", "cond_depth_min", c.search.cond_depth_min);
    c.search.cond_depth_max = cfg.get_size_or("sweep", "cond_depth_max", c.search.cond_depth_max);
    c.search.svdd_depth_min = cfg.get_size_or("sweep", "svdd_depth_min", c.search.svdd_depth_min);
    c.search.svdd_depth_max = cfg.get_size_or("sweep", "svdd_depth_max", c.search.svdd_depth_max);
    c.search.learning_rate_min =
        cfg.get_double_or("sweep", "learning_rate_min", c.search.learning_rate_min);
    c.search.learning_rate_max =
        cfg.get_double_or("sweep", "learning_rate_max", c.search.learning_rate_max);
    if (auto bs = cfg.get("sweep", "batch_sizes")) {
        c.search.batch_sizes.clear();
        std::istringstream ss(*bs);
        std::string tok;
        while (std::getline(ss, tok, ',')) {
            c.search.batch_sizes.push_back(static_cast<std::size_t>(std::stoul(tok)));
        }
    }

    c.max_epochs = cfg.get_size_or("train", "max_epochs", c.max_epochs);
    c.patience = cfg.get_size_or("train", "patience", c.patience);
    c.det_prior_sigma0 = cfg.get_double_or("train", "det_prior_sigma0", c.det_prior_sigma0);
    return c;
}

AlignmentReport alignment_report(const FlowModel& model, const Tensor& test,
                                 const GaussianMixtureSpec& gm) {
    AlignmentReport rep;
    rep.score_is_logpdf = true;
    rep.true_logpdf = gm_logpdf_rows(test, gm);
    rep.score.resize(test.rows());
    rep.latent_norm.resize(test.rows());
    for_chunks(test, 1000, [&](const Tensor& chunk, std::size_t base) {
        FlowEval fe = flow_forward_eval(model, chunk);
        for (std::size_t r = 0; r < chunk.rows(); ++r) {
            rep.score[base + r] = gaussian_logpdf(fe.z.row(r), model.base) + fe.logdet[r];
            rep.latent_norm[base + r] = row_norm(fe.z, r, model.base.mean);
        }
    });
    finish_report(rep);
    return rep;
}

AlignmentReport alignment_report(const SvddModel& model, const Tensor& test,
                                 const GaussianMixtureSpec& gm) {
    AlignmentReport rep;
    rep.score_is_logpdf = false;
    rep.true_logpdf = gm_logpdf_rows(test, gm);
    rep.score.resize(test.rows());
    rep.latent_norm.resize(test.rows());
    for_chunks(test, 1000, [&](const Tensor& chunk, std::size_t base) {
        Tensor z = model.encode_eval(chunk);
        for (std::size_t r = 0; r < chunk.rows(); ++r) {
            const double norm = row_norm(z, r, model.center);
            rep.latent_norm[base + r] = norm;
            rep.score[base + r] = norm * norm;
        }
    });
    finish_report(rep);
    return rep;
}

AlignmentReport alignment_report(const VaeModel& model, const Tensor& test,
                                 const GaussianMixtureSpec& gm) {
    AlignmentReport rep;
    rep.score_is_logpdf = false;
    rep.true_logpdf = gm_logpdf_rows(test, gm);
    rep.score.resize(test.rows());
    rep.latent_norm.resize(test.rows());
    for_chunks(test, 1000, [&](const Tensor& chunk, std::size_t base) {
        auto [mu, var] = vae_encode(model, chunk);
        (void)var;
        FlowEval fe = flow_forward_eval(model.prior, mu);
        ad::Tape tape;
        Tensor dec = tape.value(model.decode_vars(tape, tape.leaf(mu)));
        for (std::size_t r = 0; r < chunk.rows(); ++r) {
            const double lp =
                gaussian_logpdf(fe.z.row(r), model.prior.base) + fe.logdet[r];
            double err = 0.0;
            for (std::size_t j = 0; j < chunk.cols(); ++j) {
                const double d = chunk.at(r, j) - dec.at(r, j);
                err += d * d;
            }
            rep.score[base + r] = -lp + model.recon_weight * err;
            rep.latent_norm[base + r] = row_norm(fe.z, r, model.prior.base.mean);
        }
    });
    finish_report(rep);
    return rep;
}

void emit_scatter_data(const AlignmentReport& report, std::ostream& out) {
    out << "sample-id,true-logpdf,est-logpdf-or-score,latent-norm\n";
    for (std::size_t i = 0; i < report.true_logpdf.size(); ++i) {
        out << i << ',' << fmt17(report.true_logpdf[i]) << ',' << fmt17(report.score[i])
            << ',' << fmt17(report.latent_norm[i]) << '\n';
    }
}

void emit_scatter_data(const AlignmentReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    emit_scatter_data(report, out);
}

TrainedModel train_model(const ExperimentConfig& cfg, const TrialSetting& setting,
                         const Tensor& train_data, const Tensor& val_data) {
    TrainedModel out;
    RngStream init(setting.seed);
    TrainConfig tc;
    tc.learning_rate = setting.learning_rate;
    tc.batch_size = setting.batch_size;
    tc.max_epochs = cfg.max_epochs;
    tc.patience = cfg.patience;
    tc.det_prior_sigma0 = cfg.det_prior_sigma0;
    tc.seed = setting.seed;

    switch (cfg.model) {
    case ModelKind::Usf:
    case ModelKind::NonUsf: {
        const bool usf = cfg.model == ModelKind::Usf;
        GaussianSpec base = GaussianSpec::isotropic(Tensor::zeros({cfg.dim}), 1.0);
        out.flow = FlowModel::make(usf ? FlowKind::UniformlyScaling : FlowKind::Affine,
                                   cfg.dim, setting.coupling_blocks, setting.cond_depth,
                                   std::move(base), 2.0, init);
        tc.objective = usf ? ObjectiveKind::FlowMap : ObjectiveKind::FlowMle;
        Trainable t = make_flow_trainable(*out.flow, tc.objective, cfg.det_prior_sigma0);
        out.record = train(t, train_data, val_data, tc);
        break;
    }
    case ModelKind::Svdd: {
        out.svdd = SvddModel::make(cfg.dim, setting.svdd_depth, 1e-6, init);
        out.svdd->center = init_center(*out.svdd, train_data);
        tc.objective = ObjectiveKind::Svdd;
        Trainable t = make_svdd_trainable(*out.svdd);
        out.record = train(t, train_data, val_data, tc);
        break;
    }
    case ModelKind::VaeUsf:
    case ModelKind::VaeNonUsf: {
        const FlowKind pk = cfg.model == ModelKind::VaeUsf ? FlowKind::UniformlyScaling
                                                           : FlowKind::Affine;
        const std::size_t latent = std::max<std::size_t>(1, cfg.dim / 2);
        out.vae = VaeModel::make(cfg.dim, latent, 32, 2, pk, setting.coupling_blocks, init);
        tc.objective = ObjectiveKind::VaeElbo;
        Trainable t = make_vae_trainable(*out.vae, setting.seed + 1);
        out.record = train(t, train_data, val_data, tc);
        break;
    }
    }
    return out;
}

namespace {

void write_sweep_csv(const HpResult& sweep, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << "trial,seed,coupling_blocks,cond_depth,svdd_depth,batch_size,learning_rate,"
           "best_val_loss,failed,wall_time_seconds\n";
    for (std::size_t i = 0; i < sweep.settings.size(); ++i) {
        const TrialSetting& s = sweep.settings[i];
        const TrainRecord& r = sweep.records[i];
        out << i << ',' << s.seed << ',' << s.coupling_blocks << ',' << s.cond_depth << ','
            << s.svdd_depth << ',' << s.batch_size << ',' << fmt17(s.learning_rate) << ','
            << fmt17(r.best_val_loss) << ',' << (r.failed ? 1 : 0) << ','
            << fmt17(r.wall_time_seconds) << '\n';
    }
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const GaussianMixtureSpec gm = make_gm_spec(cfg.dim);
    RngStream master(cfg.seed);
    RngStream train_stream = master.derive(1);
    RngStream val_stream = master.derive(2);
    RngStream test_stream = master.derive(3);
    const Tensor train_data = gm_sample(gm, cfg.train_samples, train_stream);
    const Tensor val_data = gm_sample(gm, cfg.val_samples, val_stream);
    const Tensor test_data = gm_sample(gm, cfg.test_samples, test_stream);

    ExperimentResult res;
    res.sweep = hp_search(
        cfg.search,
        [&](const TrialSetting& s) { return train_model(cfg, s, train_data, val_data).record; },
        cfg.seed);
    res.best_setting = res.sweep.settings[res.sweep.best_trial];

    // Retrain the winner; training is deterministic in the trial seed, so
    // this reproduces the sweep's best model exactly.
    TrainedModel best = train_model(cfg, res.best_setting, train_data, val_data);
    res.final_record = best.record;

    if (best.flow) {
        res.report = alignment_report(*best.flow, test_data, gm);
    } else if (best.svdd) {
        res.report = alignment_report(*best.svdd, test_data, gm);
    } else {
        res.report = alignment_report(*best.vae, test_data, gm);
    }

    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const fs::path dir(cfg.out_dir);
    res.alignment_csv = (dir / "alignment.csv").string();
    res.sweep_csv = (dir / "sweep.csv").string();
    res.checkpoint_path = (dir / "model.ckpt").string();
    res.summary_json = (dir / "summary.json").string();

    emit_scatter_data(res.report, res.alignment_csv);
    write_sweep_csv(res.sweep, res.sweep_csv);
    if (best.flow) {
        save_flow_checkpoint(*best.flow, res.checkpoint_path);
    } else if (best.svdd) {
        save_svdd_checkpoint(*best.svdd, res.checkpoint_path);
    } else {
        save_vae_checkpoint(*best.vae, res.checkpoint_path);
    }

    nlohmann::json summary;
    summary["model"] = to_string(cfg.model);
    summary["dim"] = cfg.dim;
    summary["seed"] = cfg.seed;
    summary["trials"] = res.sweep.settings.size();
    summary["failed_trials"] = res.sweep.failed_count;
    summary["best_trial"] = res.sweep.best_trial;
    summary["best_setting"] = {{"seed", res.best_setting.seed},
                               {"coupling_blocks", res.best_setting.coupling_blocks},
                               {"cond_depth", res.best_setting.cond_depth},
                               {"svdd_depth", res.best_setting.svdd_depth},
                               {"batch_size", res.best_setting.batch_size},
                               {"learning_rate", res.best_setting.learning_rate}};
    summary["final_loss"] = res.final_record.best_val_loss;
    summary["best_epoch"] = res.final_record.best_epoch;
    summary["param_checksum"] = res.final_record.param_checksum;
    summary["spearman_true_vs_neg_norm"] = res.report.rho_norm;
    summary["kendall_true_vs_neg_norm"] = res.report.tau_norm;
    summary["spearman_true_vs_estimate"] = res.report.rho_score;
    summary["kendall_true_vs_estimate"] = res.report.tau_score;
    summary["score_is_logpdf"] = res.report.score_is_logpdf;
    std::ofstream js(res.summary_json);
    if (!js) throw ConfigError("cannot write " + res.summary_json);
    js << summary.dump(2) << '\n';

    return res;
}

} // namespace usflab
