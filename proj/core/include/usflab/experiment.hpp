#pragma once

#include <iosfwd>
#include <optional>
#include <string>

#include "usflab/config.hpp"
#include "usflab/distributions.hpp"
#include "usflab/hybridvae.hpp"
#include "usflab/oneclass.hpp"
#include "usflab/training.hpp"

namespace usflab {

enum class ModelKind { Usf, NonUsf, Svdd, VaeUsf, VaeNonUsf };

ModelKind parse_model_kind(const std::string& name); // throws ConfigError
std::string to_string(ModelKind kind);

/// Benchmark density: an equal-weight two-component Gaussian mixture with
/// means 1_d and -1_d, Sigma_1 = I and Sigma_2 diagonal with the first
/// ceil(d/2) entries 5.0 and the rest 0.5 (det Sigma_2 = 2.5^(d/2)).
GaussianMixtureSpec make_gm_spec(std::size_t d);

struct ExperimentConfig {
    std::size_t dim = 2;
    ModelKind model = ModelKind::Usf;
    std::size_t train_samples = 20000;
    std::size_t val_samples = 5000;
    std::size_t test_samples = 5000;
    SearchSpace search;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    double det_prior_sigma0 = 1.0;
    std::uint64_t seed = 0;
    std::string out_dir = "out";

    void validate() const; // dim >= 2, counts >= 1

    /// Fields read from sections [experiment], [sweep], [train]; missing
    /// keys keep their defaults.
    static ExperimentConfig from_config(const ConfigFile& cfg);
};

/// Per-sample alignment columns plus rank-correlation aggregates. The
/// score column holds the estimated log-density for flow models and the
/// anomaly score for SVDD and VAE models.
struct AlignmentReport {
    std::vector<double> true_logpdf;
    std::vector<double> score;
    std::vector<double> latent_norm;
    bool score_is_logpdf = true;

    double rho_norm = 0.0; // true logpdf vs negated latent norm
    double tau_norm = 0.0;
    double rho_score = 0.0; // true logpdf vs estimated logpdf (or -score)
    double tau_score = 0.0;
};

AlignmentReport alignment_report(const FlowModel& model, const Tensor& test,
                                 const GaussianMixtureSpec& gm);
AlignmentReport alignment_report(const SvddModel& model, const Tensor& test,
                                 const GaussianMixtureSpec& gm);
AlignmentReport alignment_report(const VaeModel& model, const Tensor& test,
                                 const GaussianMixtureSpec& gm);

/// CSV with header sample-id,true-logpdf,est-logpdf-or-score,latent-norm;
/// 17 significant digits, locale-independent, deterministic row order.
void emit_scatter_data(const AlignmentReport& report, std::ostream& out);
void emit_scatter_data(const AlignmentReport& report, const std::string& path);

/// Exactly one of the model members is set, matching the config's kind.
struct TrainedModel {
    std::optional<FlowModel> flow;
    std::optional<SvddModel> svdd;
    std::optional<VaeModel> vae;
    TrainRecord record;
};

/// Build the configured model kind from one trial setting and train it.
TrainedModel train_model(const ExperimentConfig& config, const TrialSetting& setting,
                         const Tensor& train_data, const Tensor& val_data);

struct ExperimentResult {
    HpResult sweep;
    TrialSetting best_setting;
    TrainRecord final_record;
    AlignmentReport report;
    std::string alignment_csv;
    std::string sweep_csv;
    std::string checkpoint_path;
    std::string summary_json;
};

/// Full benchmark run: sample the mixture, random-search hyperparameters,
/// retrain the best setting, and write alignment.csv, sweep.csv,
/// model.ckpt, and summary.json into the output directory. Everything
/// except the sweep wall-time column is a deterministic function of the
/// config and master seed.
ExperimentResult run_experiment(const ExperimentConfig& config);

} // namespace usflab
