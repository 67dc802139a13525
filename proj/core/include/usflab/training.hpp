#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "usflab/flows.hpp"
#include "usflab/hybridvae.hpp"
#include "usflab/oneclass.hpp"

namespace usflab {

enum class ObjectiveKind { FlowMle, FlowMap, Svdd, VaeElbo };

std::string to_string(ObjectiveKind kind);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::size_t t = 0;

    static AdamState init(const std::vector<ParamNode*>& params);
};

/// One bias-corrected Adam update from the gradients currently stored in
/// the params. Does not clear gradients.
void adam_step(const std::vector<ParamNode*>& params, AdamState& state,
               const AdamConfig& config);

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 128;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    ObjectiveKind objective = ObjectiveKind::FlowMle;
    double det_prior_sigma0 = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainRecord {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    std::size_t best_epoch = 0;
    double best_val_loss = 0.0;
    double wall_time_seconds = 0.0;
    std::uint64_t param_checksum = 0;
    bool failed = false;
    std::string failure_reason; // includes epoch/batch provenance
};

/// A model bound to its objective: parameter list plus a loss callback
/// that accumulates gradients when asked. val_loss, when set, is the
/// model-selection metric (validation NLL for flows, which excludes any
/// parameter prior); it defaults to the training loss without gradients.
struct Trainable {
    std::vector<ParamNode*> params;
    std::function<double(const Tensor& batch, bool with_grad)> loss;
    std::function<double(const Tensor& batch)> val_loss;
};

Trainable make_flow_trainable(FlowModel& model, ObjectiveKind kind, double sigma0);
Trainable make_svdd_trainable(SvddModel& model);
/// Single-sample pathwise ELBO per step; noise drawn from a stream derived
/// from the given seed so runs are reproducible.
Trainable make_vae_trainable(VaeModel& model, std::uint64_t noise_seed);

/// Minibatch training with early stopping; restores the parameters of the
/// best validation epoch. A non-finite loss aborts the run and returns a
/// record flagged failed with epoch/batch provenance.
TrainRecord train(Trainable& trainable, const Tensor& train_data, const Tensor& val_data,
                  const TrainConfig& config);

struct SearchSpace {
    std::size_t coupling_blocks_min = 2, coupling_blocks_max = 10;
    std::size_t cond_depth_min = 2, cond_depth_max = 3;
    std::size_t svdd_depth_min = 2, svdd_depth_max = 6;
    double learning_rate_min = 1e-4, learning_rate_max = 1e-2; // log-uniform
    std::vector<std::size_t> batch_sizes = {64, 128, 256};
    std::size_t trials = 10;

    void validate() const;
};

struct TrialSetting {
    std::size_t coupling_blocks = 0;
    std::size_t cond_depth = 0;
    std::size_t svdd_depth = 0;
    std::size_t batch_size = 0;
    double learning_rate = 0.0;
    std::uint64_t seed = 0;
};

TrialSetting sample_setting(const SearchSpace& space, RngStream& stream);

struct HpResult {
    std::vector<TrialSetting> settings;
    std::vector<TrainRecord> records;
    std::size_t best_trial = 0;
    std::size_t failed_count = 0;
};

/// Random search: trial settings and seeds derive deterministically from
/// the master seed. Throws Error("no viable configuration") when every
/// trial fails.
HpResult hp_search(const SearchSpace& space,
                   const std::function<TrainRecord(const TrialSetting&)>& run_trial,
                   std::uint64_t master_seed);

/// Deterministic row split; frac is the training fraction.
std::pair<Tensor, Tensor> split_rows(const Tensor& data, double frac, RngStream& stream);

std::uint64_t param_checksum(const std::vector<ParamNode*>& params);

} // namespace usflab
