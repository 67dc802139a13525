#pragma once

#include "usflab/flows.hpp"

namespace usflab {

/// Toy VAE with a trainable flow prior over the latent space. Encoder and
/// decoder are small softplus MLPs; the variance head outputs log-variances
/// so posterior variances are strictly positive by construction.
struct VaeModel {
    std::size_t data_dim = 0;
    std::size_t latent_dim = 0;

    std::vector<DenseLayer> enc_hidden;
    DenseLayer enc_mu;     // zero-initialized: mu = 0 at start
    DenseLayer enc_logvar; // zero-initialized: var = 1 at start
    std::vector<DenseLayer> dec_hidden;
    DenseLayer dec_out;    // zero-initialized

    FlowModel prior; // base N(0, I) over latent_dim
    double sigma_min = 0.1;
    double recon_weight = 1.0;
    std::size_t hidden_width = 0;
    std::size_t depth = 0;

    static VaeModel make(std::size_t data_dim, std::size_t latent_dim,
                         std::size_t hidden_width, std::size_t depth,
                         FlowKind prior_kind, std::size_t prior_blocks,
                         RngStream& stream);

    struct EncVars {
        ad::Var mu;
        ad::Var logvar;
    };
    EncVars encode_vars(ad::Tape& tape, ad::Var x) const;
    ad::Var decode_vars(ad::Tape& tape, ad::Var z) const;

    std::vector<ParamNode*> parameters();
};

/// Posterior parameters (mu, var_diag) for a batch; rows are samples.
std::pair<Tensor, Tensor> vae_encode(const VaeModel& model, const Tensor& x);

/// z = mu + sqrt(var) .* eps with eps ~ N(0, I).
Tensor reparam_sample(const Tensor& mu, const Tensor& var_diag, RngStream& stream);

/// Monte-Carlo ELBO (value to maximize) with externally supplied noise,
/// one [n, latent] tensor per sample. Deterministic; used for gradient
/// checks and by the stream-driven overload.
ad::Var elbo_with_noise(ad::Tape& tape, const VaeModel& model, ad::Var x,
                        const std::vector<Tensor>& noise);

ad::Var elbo(ad::Tape& tape, const VaeModel& model, ad::Var x, RngStream& stream,
             std::size_t n_samples);
double elbo_value(const VaeModel& model, const Tensor& batch, RngStream& stream,
                  std::size_t n_samples);

/// Deterministic score at the posterior mean: latent NLL under the flow
/// prior plus recon_weight times the squared reconstruction error.
double vae_anomaly_score(const VaeModel& model, const Tensor& x);

} // namespace usflab
