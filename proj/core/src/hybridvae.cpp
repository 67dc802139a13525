#include "usflab/hybridvae.hpp"

#include <cmath>

namespace usflab {

namespace {

constexpr double kLn2Pi = 1.8378770664093454835606594728112;

Tensor as_matrix(const Tensor& v) {
    if (v.rank() == 2) return v;
    Tensor m({1, v.size()});
    for (std::size_t i = 0; i < v.size(); ++i) m.at(0, i) = v[i];
    return m;
}

DenseLayer make_layer(std::size_t out, std::size_t in, double scale, RngStream& stream) {
    DenseLayer l;
    l.weight = ParamNode(Tensor({out, in}));
    l.bias = ParamNode(Tensor({out}));
    for (std::size_t i = 0; i < l.weight.value.size(); ++i) {
        l.weight.value[i] = scale * stream.normal();
    }
    return l;
}

ad::Var dense(ad::Tape& tape, const DenseLayer& l, ad::Var x) {
    ad::Var w = tape.param(const_cast<ParamNode&>(l.weight));
    ad::Var b = tape.param(const_cast<ParamNode&>(l.bias));
    return tape.add_rowvec(tape.matmul_nt(x, w), b);
}

} // namespace

VaeModel VaeModel::make(std::size_t data_dim, std::size_t latent_dim,
                        std::size_t hidden_width, std::size_t depth,
                        FlowKind prior_kind, std::size_t prior_blocks,
                        RngStream& stream) {
    if (latent_dim >= data_dim) {
        throw ContractError("VaeModel: latent dimension must be smaller than data dimension");
    }
    VaeModel m;
    m.data_dim = data_dim;
    m.latent_dim = latent_dim;
    m.hidden_width = hidden_width;
    m.depth = depth;
    std::size_t in = data_dim;
    for (std::size_t l = 0; l < depth; ++l) {
        m.enc_hidden.push_back(
            make_layer(hidden_width, in, 1.0 / std::sqrt(static_cast<double>(in)), stream));
        in = hidden_width;
    }
    m.enc_mu = make_layer(latent_dim, in, 0.0, stream);
    m.enc_logvar = make_layer(latent_dim, in, 0.0, stream);
    in = latent_dim;
    for (std::size_t l = 0; l < depth; ++l) {
        m.dec_hidden.push_back(
            make_layer(hidden_width, in, 1.0 / std::sqrt(static_cast<double>(in)), stream));
        in = hidden_width;
    }
    m.dec_out = make_layer(data_dim, in, 0.0, stream);
    GaussianSpec base = GaussianSpec::isotropic(Tensor::zeros({latent_dim}), 1.0);
    m.prior = FlowModel::make(prior_kind, latent_dim, prior_blocks, 2, std::move(base), 2.0,
                              stream);
    return m;
}

VaeModel::EncVars VaeModel::encode_vars(ad::Tape& tape, ad::Var x) const {
    ad::Var h = x;
    for (const auto& l : enc_hidden) h = tape.softplus(dense(tape, l, h));
    return EncVars{dense(tape, enc_mu, h), dense(tape, enc_logvar, h)};
}

ad::Var VaeModel::decode_vars(ad::Tape& tape, ad::Var z) const {
    ad::Var h = z;
    for (const auto& l : dec_hidden) h = tape.softplus(dense(tape, l, h));
    return dense(tape, dec_out, h);
}

std::vector<ParamNode*> VaeModel::parameters() {
    std::vector<ParamNode*> ps;
    auto push = [&](DenseLayer& l) {
        ps.push_back(&l.weight);
        ps.push_back(&l.bias);
    };
    for (auto& l : enc_hidden) push(l);
    push(enc_mu);
    push(enc_logvar);
    for (auto& l : dec_hidden) push(l);
    push(dec_out);
    for (auto* p : prior.parameters()) ps.push_back(p);
    return ps;
}

std::pair<Tensor, Tensor> vae_encode(const VaeModel& model, const Tensor& x) {
    ad::Tape tape;
    VaeModel::EncVars e = model.encode_vars(tape, tape.leaf(as_matrix(x)));
    Tensor var = tape.value(e.logvar);
    for (std::size_t i = 0; i < var.size(); ++i) var[i] = std::exp(var[i]);
    return {tape.value(e.mu), std::move(var)};
}

Tensor reparam_sample(const Tensor& mu, const Tensor& var_diag, RngStream& stream) {
    if (!mu.same_shape(var_diag)) throw ContractError("reparam_sample: shape mismatch");
    Tensor z = mu;
    for (std::size_t i = 0; i < z.size(); ++i) {
        z[i] += std::sqrt(var_diag[i]) * stream.normal();
    }
    return z;
}

ad::Var elbo_with_noise(ad::Tape& tape, const VaeModel& model, ad::Var x,
                        const std::vector<Tensor>& noise) {
    if (noise.empty()) throw ContractError("elbo: n_samples must be >= 1");
    const Tensor& X = tape.value(x);
    const std::size_t n = X.rows();
    const double dl = static_cast<double>(model.latent_dim);
    const double dd = static_cast<double>(model.data_dim);
    const double s2 = model.sigma_min * model.sigma_min;

    VaeModel::EncVars enc = model.encode_vars(tape, x);
    ad::Var var = tape.exp(enc.logvar);
    ad::Var sd = tape.exp(tape.scale(enc.logvar, 0.5));

    ad::Var total = tape.leaf(Tensor::zeros({1}));
    for (const Tensor& eps : noise) {
        if (eps.rank() != 2 || eps.rows() != n || eps.cols() != model.latent_dim) {
            throw ContractError("elbo: noise shape mismatch");
        }
        ad::Var z = tape.add(enc.mu, tape.mul(sd, tape.leaf(eps)));

        ad::Var recon, entropy, prior_lp;
        try {
            ad::Var xr = tape.sub(x, model.decode_vars(tape, z));
            recon = tape.add_const(
                tape.scale(tape.row_sum(tape.square(xr)), -1.0 / (2.0 * s2)),
                -0.5 * dd * (kLn2Pi + std::log(s2)));
        } catch (const NumericError& e) {
            throw NumericError("elbo reconstruction term/" + e.where(), e.what());
        }
        try {
            // -ln q(z | x), evaluated at the sampled z
            ad::Var diff = tape.sub(z, enc.mu);
            ad::Var q = tape.row_sum(tape.div(tape.square(diff), var));
            ad::Var lv = tape.row_sum(enc.logvar);
            entropy = tape.scale(tape.add_const(tape.add(q, lv), dl * kLn2Pi), 0.5);
        } catch (const NumericError& e) {
            throw NumericError("elbo entropy term/" + e.where(), e.what());
        }
        try {
            FlowVars fw = flow_forward(tape, model.prior, z);
            prior_lp = tape.add(base_logpdf_rows(tape, model.prior.base, fw.z), fw.logdet);
        } catch (const NumericError& e) {
            throw NumericError("elbo prior term/" + e.where(), e.what());
        }
        ad::Var rows = tape.add(tape.add(recon, entropy), prior_lp);
        total = tape.add(total, tape.mean(rows));
    }
    return tape.scale(total, 1.0 / static_cast<double>(noise.size()));
}

ad::Var elbo(ad::Tape& tape, const VaeModel& model, ad::Var x, RngStream& stream,
             std::size_t n_samples) {
    if (n_samples == 0) throw ContractError("elbo: n_samples must be >= 1");
    const std::size_t n = tape.value(x).rows();
    std::vector<Tensor> noise;
    noise.reserve(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
        noise.push_back(stream.normal_tensor({n, model.latent_dim}));
    }
    return elbo_with_noise(tape, model, x, noise);
}

double elbo_value(const VaeModel& model, const Tensor& batch, RngStream& stream,
                  std::size_t n_samples) {
    ad::Tape tape;
    return tape.scalar(elbo(tape, model, tape.leaf(as_matrix(batch)), stream, n_samples));
}

double vae_anomaly_score(const VaeModel& model, const Tensor& x) {
    auto [mu, var] = vae_encode(model, x);
    (void)var;
    ad::Tape tape;
    ad::Var z = tape.leaf(mu);
    FlowVars fw = flow_forward(tape, model.prior, z);
    ad::Var lp = tape.add(base_logpdf_rows(tape, model.prior.base, fw.z), fw.logdet);
    ad::Var dec = model.decode_vars(tape, z);

    const Tensor X = as_matrix(x);
    const Tensor& D = tape.value(dec);
    const Tensor& L = tape.value(lp);
    double nll = 0.0;
    double err = 0.0;
    for (std::size_t r = 0; r < X.rows(); ++r) {
        nll += -L[r];
        for (std::size_t j = 0; j < X.cols(); ++j) {
            const double diff = X.at(r, j) - D.at(r, j);
            err += diff * diff;
        }
    }
    return (nll + model.recon_weight * err) / static_cast<double>(X.rows());
}

} // namespace usflab
