#include "usflab/checkpoint.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace usflab {

namespace {

constexpr const char* kHeader = "usflab-ckpt-v1";

std::string fmt(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& tok) {
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc()) throw ConfigError("checkpoint: bad number '" + tok + "'");
    return v;
}

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path) {
        if (!in_) throw ConfigError("checkpoint: cannot open " + path);
        std::string header;
        std::getline(in_, header);
        if (header != kHeader) throw ConfigError("checkpoint: unrecognized header");
    }

    /// Next line split into tokens; first token is the key.
    std::vector<std::string> line() {
        std::string l;
        if (!std::getline(in_, l)) throw ConfigError("checkpoint: unexpected end of file");
        std::istringstream ss(l);
        std::vector<std::string> toks;
        std::string t;
        while (ss >> t) toks.push_back(t);
        return toks;
    }

    std::vector<std::string> expect(const std::string& key) {
        auto toks = line();
        if (toks.empty() || toks[0] != key) {
            throw ConfigError("checkpoint: expected '" + key + "'");
        }
        return toks;
    }

    double expect_double(const std::string& key) { return parse_double(expect(key).at(1)); }
    std::size_t expect_size(const std::string& key) {
        return static_cast<std::size_t>(expect_double(key));
    }
    std::string expect_word(const std::string& key) { return expect(key).at(1); }

    Tensor expect_vector(const std::string& key) {
        auto toks = expect(key);
        const std::size_t n = static_cast<std::size_t>(parse_double(toks.at(1)));
        if (toks.size() != n + 2) throw ConfigError("checkpoint: vector length mismatch");
        Tensor v({n});
        for (std::size_t i = 0; i < n; ++i) v[i] = parse_double(toks[i + 2]);
        return v;
    }

private:
    std::ifstream in_;
};

void write_vector(std::ostream& out, const std::string& key, const Tensor& v) {
    out << key << ' ' << v.size();
    for (std::size_t i = 0; i < v.size(); ++i) out << ' ' << fmt(v[i]);
    out << '\n';
}

void write_params(std::ostream& out, const std::string& key,
                  const std::vector<ParamNode*>& params) {
    std::size_t total = 0;
    for (const ParamNode* p : params) total += p->value.size();
    out << key << ' ' << total;
    for (const ParamNode* p : params) {
        for (double v : p->value.values()) out << ' ' << fmt(v);
    }
    out << '\n';
}

void read_params(Reader& r, const std::string& key, const std::vector<ParamNode*>& params) {
    const Tensor flat = r.expect_vector(key);
    std::size_t k = 0;
    for (ParamNode* p : params) {
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            if (k >= flat.size()) throw ConfigError("checkpoint: parameter count mismatch");
            p->value[i] = flat[k++];
        }
    }
    if (k != flat.size()) throw ConfigError("checkpoint: parameter count mismatch");
}

void write_base(std::ostream& out, const std::string& prefix, const GaussianSpec& base) {
    switch (base.cov_kind) {
    case GaussianSpec::Cov::Isotropic:
        out << prefix << "base_kind isotropic\n";
        write_vector(out, prefix + "base_mean", base.mean);
        out << prefix << "base_var " << fmt(base.iso_variance) << '\n';
        break;
    case GaussianSpec::Cov::Diagonal:
        out << prefix << "base_kind diagonal\n";
        write_vector(out, prefix + "base_mean", base.mean);
        write_vector(out, prefix + "base_diag", base.diag);
        break;
    case GaussianSpec::Cov::Full:
        throw ContractError("checkpoint: full-covariance base not supported");
    }
}

GaussianSpec read_base(Reader& r, const std::string& prefix) {
    const std::string kind = r.expect_word(prefix + "base_kind");
    Tensor mean = r.expect_vector(prefix + "base_mean");
    if (kind == "isotropic") {
        return GaussianSpec::isotropic(std::move(mean), r.expect_double(prefix + "base_var"));
    }
    if (kind == "diagonal") {
        return GaussianSpec::diagonal(std::move(mean), r.expect_vector(prefix + "base_diag"));
    }
    throw ConfigError("checkpoint: unknown base kind '" + kind + "'");
}

void write_flow_body(std::ostream& out, const std::string& prefix, const FlowModel& model) {
    out << prefix << "dim " << model.dim << '\n';
    out << prefix << "blocks " << model.blocks.size() << '\n';
    out << prefix << "cond_depth " << model.cond_depth << '\n';
    out << prefix << "cond_width " << model.cond_width << '\n';
    out << prefix << "g_clamp " << fmt(model.g_clamp) << '\n';
    write_base(out, prefix, model.base);
    for (const auto& blk : model.blocks) write_vector(out, prefix + "mask", blk.mask.bits);
    for (const auto& blk : model.blocks) write_vector(out, prefix + "sign", blk.affine.diag_sign);
    write_vector(out, prefix + "sign", model.final_affine.diag_sign);
    write_params(out, prefix + "params", const_cast<FlowModel&>(model).parameters());
}

FlowModel read_flow_body(Reader& r, const std::string& prefix, FlowKind kind) {
    const std::size_t dim = r.expect_size(prefix + "dim");
    const std::size_t blocks = r.expect_size(prefix + "blocks");
    const std::size_t cond_depth = r.expect_size(prefix + "cond_depth");
    const std::size_t cond_width = r.expect_size(prefix + "cond_width");
    const double g_clamp = r.expect_double(prefix + "g_clamp");
    GaussianSpec base = read_base(r, prefix);
    RngStream scratch(0);
    FlowModel m = FlowModel::make(kind, dim, blocks, cond_depth, std::move(base), g_clamp,
                                  scratch, cond_width);
    for (auto& blk : m.blocks) blk.mask.bits = r.expect_vector(prefix + "mask");
    for (auto& blk : m.blocks) blk.affine.diag_sign = r.expect_vector(prefix + "sign");
    m.final_affine.diag_sign = r.expect_vector(prefix + "sign");
    read_params(r, prefix + "params", m.parameters());
    return m;
}

} // namespace

void save_flow_checkpoint(const FlowModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("checkpoint: cannot write " + path);
    out << kHeader << '\n';
    out << "kind " << (model.kind == FlowKind::UniformlyScaling ? "usf" : "non-usf") << '\n';
    write_flow_body(out, "", model);
}

FlowModel load_flow_checkpoint(const std::string& path) {
    Reader r(path);
    const std::string kind = r.expect_word("kind");
    if (kind != "usf" && kind != "non-usf") {
        throw ConfigError("checkpoint: not a flow checkpoint (kind " + kind + ")");
    }
    return read_flow_body(r, "", kind == "usf" ? FlowKind::UniformlyScaling : FlowKind::Affine);
}

void save_svdd_checkpoint(const SvddModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("checkpoint: cannot write " + path);
    out << kHeader << "\nkind svdd\n";
    Tensor widths({model.widths.size()});
    for (std::size_t i = 0; i < model.widths.size(); ++i) {
        widths[i] = static_cast<double>(model.widths[i]);
    }
    write_vector(out, "widths", widths);
    out << "lambda " << fmt(model.lambda) << '\n';
    out << "leak " << fmt(model.leak) << '\n';
    write_vector(out, "center", model.center);
    write_params(out, "params", const_cast<SvddModel&>(model).parameters());
}

SvddModel load_svdd_checkpoint(const std::string& path) {
    Reader r(path);
    if (r.expect_word("kind") != "svdd") throw ConfigError("checkpoint: not an svdd checkpoint");
    const Tensor widths = r.expect_vector("widths");
    SvddModel m;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        m.widths.push_back(static_cast<std::size_t>(widths[i]));
    }
    m.lambda = r.expect_double("lambda");
    m.leak = r.expect_double("leak");
    m.center = r.expect_vector("center");
    for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
        m.weights.emplace_back(Tensor({m.widths[l + 1], m.widths[l]}));
    }
    read_params(r, "params", m.parameters());
    return m;
}

void save_vae_checkpoint(const VaeModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("checkpoint: cannot write " + path);
    out << kHeader << "\nkind vae-flow\n";
    out << "data_dim " << model.data_dim << '\n';
    out << "latent_dim " << model.latent_dim << '\n';
    out << "hidden_width " << model.hidden_width << '\n';
    out << "depth " << model.depth << '\n';
    out << "sigma_min " << fmt(model.sigma_min) << '\n';
    out << "recon_weight " << fmt(model.recon_weight) << '\n';
    out << "prior_kind "
        << (model.prior.kind == FlowKind::UniformlyScaling ? "usf" : "non-usf") << '\n';
    write_flow_body(out, "prior_", model.prior);
    // Encoder/decoder parameters only; the prior's live in its own section.
    VaeModel& m = const_cast<VaeModel&>(model);
    std::vector<ParamNode*> own;
    auto push = [&](DenseLayer& l) {
        own.push_back(&l.weight);
        own.push_back(&l.bias);
    };
    for (auto& l : m.enc_hidden) push(l);
    push(m.enc_mu);
    push(m.enc_logvar);
    for (auto& l : m.dec_hidden) push(l);
    push(m.dec_out);
    write_params(out, "params", own);
}

VaeModel load_vae_checkpoint(const std::string& path) {
    Reader r(path);
    if (r.expect_word("kind") != "vae-flow") {
        throw ConfigError("checkpoint: not a vae-flow checkpoint");
    }
    const std::size_t data_dim = r.expect_size("data_dim");
    const std::size_t latent_dim = r.expect_size("latent_dim");
    const std::size_t hidden_width = r.expect_size("hidden_width");
    const std::size_t depth = r.expect_size("depth");
    const double sigma_min = r.expect_double("sigma_min");
    const double recon_weight = r.expect_double("recon_weight");
    const std::string pk = r.expect_word("prior_kind");
    const FlowKind prior_kind = pk == "usf" ? FlowKind::UniformlyScaling : FlowKind::Affine;
    FlowModel prior = read_flow_body(r, "prior_", prior_kind);

    RngStream scratch(0);
    VaeModel m = VaeModel::make(data_dim, latent_dim, hidden_width, depth, prior_kind,
                                prior.blocks.size(), scratch);
    m.sigma_min = sigma_min;
    m.recon_weight = recon_weight;
    m.prior = std::move(prior);
    std::vector<ParamNode*> own;
    auto push = [&](DenseLayer& l) {
        own.push_back(&l.weight);
        own.push_back(&l.bias);
    };
    for (auto& l : m.enc_hidden) push(l);
    push(m.enc_mu);
    push(m.enc_logvar);
    for (auto& l : m.dec_hidden) push(l);
    push(m.dec_out);
    read_params(r, "params", own);
    return m;
}

std::string checkpoint_kind(const std::string& path) {
    Reader r(path);
    return r.expect_word("kind");
}

} // namespace usflab
