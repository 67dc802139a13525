#include "usflab/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>
#include <memory>

namespace usflab {

namespace {

Tensor take_rows(const Tensor& data, const std::vector<std::size_t>& idx,
                 std::size_t begin, std::size_t end) {
    const std::size_t d = data.cols();
    Tensor out({end - begin, d});
    for (std::size_t r = begin; r < end; ++r) {
        for (std::size_t j = 0; j < d; ++j) out.at(r - begin, j) = data.at(idx[r], j);
    }
    return out;
}

} // namespace

std::string to_string(ObjectiveKind kind) {
    switch (kind) {
    case ObjectiveKind::FlowMle: return "flow-mle";
    case ObjectiveKind::FlowMap: return "flow-map";
    case ObjectiveKind::Svdd: return "svdd";
    case ObjectiveKind::VaeElbo: return "vae-elbo";
    }
    return "unknown";
}

AdamState AdamState::init(const std::vector<ParamNode*>& params) {
    AdamState s;
    for (const ParamNode* p : params) {
        s.m.push_back(Tensor::zeros(p->value.shape()));
        s.v.push_back(Tensor::zeros(p->value.shape()));
    }
    return s;
}

void adam_step(const std::vector<ParamNode*>& params, AdamState& state,
               const AdamConfig& config) {
    if (state.m.size() != params.size()) {
        throw ContractError("adam_step: state does not match parameter list");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        ParamNode& p = *params[k];
        if (!p.requires_grad) continue;
        Tensor& m = state.m[k];
        Tensor& v = state.v[k];
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p.value[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
        }
    }
}

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("TrainConfig: learning rate must be positive");
    if (batch_size == 0) throw ConfigError("TrainConfig: batch size must be positive");
    if (max_epochs == 0) throw ConfigError("TrainConfig: max epochs must be positive");
    if (patience == 0 || patience > max_epochs) {
        throw ConfigError("TrainConfig: patience must be in 1..max_epochs");
    }
}

Trainable make_flow_trainable(FlowModel& model, ObjectiveKind kind, double sigma0) {
    if (kind != ObjectiveKind::FlowMle && kind != ObjectiveKind::FlowMap) {
        throw ContractError("make_flow_trainable: objective must be flow-mle or flow-map");
    }
    Trainable t;
    t.params = model.parameters();
    t.loss = [&model, kind, sigma0](const Tensor& batch, bool with_grad) {
        ad::Tape tape;
        ad::Var loss = flow_nll(tape, model, tape.leaf(batch));
        if (kind == ObjectiveKind::FlowMap) {
            loss = tape.add(loss, det_prior_penalty(tape, model, sigma0));
        }
        if (with_grad) tape.backward(loss);
        return tape.scalar(loss);
    };
    if (kind == ObjectiveKind::FlowMap) {
        // models are selected by validation NLL; the parameter prior is a
        // constant per model and would bias the comparison across sizes
        t.val_loss = [&model](const Tensor& batch) { return flow_nll_value(model, batch); };
    }
    return t;
}

Trainable make_svdd_trainable(SvddModel& model) {
    Trainable t;
    t.params = model.parameters();
    t.loss = [&model](const Tensor& batch, bool with_grad) {
        ad::Tape tape;
        ad::Var loss = svdd_loss(tape, model, tape.leaf(batch));
        if (with_grad) tape.backward(loss);
        return tape.scalar(loss);
    };
    return t;
}

Trainable make_vae_trainable(VaeModel& model, std::uint64_t noise_seed) {
    Trainable t;
    t.params = model.parameters();
    auto stream = std::make_shared<RngStream>(noise_seed);
    t.loss = [&model, stream](const Tensor& batch, bool with_grad) {
        ad::Tape tape;
        ad::Var obj = elbo(tape, model, tape.leaf(batch), *stream, 1);
        ad::Var loss = tape.neg(obj);
        if (with_grad) tape.backward(loss);
        return tape.scalar(loss);
    };
    return t;
}

TrainRecord train(Trainable& trainable, const Tensor& train_data, const Tensor& val_data,
                  const TrainConfig& config) {
    config.validate();
    if (train_data.rows() == 0 || val_data.rows() == 0) {
        throw ContractError("train: empty train or validation data");
    }

    const auto t0 = std::chrono::steady_clock::now();
    TrainRecord rec;
    rec.best_val_loss = std::numeric_limits<double>::infinity();

    RngStream shuffle_stream = RngStream(config.seed).derive(0x5u);
    const std::size_t n = train_data.rows();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;

    AdamConfig adam_cfg;
    adam_cfg.lr = config.learning_rate;
    AdamState adam = AdamState::init(trainable.params);

    std::vector<Tensor> best_params;
    auto snapshot = [&] {
        best_params.clear();
        for (const ParamNode* p : trainable.params) best_params.push_back(p->value);
    };
    auto restore = [&] {
        if (best_params.empty()) return;
        for (std::size_t k = 0; k < trainable.params.size(); ++k) {
            trainable.params[k]->value = best_params[k];
        }
    };
    auto finish = [&] {
        rec.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rec.param_checksum = param_checksum(trainable.params);
    };

    auto eval_loss = [&](const Tensor& data) {
        double acc = 0.0;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < data.rows(); b += config.batch_size) {
            const std::size_t e = std::min(data.rows(), b + config.batch_size);
            Tensor chunk({e - b, data.cols()});
            for (std::size_t r = b; r < e; ++r)
                for (std::size_t j = 0; j < data.cols(); ++j) chunk.at(r - b, j) = data.at(r, j);
            acc += (trainable.val_loss ? trainable.val_loss(chunk)
                                       : trainable.loss(chunk, /*with_grad=*/false)) *
                   static_cast<double>(e - b);
            seen += e - b;
        }
        return acc / static_cast<double>(seen);
    };

    for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
        // Fisher-Yates with the run-owned stream.
        for (std::size_t i = n; i > 1; --i) {
            std::swap(idx[i - 1], idx[shuffle_stream.uniform_index(i)]);
        }
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t b = 0, batch_no = 0; b < n; b += config.batch_size, ++batch_no) {
            const std::size_t e = std::min(n, b + config.batch_size);
            Tensor batch = take_rows(train_data, idx, b, e);
            for (ParamNode* p : trainable.params) p->zero_grad();
            double l;
            try {
                l = trainable.loss(batch, /*with_grad=*/true);
            } catch (const NumericError& err) {
                rec.failed = true;
                rec.failure_reason = "epoch " + std::to_string(epoch) + " batch " +
                                     std::to_string(batch_no) + ": " + err.what();
                restore();
                finish();
                return rec;
            }
            adam_step(trainable.params, adam, adam_cfg);
            epoch_loss += l * static_cast<double>(e - b);
            seen += e - b;
        }
        rec.train_loss.push_back(epoch_loss / static_cast<double>(seen));

        double vl;
        try {
            vl = eval_loss(val_data);
        } catch (const NumericError& err) {
            rec.failed = true;
            rec.failure_reason = "epoch " + std::to_string(epoch) + " validation: " + err.what();
            restore();
            finish();
            return rec;
        }
        rec.val_loss.push_back(vl);
        if (vl < rec.best_val_loss) {
            rec.best_val_loss = vl;
            rec.best_epoch = epoch;
            snapshot();
        } else if (epoch - rec.best_epoch >= config.patience) {
            break;
        }
    }

    restore();
    finish();
    return rec;
}

void SearchSpace::validate() const {
    if (coupling_blocks_min > coupling_blocks_max || cond_depth_min > cond_depth_max ||
        svdd_depth_min > svdd_depth_max || learning_rate_min > learning_rate_max ||
        batch_sizes.empty() || trials == 0) {
        throw ConfigError("SearchSpace: empty range");
    }
    if (learning_rate_min <= 0.0) throw ConfigError("SearchSpace: learning rate must be positive");
}

TrialSetting sample_setting(const SearchSpace& space, RngStream& stream) {
    TrialSetting s;
    s.coupling_blocks = space.coupling_blocks_min +
                        stream.uniform_index(space.coupling_blocks_max - space.coupling_blocks_min + 1);
    s.cond_depth =
        space.cond_depth_min + stream.uniform_index(space.cond_depth_max - space.cond_depth_min + 1);
    s.svdd_depth =
        space.svdd_depth_min + stream.uniform_index(space.svdd_depth_max - space.svdd_depth_min + 1);
    s.batch_size = space.batch_sizes[stream.uniform_index(space.batch_sizes.size())];
    const double lo = std::log(space.learning_rate_min);
    const double hi = std::log(space.learning_rate_max);
    s.learning_rate = std::exp(lo + (hi - lo) * stream.uniform01());
    return s;
}

HpResult hp_search(const SearchSpace& space,
                   const std::function<TrainRecord(const TrialSetting&)>& run_trial,
                   std::uint64_t master_seed) {
    space.validate();
    RngStream master(master_seed);
    HpResult result;
    double best = std::numeric_limits<double>::infinity();
    bool any_ok = false;
    for (std::size_t trial = 0; trial < space.trials; ++trial) {
        RngStream trial_stream = master.derive(trial + 1);
        TrialSetting setting = sample_setting(space, trial_stream);
        setting.seed = trial_stream.seed();
        TrainRecord rec = run_trial(setting);
        if (rec.failed) {
            ++result.failed_count;
        } else if (rec.best_val_loss < best) {
            best = rec.best_val_loss;
            result.best_trial = trial;
            any_ok = true;
        } else {
            any_ok = true;
        }
        result.settings.push_back(setting);
        result.records.push_back(std::move(rec));
    }
    if (!any_ok) throw Error("hp_search: no viable configuration (all trials failed)");
    return result;
}

std::pair<Tensor, Tensor> split_rows(const Tensor& data, double frac, RngStream& stream) {
    if (frac <= 0.0 || frac >= 1.0) throw ContractError("split_rows: frac must be in (0,1)");
    const std::size_t n = data.rows();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[stream.uniform_index(i)]);
    const std::size_t n1 = static_cast<std::size_t>(frac * static_cast<double>(n));
    Tensor a({n1, data.cols()});
    Tensor b({n - n1, data.cols()});
    for (std::size_t r = 0; r < n; ++r) {
        Tensor& dst = r < n1 ? a : b;
        const std::size_t rr = r < n1 ? r : r - n1;
        for (std::size_t j = 0; j < data.cols(); ++j) dst.at(rr, j) = data.at(idx[r], j);
    }
    return {std::move(a), std::move(b)};
}

std::uint64_t param_checksum(const std::vector<ParamNode*>& params) {
    // FNV-1a over the raw parameter bytes, in declaration order.
    std::uint64_t h = 14695981039346656037ULL;
    for (const ParamNode* p : params) {
        for (double v : p->value.values()) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof(double));
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 1099511628211ULL;
            }
        }
    }
    return h;
}

} // namespace usflab
