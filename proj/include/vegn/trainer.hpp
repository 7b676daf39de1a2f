#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "vegn/graph.hpp"
#include "vegn/metrics.hpp"
#include "vegn/model.hpp"
#include "vegn/rng.hpp"
#include "vegn/tape.hpp"

namespace vegn {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t batch_size = 20480;
    double initial_lr = 0.01;
    std::size_t plateau_patience_epochs = 2;
    double plateau_factor = 0.1;
    double plateau_min_delta = 1e-5;
    double dropout = 0.2;
    std::uint64_t seed = 0;
    GraphMode mode = GraphMode::given;
    double eval_fraction = 0.2;

    void validate() const {
        if (batch_size == 0) throw Error(ErrorKind::contract, "batch_size must be >= 1");
        if (!(initial_lr > 0.0 && initial_lr <= 1.0)) {
            throw Error(ErrorKind::contract, "initial_lr must be in (0,1]");
        }
        if (!(plateau_factor > 0.0 && plateau_factor <= 1.0)) {
            throw Error(ErrorKind::contract, "plateau_factor must be in (0,1]");
        }
        if (plateau_patience_epochs < 1) {
            throw Error(ErrorKind::contract, "plateau_patience_epochs must be >= 1");
        }
        if (dropout < 0.0 || dropout >= 1.0) {
            throw Error(ErrorKind::contract, "dropout must be in [0,1)");
        }
        if (!(eval_fraction > 0.0 && eval_fraction < 1.0)) {
            throw Error(ErrorKind::contract, "eval_fraction must be in (0,1)");
        }
    }
};

struct EpochReport {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double eval_loss = 0.0;
    double eval_auroc = 0.0;
    double lr = 0.0;
};

// Mean binary cross entropy of predictions against {0,1} labels; predictions
// are clamped to [1e-7, 1-1e-7] before the logs.
inline Var bce_loss(Var predictions, const std::vector<double>& labels) {
    Tape& t = *predictions.tape;
    const Tensor& y = predictions.val();
    if (y.cols() != 1 || y.rows() != labels.size()) {
        throw Error(ErrorKind::dimension,
                    "bce_loss: predictions " + y.shape_str() + " vs " +
                        std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) throw Error(ErrorKind::contract, "bce_loss: empty batch");
    for (double c : labels) {
        if (c != 0.0 && c != 1.0) {
            throw Error(ErrorKind::contract, "bce_loss: label outside {0,1}");
        }
    }
    Var c = t.constant(Tensor::column(std::vector<double>(labels)));
    Var yc = clamp(predictions, 1e-7, 1.0 - 1e-7);
    Var one_minus_y = add_scalar(neg(yc), 1.0);
    Var one_minus_c = add_scalar(neg(c), 1.0);
    Var ll = add(mul(c, log(yc)), mul(one_minus_c, log(one_minus_y)));
    return neg(mean_all(ll));
}

// Standard bias-corrected Adam. One state instance per parameter set; t is the
// shared step counter.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double lr = 0.01;
    std::uint64_t t = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;

    static AdamState init(const std::vector<Parameter*>& params, double lr) {
        AdamState s;
        s.lr = lr;
        for (const Parameter* p : params) {
            s.m.emplace_back(p->value.rows(), p->value.cols());
            s.v.emplace_back(p->value.rows(), p->value.cols());
        }
        return s;
    }
};

inline void adam_step(const std::vector<Parameter*>& params, AdamState& state) {
    if (params.size() != state.m.size()) {
        throw Error(ErrorKind::state_corruption, "adam_step: parameter count drifted");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Parameter& p = *params[i];
        if (!p.grad.same_shape(state.m[i])) {
            throw Error(ErrorKind::state_corruption,
                        "adam_step: moment shape " + state.m[i].shape_str() +
                            " does not match parameter '" + p.name + "' " + p.grad.shape_str());
        }
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            const double g = p.grad.values()[k];
            double& m = state.m[i].values()[k];
            double& v = state.v[i].values()[k];
            m = state.beta1 * m + (1.0 - state.beta1) * g;
            v = state.beta2 * v + (1.0 - state.beta2) * g * g;
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            p.value.values()[k] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

// 10-fold reduction after `patience` consecutive epochs without the evaluation
// loss improving on the best seen by at least min_delta.
class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, double factor, std::size_t patience, double min_delta)
        : lr_(initial_lr), factor_(factor), patience_(patience), min_delta_(min_delta) {}

    double step(double eval_loss) {
        if (eval_loss < best_ - min_delta_) {
            best_ = eval_loss;
            bad_epochs_ = 0;
        } else {
            ++bad_epochs_;
            if (bad_epochs_ >= patience_) {
                lr_ *= factor_;
                bad_epochs_ = 0;
            }
        }
        return lr_;
    }

    double lr() const { return lr_; }

private:
    double lr_;
    double factor_;
    std::size_t patience_;
    double min_delta_;
    double best_ = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs_ = 0;
};

// Disjoint, exhaustive split into ceil((1 - eval_fraction) * n) training
// indices and the rest, deterministic under the seed.
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> eval;
};

inline Split split_train_eval(std::size_t n, double eval_fraction, std::uint64_t seed) {
    if (n < 2) throw Error(ErrorKind::contract, "split_train_eval needs at least 2 variants");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto rng = make_rng(seed, "split");
    std::shuffle(order.begin(), order.end(), rng);
    const auto train_n = static_cast<std::size_t>(
        std::ceil((1.0 - eval_fraction) * static_cast<double>(n)));
    Split s;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_n));
    s.eval.assign(order.begin() + static_cast<std::ptrdiff_t>(train_n), order.end());
    return s;
}

// Labeling policy: benign -> 0, pathogenic -> 1, unlabeled -> 1 (rare variants
// act as proxy pathogenic) on both splits.
inline double effective_label(Label l) { return l == Label::benign ? 0.0 : 1.0; }

struct TrainResult {
    ModelParams params;
    std::vector<EpochReport> reports;
    Split split;
};

namespace detail {

inline double eval_bce_value(const Tensor& y, const std::vector<std::size_t>& subset,
                             const std::vector<double>& labels) {
    double acc = 0.0;
    for (std::size_t idx : subset) {
        const double p = std::clamp(y.at(idx, 0), 1e-7, 1.0 - 1e-7);
        acc -= labels[idx] * std::log(p) + (1.0 - labels[idx]) * std::log(1.0 - p);
    }
    return acc / static_cast<double>(subset.size());
}

}  // namespace detail

// The full recipe: shuffled mini-batches over the training split (the forward
// pass always runs on the whole graph; the loss is restricted to the batch),
// Adam updates, per-epoch evaluation loss + auROC on the held-out split, and
// the plateau scheduler driving the learning rate.
inline TrainResult train(const HeteroGraph& graph, const TrainConfig& config,
                         const ModelConfig& model_config) {
    config.validate();
    if (model_config.mode != config.mode) {
        throw Error(ErrorKind::contract, "train: model_config.mode differs from config.mode");
    }

    TrainResult result;
    result.params = ModelParams::init(model_config, graph.gene_vocabulary(), config.seed);
    if (graph.variant_count() < 2) {
        throw Error(ErrorKind::contract, "train needs at least 2 variants");
    }
    result.split = split_train_eval(graph.variant_count(), config.eval_fraction, config.seed);

    std::vector<double> labels(graph.variant_count());
    for (std::size_t i = 0; i < graph.variant_count(); ++i) {
        labels[i] = effective_label(graph.variants()[i].label);
    }

    auto params = result.params.parameters();
    AdamState adam = AdamState::init(params, config.initial_lr);
    PlateauScheduler scheduler(config.initial_lr, config.plateau_factor,
                               config.plateau_patience_epochs, config.plateau_min_delta);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::vector<std::size_t> order = result.split.train;
        auto shuffle_rng = make_rng(config.seed, "shuffle", epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        double epoch_loss = 0.0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(start + config.batch_size, order.size());
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<double> batch_labels;
            batch_labels.reserve(batch.size());
            for (std::size_t idx : batch) batch_labels.push_back(labels[idx]);

            double loss_value = 0.0;
            try {
                Tape tape;
                ForwardOptions opts;
                opts.training = true;
                opts.dropout_seed = seed_stream(config.seed, "dropout", epoch, batch_index);
                Var y = model_forward(tape, graph, result.params, opts);
                Var loss = bce_loss(gather_rows(y, batch), batch_labels);
                loss_value = loss.val().item();
                result.params.zero_grad();
                tape.backward(loss);
            } catch (const Error& e) {
                if (e.kind() == ErrorKind::non_finite) {
                    throw Error(ErrorKind::divergence,
                                "training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(batch_index) + ": " + e.what());
                }
                throw;
            }
            if (!std::isfinite(loss_value)) {
                throw Error(ErrorKind::divergence,
                            "training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                std::to_string(batch_index));
            }
            adam.lr = scheduler.lr();
            adam_step(params, adam);
            epoch_loss += loss_value * static_cast<double>(batch.size());
            ++batch_index;
        }
        epoch_loss /= static_cast<double>(order.size());

        // Evaluation pass, dropout off.
        Tape eval_tape;
        Var y = model_forward(eval_tape, graph, result.params, ForwardOptions{});
        const Tensor& yv = y.val();
        const double eval_loss = detail::eval_bce_value(yv, result.split.eval, labels);
        std::vector<ScoredLabel> scored;
        scored.reserve(result.split.eval.size());
        for (std::size_t idx : result.split.eval) {
            scored.push_back(ScoredLabel{yv.at(idx, 0), labels[idx] == 1.0 ? 1 : 0});
        }
        const double eval_auc = auroc(scored);
        const double lr_after = scheduler.step(eval_loss);

        result.reports.push_back(EpochReport{epoch, epoch_loss, eval_loss, eval_auc, lr_after});
    }
    return result;
}

}  // namespace vegn
