#include "ga/train.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>
#include <stdexcept>

namespace ga {

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (learning_rate <= real(0)) throw std::invalid_argument("train: learning_rate must be > 0");
    if (mask_rate < real(0) || mask_rate >= real(1)) {
        throw std::invalid_argument("train: mask_rate must be in [0, 1)");
    }
    if (epsilon <= real(1)) throw std::invalid_argument("train: epsilon must be > 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (policy == BatchPolicy::planned && plan == nullptr) {
        throw std::invalid_argument("train: planned batch policy needs a plan");
    }
}

AdamW::AdamW(real learning_rate, real weight_decay, real beta1, real beta2, real eps)
    : lr_(learning_rate), wd_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step(std::vector<NamedParam>& params, const std::vector<Matrix>& grads) {
    step_filtered(params, grads, [](const std::string&) { return true; });
}

void AdamW::step_filtered(std::vector<NamedParam>& params, const std::vector<Matrix>& grads,
                          const std::function<bool(const std::string&)>& train_this) {
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = Matrix(params[i].value->rows(), params[i].value->cols());
            v_[i] = Matrix(params[i].value->rows(), params[i].value->cols());
        }
    }
    ++t_;
    real bc1 = real(1) - std::pow(beta1_, static_cast<real>(t_));
    real bc2 = real(1) - std::pow(beta2_, static_cast<real>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!train_this(params[i].name)) continue;
        Matrix& p = *params[i].value;
        const Matrix& g = grads[i];
        for (std::size_t k = 0; k < p.size(); ++k) {
            real gk = g.data()[k];
            real& mk = m_[i].data()[k];
            real& vk = v_[i].data()[k];
            mk = beta1_ * mk + (real(1) - beta1_) * gk;
            vk = beta2_ * vk + (real(1) - beta2_) * gk * gk;
            real mhat = mk / bc1;
            real vhat = vk / bc2;
            // Decoupled weight decay.
            p.data()[k] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * p.data()[k]);
        }
    }
}

namespace {

std::size_t effective_batch(const TrainConfig& cfg, const EncoderStack& model, std::size_t n) {
    if (cfg.policy == BatchPolicy::fixed) return cfg.batch_size;
    const BatchPlan& plan = *cfg.plan;
    std::size_t length = std::min(std::max<std::size_t>(n, 1), plan.l_max);
    real avg = 0;
    for (const SchedulerState& s : model.scheduler_states())
        avg += std::max(real(1), s.n_current);
    avg /= static_cast<real>(model.scheduler_states().size());
    std::size_t groups = std::min<std::size_t>(
        std::max<std::size_t>(static_cast<std::size_t>(std::round(avg)), 1), length);
    return std::max<std::size_t>(1, predict_batch(plan, length, groups));
}

std::vector<Matrix> collect_grads(Tape& tape, const std::vector<Value>& leaves) {
    std::vector<Matrix> grads;
    grads.reserve(leaves.size());
    for (Value v : leaves) grads.push_back(tape.grad(v));
    return grads;
}

} // namespace

PretrainResult pretrain(EncoderStack& model, const std::vector<Timeseries>& raw,
                        const TrainConfig& cfg) {
    cfg.validate();
    if (raw.empty()) throw std::invalid_argument("pretrain: empty dataset");
    if (!model.scaler().fitted()) model.scaler().fit(raw);

    std::vector<Timeseries> scaled;
    scaled.reserve(raw.size());
    for (const Timeseries& ts : raw) scaled.push_back(model.scaler().apply(ts));

    const bool group_mode = model.config().mode == AttentionMode::group;
    const std::size_t n_tokens = model.embedder().output_windows(scaled.front().length()) + 1;
    if (group_mode) model.seed_scheduler(n_tokens);

    AdamW opt(cfg.learning_rate, cfg.weight_decay);
    Rng rng(cfg.seed);
    PretrainResult result;
    bool warned = false;
    std::uint64_t mask_counter = 0;

    auto params = model.parameters();
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(scaled.size());
        std::iota(order.begin(), order.end(), std::size_t(0));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        real epoch_loss = 0;
        std::size_t epoch_batches = 0;
        LayerGroupInfo last_info;

        std::size_t batch = effective_batch(cfg, model, n_tokens);
        for (std::size_t start = 0; start < order.size(); start += batch) {
            std::size_t stop = std::min(order.size(), start + batch);
            Tape tape;
            std::vector<Value> leaves;
            leaves.reserve(params.size());
            for (NamedParam& p : params) leaves.push_back(tape.input(*p.value));

            Value total;
            std::size_t used = 0;
            for (std::size_t b = start; b < stop; ++b) {
                const Timeseries& clean = scaled[order[b]];
                Timeseries masked =
                    mask_timestamps(clean, cfg.mask_rate, cfg.seed ^ (0xABCDull + ++mask_counter));
                if (masked.missing_count() == 0) {
                    if (!warned) {
                        std::cerr << "pretrain: sample with no masked positions, skipping\n";
                        warned = true;
                    }
                    ++result.skipped_samples;
                    continue;
                }
                LayerGroupInfo info;
                Value h = model.forward_with_params(tape, masked, true,
                                                    cfg.seed + epoch * 1009 + b, leaves, &info);
                Value z = tape.slice_rows(h, 1, tape.value(h).rows()); // drop CLS
                Value y = decode_on_tape(tape, z, model.embedder(), leaves[4], leaves[5],
                                         clean.length());
                Value diff = tape.sub(y, tape.input(clean.values));
                Value sq = tape.mul(diff, diff);
                Value sel = tape.mul_const(sq, masked.missing_mask());
                Value loss_i = tape.scale(tape.sum_all(sel),
                                          real(1) / static_cast<real>(masked.missing_count()));
                total = used == 0 ? loss_i : tape.add(total, loss_i);
                ++used;
                if (group_mode) last_info = std::move(info);
            }
            if (used == 0) continue;
            Value loss = tape.scale(total, real(1) / static_cast<real>(used));
            tape.backward(loss);
            auto grads = collect_grads(tape, leaves);
            opt.step(params, grads);
            epoch_loss += tape.value(loss)(0, 0);
            ++epoch_batches;
        }
        result.loss_curve.push_back(epoch_batches ? epoch_loss / static_cast<real>(epoch_batches)
                                                  : real(0));

        if (group_mode && cfg.run_scheduler && !last_info.per_layer.empty()) {
            auto& states = model.scheduler_states();
            for (std::size_t l = 0; l < states.size(); ++l) {
                const GroupForwardInfo& gi = last_info.per_layer[l];
                if (gi.per_head.empty()) continue;
                real before = states[l].n_current;
                SchedulerStepResult step =
                    scheduler_step_heads(states[l], gi.per_head, gi.keys_per_head);
                result.trace.push_back(
                    {epoch, l, before, states[l].n_current, step.d_threshold, step.merged});
            }
        }
    }
    return result;
}

namespace {

Matrix onehot_rows(const std::vector<std::size_t>& labels, std::size_t classes) {
    Matrix m(labels.size(), classes);
    for (std::size_t i = 0; i < labels.size(); ++i) m(i, labels[i]) = real(1);
    return m;
}

} // namespace

real evaluate_accuracy(EncoderStack& model, const LabeledSet& set) {
    if (set.series.empty()) return 0;
    if (!model.has_classifier()) throw std::invalid_argument("evaluate: no classifier head");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < set.series.size(); ++i) {
        Timeseries scaled = model.scaler().apply(set.series[i]);
        Matrix h = model.encode(scaled, true);
        Matrix probs = classify_probs(slice_rows(h, 0, 1), model.classifier_weights(),
                                      model.classifier_bias());
        std::size_t arg = 0;
        for (std::size_t c = 1; c < probs.cols(); ++c)
            if (probs(0, c) > probs(0, arg)) arg = c;
        hits += arg == set.labels[i] ? 1 : 0;
    }
    return static_cast<real>(hits) / static_cast<real>(set.series.size());
}

FinetuneResult finetune(EncoderStack& model, const LabeledSet& train, const LabeledSet& eval,
                        const TrainConfig& cfg) {
    cfg.validate();
    if (train.series.empty()) throw std::invalid_argument("finetune: empty training set");
    if (model.config().classes < 1) {
        throw std::invalid_argument("finetune: model has no class count configured");
    }
    const std::size_t classes = model.config().classes;
    for (std::size_t lbl : train.labels) {
        if (lbl >= classes) throw std::invalid_argument("finetune: label out of range");
    }
    {
        std::set<std::size_t> present(train.labels.begin(), train.labels.end());
        if (present.size() < classes) {
            std::cerr << "finetune: " << classes - present.size()
                      << " class(es) absent from the training labels\n";
        }
    }
    if (!model.scaler().fitted()) model.scaler().fit(train.series);
    if (!model.has_classifier()) {
        Rng rng(cfg.seed ^ 0xC1A55ull);
        model.init_classifier(rng);
    }

    std::vector<Timeseries> scaled;
    scaled.reserve(train.series.size());
    for (const Timeseries& ts : train.series) scaled.push_back(model.scaler().apply(ts));

    AdamW opt(cfg.learning_rate, cfg.weight_decay);
    Rng rng(cfg.seed);
    FinetuneResult result;
    auto params = model.parameters();
    const std::size_t cls_w_index = params.size() - 2; // cls.w, cls.b at the end

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(scaled.size());
        std::iota(order.begin(), order.end(), std::size_t(0));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

        real epoch_loss = 0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            Tape tape;
            std::vector<Value> leaves;
            for (NamedParam& p : params) leaves.push_back(tape.input(*p.value));

            Value logits;
            std::vector<std::size_t> batch_labels;
            for (std::size_t b = start; b < stop; ++b) {
                Value h = model.forward_with_params(tape, scaled[order[b]], true,
                                                    cfg.seed + epoch * 1009 + b, leaves, nullptr);
                Value cls_row = tape.slice_rows(h, 0, 1);
                Value row_logits = tape.add_rowvec(
                    tape.matmul(cls_row, tape.transpose(leaves[cls_w_index])),
                    leaves[cls_w_index + 1]);
                logits = batch_labels.empty() ? row_logits : tape.concat_rows(logits, row_logits);
                batch_labels.push_back(train.labels[order[b]]);
            }
            Value loss = tape.cross_entropy_mean(logits, onehot_rows(batch_labels, classes));
            tape.backward(loss);
            auto grads = collect_grads(tape, leaves);
            if (cfg.freeze_encoder) {
                opt.step_filtered(params, grads, [](const std::string& name) {
                    return name.rfind("cls.", 0) == 0;
                });
            } else {
                opt.step(params, grads);
            }
            epoch_loss += tape.value(loss)(0, 0);
            ++batches;
        }
        result.loss_curve.push_back(batches ? epoch_loss / static_cast<real>(batches) : real(0));
    }

    result.accuracy = evaluate_accuracy(model, eval);
    return result;
}

ImputeResult impute(EncoderStack& model, const Timeseries& observed_scaled,
                    const Timeseries* truth_scaled) {
    ImputeResult result;
    result.completed = observed_scaled;
    if (!observed_scaled.has_missing()) return result;

    Matrix h = model.encode(observed_scaled, true);
    Matrix z = slice_rows(h, 1, h.rows());
    Matrix decoded = model.decode_embeddings(z, observed_scaled.length());
    ensure_finite(decoded, "impute");

    for (auto [t, c] : observed_scaled.missing_positions()) {
        result.completed.values(t, c) = decoded(t, c);
        if (truth_scaled) {
            real d = decoded(t, c) - truth_scaled->values(t, c);
            result.masked_mse += d * d;
            ++result.scored;
        }
    }
    if (result.scored > 0) result.masked_mse /= static_cast<real>(result.scored);
    return result;
}

ForecastResult forecast(EncoderStack& model, const Timeseries& scaled, std::size_t horizon) {
    const std::size_t t = scaled.length();
    if (horizon >= t) {
        throw std::invalid_argument("forecast: horizon " + std::to_string(horizon) +
                                    " must be smaller than the series length " +
                                    std::to_string(t));
    }
    ForecastResult result;
    if (horizon == 0) {
        result.tail = Matrix(0, scaled.channels());
        result.completed = scaled;
        return result;
    }
    Timeseries masked = scaled;
    for (std::size_t i = t - horizon; i < t; ++i) {
        for (std::size_t c = 0; c < scaled.channels(); ++c) {
            masked.values(i, c) = kMissingSentinel;
            masked.set_missing(i, c);
        }
    }
    ImputeResult imp = impute(model, masked, nullptr);
    result.completed = imp.completed;
    result.tail = slice_rows(imp.completed.values, t - horizon, t);
    return result;
}

} // namespace ga
