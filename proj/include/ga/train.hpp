#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ga/batch_planner.hpp"
#include "ga/model.hpp"

namespace ga {

enum class BatchPolicy { fixed, planned };

struct TrainConfig {
    std::size_t epochs = 100;
    real learning_rate = real(1e-4);
    real weight_decay = real(1e-4);
    real mask_rate = real(0.2);
    real alpha = real(0.9);
    real epsilon = 2;
    std::uint64_t seed = 42;
    BatchPolicy policy = BatchPolicy::fixed;
    std::size_t batch_size = 8;
    const BatchPlan* plan = nullptr; // required for the planned policy
    bool freeze_encoder = false;
    bool run_scheduler = true; // group mode only

    void validate() const;
};

/// Decoupled-weight-decay Adam over the model's parameter list.
class AdamW {
  public:
    AdamW(real learning_rate, real weight_decay, real beta1 = real(0.9), real beta2 = real(0.999),
          real eps = real(1e-8));
    void step(std::vector<NamedParam>& params, const std::vector<Matrix>& grads);
    /// Apply the update only to parameters whose name passes the filter.
    void step_filtered(std::vector<NamedParam>& params, const std::vector<Matrix>& grads,
                       const std::function<bool(const std::string&)>& train_this);

  private:
    real lr_, wd_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<Matrix> m_, v_;
};

struct SchedulerTraceRow {
    std::size_t epoch = 0;
    std::size_t layer = 0;
    real n_before = 0;
    real n_after = 0;
    real d_threshold = 0;
    std::size_t merged = 0;
};

struct PretrainResult {
    std::vector<real> loss_curve; // mean masked MSE per epoch
    std::vector<SchedulerTraceRow> trace;
    std::size_t skipped_samples = 0; // samples with no masked position
};

/// Mask-and-predict pretraining: per sample, mask timestamps at the
/// configured rate, encode, decode, and score MSE on the masked positions
/// only. Runs the adaptive scheduler once per epoch per layer in group mode.
PretrainResult pretrain(EncoderStack& model, const std::vector<Timeseries>& raw,
                        const TrainConfig& cfg);

struct LabeledSet {
    std::vector<Timeseries> series;
    std::vector<std::size_t> labels;
};

struct FinetuneResult {
    std::vector<real> loss_curve;
    real accuracy = 0; // on the eval split
};

/// Cross-entropy training of the CLS head (optionally with the encoder
/// unfrozen, the default); reports held-out accuracy.
FinetuneResult finetune(EncoderStack& model, const LabeledSet& train, const LabeledSet& eval,
                        const TrainConfig& cfg);

/// Accuracy of the current model on a labeled set (scaled internally).
real evaluate_accuracy(EncoderStack& model, const LabeledSet& set);

struct ImputeResult {
    Timeseries completed;     // observed cells passed through, missing filled
    real masked_mse = 0;      // against truth when provided
    std::size_t scored = 0;   // number of missing cells scored
};

/// Fill the missing cells of an already-scaled series with decoded values.
ImputeResult impute(EncoderStack& model, const Timeseries& observed_scaled,
                    const Timeseries* truth_scaled = nullptr);

struct ForecastResult {
    Matrix tail;          // horizon x channels prediction
    Timeseries completed; // full series with the tail filled in
};

/// Forecast = imputation with a trailing mask over the last `horizon` steps.
ForecastResult forecast(EncoderStack& model, const Timeseries& scaled, std::size_t horizon);

} // namespace ga
