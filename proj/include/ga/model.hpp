#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ga/attention.hpp"
#include "ga/embedder.hpp"
#include "ga/scheduler.hpp"

namespace ga {

enum class AttentionMode { vanilla, group };

struct EncoderConfig {
    std::size_t channels = 1;
    std::size_t d_model = 64;
    std::size_t heads = 2;
    std::size_t layers = 8;
    std::size_t kernel = 5;
    std::size_t stride = 5;
    std::size_t n_max = 256;
    std::size_t classes = 0; // 0 = no classifier head
    AttentionMode mode = AttentionMode::group;
    real epsilon = 2;
    real alpha = 0.9;
    std::size_t kmeans_iterations = 2;
    /// Starting group count: n/4 capped here; 0 lets tests pin N = n.
    std::size_t initial_groups_cap = 1024;
    std::size_t initial_groups_override = 0;
    std::uint64_t seed = 42;

    /// Small profile used by tests and desk experiments.
    static EncoderConfig desk_profile();
    void validate() const;
};

struct EncoderBlock {
    Matrix w_q, w_k, w_v;
    Matrix ln1_gain, ln1_bias;
    Matrix ffn_w1, ffn_b1; // d -> 4d
    Matrix ffn_w2, ffn_b2; // 4d -> d
    Matrix ln2_gain, ln2_bias;
};

struct NamedParam {
    std::string name;
    Matrix* value;
};

/// Per-sample forward diagnostics (group mode).
struct LayerGroupInfo {
    std::vector<GroupForwardInfo> per_layer;
};

/// Values of interest from one tape forward pass.
struct ForwardPass {
    Value embeddings;          // final hidden states, CLS row first when requested
    std::vector<Value> params; // leaf per parameter, same order as parameters()
    LayerGroupInfo groups;
};

/// Transformer encoder over window embeddings: per block, attention with a
/// residual add and layer norm, then a two-layer feed-forward (hidden 4d)
/// with another residual add and layer norm.
class EncoderStack {
  public:
    EncoderStack() = default;
    EncoderStack(const EncoderConfig& cfg, Rng& rng);

    const EncoderConfig& config() const { return cfg_; }
    EncoderConfig& config() { return cfg_; }
    const ConvEmbedder& embedder() const { return embedder_; }
    ChannelScaler& scaler() { return scaler_; }
    const ChannelScaler& scaler() const { return scaler_; }
    std::vector<SchedulerState>& scheduler_states() { return sched_; }
    const std::vector<SchedulerState>& scheduler_states() const { return sched_; }

    /// All trainable weights, stable order.
    std::vector<NamedParam> parameters();

    /// Build the full forward (embed -> blocks) on a tape. The input series
    /// must already be scaled/masked. `step_seed` feeds per-pass clustering.
    ForwardPass forward(Tape& tape, const Timeseries& scaled, bool with_cls,
                        std::uint64_t step_seed);

    /// Forward reusing existing parameter leaves (one leaf set per batch).
    Value forward_with_params(Tape& tape, const Timeseries& scaled, bool with_cls,
                              std::uint64_t step_seed, const std::vector<Value>& param_leaves,
                              LayerGroupInfo* info_out);

    /// Initialize per-layer group counts to n/4 (capped) if not yet set.
    void seed_scheduler(std::size_t n);

    /// Encoder blocks only, starting from given embeddings (benchmark entry).
    Value forward_blocks(Tape& tape, Value embeddings, std::uint64_t step_seed,
                         LayerGroupInfo* info_out, const std::vector<Value>& param_leaves);

    /// Group count requested for layer `layer` at sequence length n.
    std::size_t layer_groups(std::size_t layer, std::size_t n) const;

    /// Plain (tape-free) convenience: final embeddings for a scaled series.
    Matrix encode(const Timeseries& scaled, bool with_cls, std::uint64_t step_seed = 0);

    /// Decode embeddings (without CLS row) back to a t x m frame.
    Matrix decode_embeddings(const Matrix& z, std::size_t t) const;

    /// Classifier head init (requires cfg.classes > 0).
    void init_classifier(Rng& rng);
    bool has_classifier() const { return cls_w_.rows() > 0; }
    const Matrix& classifier_weights() const { return cls_w_; }
    const Matrix& classifier_bias() const { return cls_b_; }

    /// Checkpoint round-trip; restores bit-identical evaluation.
    std::string to_json() const;
    static EncoderStack from_json(const std::string& text);
    void save(const std::string& path) const;
    static EncoderStack load(const std::string& path);

  private:
    EncoderConfig cfg_;
    ConvEmbedder embedder_;
    std::vector<EncoderBlock> blocks_;
    Matrix cls_w_; // classes x d
    Matrix cls_b_; // 1 x classes
    std::vector<SchedulerState> sched_;
    ChannelScaler scaler_;
};

/// Softmax(W z + b) for a 1 x d CLS embedding; returns 1 x C probabilities.
Matrix classify_probs(const Matrix& cls_embedding, const Matrix& w, const Matrix& b);

} // namespace ga
