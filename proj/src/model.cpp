#include "ga/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace ga {

EncoderConfig EncoderConfig::desk_profile() {
    EncoderConfig cfg;
    cfg.d_model = 16;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.kernel = 8;
    cfg.stride = 8;
    cfg.n_max = 128;
    return cfg;
}

void EncoderConfig::validate() const {
    if (d_model % heads != 0) {
        throw std::invalid_argument("config: d_model must divide across heads");
    }
    if (layers < 1) throw std::invalid_argument("config: need at least one layer");
    if (epsilon <= real(1)) throw std::invalid_argument("config: epsilon must be > 1");
    if (alpha <= real(0) || alpha > real(1)) {
        throw std::invalid_argument("config: alpha must be in (0, 1]");
    }
    if (kernel < 1 || stride < 1) throw std::invalid_argument("config: kernel/stride must be >= 1");
}

EncoderStack::EncoderStack(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    embedder_ = ConvEmbedder::random(cfg.channels, cfg.kernel, cfg.stride, cfg.d_model,
                                     cfg.n_max, rng);
    real sd = real(1) / std::sqrt(static_cast<real>(cfg.d_model));
    blocks_.resize(cfg.layers);
    for (EncoderBlock& b : blocks_) {
        b.w_q = Matrix::random_normal(cfg.d_model, cfg.d_model, 0, sd, rng);
        b.w_k = Matrix::random_normal(cfg.d_model, cfg.d_model, 0, sd, rng);
        b.w_v = Matrix::random_normal(cfg.d_model, cfg.d_model, 0, sd, rng);
        b.ln1_gain = Matrix::filled(1, cfg.d_model, 1);
        b.ln1_bias = Matrix(1, cfg.d_model);
        b.ffn_w1 = Matrix::random_normal(cfg.d_model, 4 * cfg.d_model, 0, sd, rng);
        b.ffn_b1 = Matrix(1, 4 * cfg.d_model);
        b.ffn_w2 = Matrix::random_normal(4 * cfg.d_model, cfg.d_model, 0,
                                         real(1) / std::sqrt(real(4 * cfg.d_model)), rng);
        b.ffn_b2 = Matrix(1, cfg.d_model);
        b.ln2_gain = Matrix::filled(1, cfg.d_model, 1);
        b.ln2_bias = Matrix(1, cfg.d_model);
    }
    sched_.assign(cfg.layers, SchedulerState{cfg.epsilon, cfg.alpha, 0, 0});
    if (cfg.classes > 0) init_classifier(rng);
}

void EncoderStack::init_classifier(Rng& rng) {
    if (cfg_.classes < 1) throw std::invalid_argument("classifier: configure classes first");
    cls_w_ = Matrix::random_normal(cfg_.classes, cfg_.d_model, 0,
                                   real(1) / std::sqrt(real(cfg_.d_model)), rng);
    cls_b_ = Matrix(1, cfg_.classes);
}

namespace {
constexpr std::size_t kEmbedderParams = 6;
constexpr std::size_t kBlockParams = 11;
} // namespace

std::vector<NamedParam> EncoderStack::parameters() {
    std::vector<NamedParam> out;
    out.push_back({"embed.kernels", &embedder_.kernels});
    out.push_back({"embed.bias", &embedder_.bias});
    out.push_back({"embed.positions", &embedder_.positions});
    out.push_back({"embed.cls", &embedder_.cls});
    out.push_back({"embed.dec_kernels", &embedder_.decoder_kernels});
    out.push_back({"embed.dec_bias", &embedder_.decoder_bias});
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        EncoderBlock& b = blocks_[l];
        std::string p = "block" + std::to_string(l) + ".";
        out.push_back({p + "w_q", &b.w_q});
        out.push_back({p + "w_k", &b.w_k});
        out.push_back({p + "w_v", &b.w_v});
        out.push_back({p + "ln1_gain", &b.ln1_gain});
        out.push_back({p + "ln1_bias", &b.ln1_bias});
        out.push_back({p + "ffn_w1", &b.ffn_w1});
        out.push_back({p + "ffn_b1", &b.ffn_b1});
        out.push_back({p + "ffn_w2", &b.ffn_w2});
        out.push_back({p + "ffn_b2", &b.ffn_b2});
        out.push_back({p + "ln2_gain", &b.ln2_gain});
        out.push_back({p + "ln2_bias", &b.ln2_bias});
    }
    if (has_classifier()) {
        out.push_back({"cls.w", &cls_w_});
        out.push_back({"cls.b", &cls_b_});
    }
    return out;
}

std::size_t EncoderStack::layer_groups(std::size_t layer, std::size_t n) const {
    if (cfg_.initial_groups_override > 0) {
        return std::min(cfg_.initial_groups_override, n);
    }
    const SchedulerState& s = sched_[layer];
    if (s.n_current >= real(1)) return std::min(s.target_groups(), n);
    // Not yet initialized; the training loop seeds n/4 capped.
    std::size_t start = std::max<std::size_t>(1, n / 4);
    return std::min(std::min(start, cfg_.initial_groups_cap), n);
}

Value EncoderStack::forward_blocks(Tape& tape, Value embeddings, std::uint64_t step_seed,
                                   LayerGroupInfo* info_out,
                                   const std::vector<Value>& param_leaves) {
    const std::size_t n = tape.value(embeddings).rows();
    Value h = embeddings;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
        std::size_t base = kEmbedderParams + l * kBlockParams;
        AttentionParamRefs refs;
        refs.w_q = param_leaves[base + 0];
        refs.w_k = param_leaves[base + 1];
        refs.w_v = param_leaves[base + 2];
        refs.heads = cfg_.heads;
        refs.scale = real(1) / std::sqrt(static_cast<real>(cfg_.d_model / cfg_.heads));

        GroupForwardInfo info;
        Value attn;
        if (cfg_.mode == AttentionMode::group) {
            GroupAttentionSettings settings;
            settings.n_groups = layer_groups(l, n);
            settings.kmeans_iterations = cfg_.kmeans_iterations;
            settings.seed = step_seed + l * 7919;
            attn = attention_forward(tape, h, refs, &settings, &info);
        } else {
            attn = attention_forward(tape, h, refs, nullptr, nullptr);
        }
        if (info_out) info_out->per_layer.push_back(std::move(info));

        Value h1 = tape.layer_norm_rows(tape.add(h, attn), param_leaves[base + 3],
                                        param_leaves[base + 4]);
        Value ff = tape.relu(
            tape.add_rowvec(tape.matmul(h1, param_leaves[base + 5]), param_leaves[base + 6]));
        ff = tape.add_rowvec(tape.matmul(ff, param_leaves[base + 7]), param_leaves[base + 8]);
        h = tape.layer_norm_rows(tape.add(h1, ff), param_leaves[base + 9],
                                 param_leaves[base + 10]);
    }
    return h;
}

Value EncoderStack::forward_with_params(Tape& tape, const Timeseries& scaled, bool with_cls,
                                        std::uint64_t step_seed,
                                        const std::vector<Value>& param_leaves,
                                        LayerGroupInfo* info_out) {
    Value z = embed_on_tape(tape, scaled, embedder_, param_leaves[0], param_leaves[1],
                            param_leaves[2], param_leaves[3], with_cls);
    return forward_blocks(tape, z, step_seed, info_out, param_leaves);
}

ForwardPass EncoderStack::forward(Tape& tape, const Timeseries& scaled, bool with_cls,
                                  std::uint64_t step_seed) {
    ForwardPass pass;
    for (NamedParam& p : parameters()) pass.params.push_back(tape.input(*p.value));
    pass.embeddings =
        forward_with_params(tape, scaled, with_cls, step_seed, pass.params, &pass.groups);
    return pass;
}

void EncoderStack::seed_scheduler(std::size_t n) {
    for (SchedulerState& s : sched_) {
        if (s.n_current >= real(1)) continue;
        std::size_t start = std::max<std::size_t>(1, n / 4);
        s.n_current = static_cast<real>(std::min(std::min(start, cfg_.initial_groups_cap), n));
    }
}

Matrix EncoderStack::encode(const Timeseries& scaled, bool with_cls, std::uint64_t step_seed) {
    Tape tape;
    ForwardPass pass = forward(tape, scaled, with_cls, step_seed);
    return tape.value(pass.embeddings);
}

Matrix EncoderStack::decode_embeddings(const Matrix& z, std::size_t t) const {
    return decode(z, embedder_, t);
}

Matrix classify_probs(const Matrix& cls_embedding, const Matrix& w, const Matrix& b) {
    Matrix logits = add_rowvec(matmul(cls_embedding, transpose(w)), b);
    return softmax_rows(logits);
}

// ---- checkpointing -----------------------------------------------------------

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    return Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("data").get<std::vector<real>>());
}

} // namespace

std::string EncoderStack::to_json() const {
    nlohmann::json j;
    j["version"] = 1;
    j["config"] = {{"channels", cfg_.channels},
                   {"d_model", cfg_.d_model},
                   {"heads", cfg_.heads},
                   {"layers", cfg_.layers},
                   {"kernel", cfg_.kernel},
                   {"stride", cfg_.stride},
                   {"n_max", cfg_.n_max},
                   {"classes", cfg_.classes},
                   {"mode", cfg_.mode == AttentionMode::group ? "group" : "vanilla"},
                   {"epsilon", cfg_.epsilon},
                   {"alpha", cfg_.alpha},
                   {"kmeans_iterations", cfg_.kmeans_iterations},
                   {"initial_groups_cap", cfg_.initial_groups_cap},
                   {"initial_groups_override", cfg_.initial_groups_override},
                   {"seed", cfg_.seed}};
    if (scaler_.fitted()) {
        j["scaler"] = {{"minimum", scaler_.minimum}, {"range", scaler_.range}};
    }
    j["scheduler"] = nlohmann::json::array();
    for (const SchedulerState& s : sched_) {
        j["scheduler"].push_back({{"epsilon", s.epsilon},
                                  {"alpha", s.alpha},
                                  {"n_current", s.n_current},
                                  {"d_threshold", s.d_threshold}});
    }
    j["weights"] = nlohmann::json::object();
    for (NamedParam& p : const_cast<EncoderStack*>(this)->parameters()) {
        j["weights"][p.name] = matrix_to_json(*p.value);
    }
    return j.dump();
}

EncoderStack EncoderStack::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != 1) {
        throw std::runtime_error("checkpoint: unsupported version");
    }
    const auto& c = j.at("config");
    EncoderConfig cfg;
    cfg.channels = c.at("channels").get<std::size_t>();
    cfg.d_model = c.at("d_model").get<std::size_t>();
    cfg.heads = c.at("heads").get<std::size_t>();
    cfg.layers = c.at("layers").get<std::size_t>();
    cfg.kernel = c.at("kernel").get<std::size_t>();
    cfg.stride = c.at("stride").get<std::size_t>();
    cfg.n_max = c.at("n_max").get<std::size_t>();
    cfg.classes = c.at("classes").get<std::size_t>();
    cfg.mode = c.at("mode").get<std::string>() == "group" ? AttentionMode::group
                                                          : AttentionMode::vanilla;
    cfg.epsilon = c.at("epsilon").get<real>();
    cfg.alpha = c.at("alpha").get<real>();
    cfg.kmeans_iterations = c.at("kmeans_iterations").get<std::size_t>();
    cfg.initial_groups_cap = c.at("initial_groups_cap").get<std::size_t>();
    cfg.initial_groups_override = c.at("initial_groups_override").get<std::size_t>();
    cfg.seed = c.at("seed").get<std::uint64_t>();

    Rng rng(cfg.seed);
    EncoderStack model(cfg, rng);
    if (j.contains("scaler")) {
        model.scaler_.minimum = j["scaler"].at("minimum").get<std::vector<real>>();
        model.scaler_.range = j["scaler"].at("range").get<std::vector<real>>();
    }
    model.sched_.clear();
    for (const auto& s : j.at("scheduler")) {
        model.sched_.push_back(SchedulerState{s.at("epsilon").get<real>(),
                                              s.at("alpha").get<real>(),
                                              s.at("n_current").get<real>(),
                                              s.at("d_threshold").get<real>()});
    }
    for (NamedParam& p : model.parameters()) {
        *p.value = matrix_from_json(j.at("weights").at(p.name));
    }
    return model;
}

void EncoderStack::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out << to_json();
}

EncoderStack EncoderStack::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

} // namespace ga
