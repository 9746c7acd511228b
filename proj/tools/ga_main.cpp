// Command-line driver: synthetic data generation, pretraining, finetuning,
// imputation, forecasting, the attention scaling benchmark, and offline batch
// planning. Every run writes a manifest with the fully resolved configuration;
// identical configurations produce byte-identical metric files (timing files
// excepted).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ga/batch_planner.hpp"
#include "ga/bench.hpp"
#include "ga/model.hpp"
#include "ga/synthetic.hpp"
#include "ga/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

/// A configuration value failed validation; exits with code 1 and a message
/// naming the offending field.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

std::string fmt_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- flat key = value config files -------------------------------------------

std::map<std::string, std::string> read_flat_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open file " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            auto b = s.find_first_not_of(" \t\r");
            auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = value;
    }
    return kv;
}

/// Merge precedence: command-line flag > GA_SEED env (seed only) > config file.
class OptionMerger {
  public:
    OptionMerger(CLI::App* cmd, std::map<std::string, std::string> kv)
        : cmd_(cmd), kv_(std::move(kv)) {}

    void apply(const std::string& key, std::string& target) {
        if (given(key)) return;
        if (auto it = kv_.find(key); it != kv_.end()) target = it->second;
    }
    void apply(const std::string& key, std::size_t& target) {
        if (given(key)) return;
        if (auto it = kv_.find(key); it != kv_.end()) target = parse_u64(key, it->second);
    }
    void apply(const std::string& key, double& target) {
        if (given(key)) return;
        if (auto it = kv_.find(key); it != kv_.end()) target = parse_double(key, it->second);
    }
    void apply(const std::string& key, bool& target) {
        if (given(key)) return;
        if (auto it = kv_.find(key); it != kv_.end())
            target = it->second == "1" || it->second == "true" || it->second == "yes";
    }
    void apply_seed(std::uint64_t& seed) {
        if (given("seed")) return;
        if (const char* env = std::getenv("GA_SEED")) {
            seed = parse_u64("GA_SEED", env);
            return;
        }
        if (auto it = kv_.find("seed"); it != kv_.end()) seed = parse_u64("seed", it->second);
    }

  private:
    bool given(const std::string& key) const {
        const CLI::Option* opt = cmd_->get_option_no_throw("--" + key);
        return opt != nullptr && opt->count() > 0;
    }
    static std::uint64_t parse_u64(const std::string& key, const std::string& s) {
        try {
            return std::stoull(s);
        } catch (const std::exception&) {
            throw ConfigError("config: field " + key + " must be an unsigned integer, got '" + s +
                              "'");
        }
    }
    static double parse_double(const std::string& key, const std::string& s) {
        try {
            return std::stod(s);
        } catch (const std::exception&) {
            throw ConfigError("config: field " + key + " must be a number, got '" + s + "'");
        }
    }

    CLI::App* cmd_;
    std::map<std::string, std::string> kv_;
};

// ---- output helpers -----------------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_manifest(const fs::path& dir, const std::string& command, const json& resolved) {
    json manifest;
    manifest["artifact"] = "group-attention-timeseries";
    manifest["version"] = kVersion;
    manifest["command"] = command;
    manifest["config"] = resolved;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---- dataset I/O ----------------------------------------------------------------

struct DiskDataset {
    std::vector<ga::Timeseries> series;
    std::vector<std::size_t> labels; // empty when unlabeled
};

DiskDataset load_dataset(const std::string& dir, bool need_labels) {
    if (!fs::exists(dir)) throw ConfigError("data: path does not exist: " + dir);
    DiskDataset ds;
    fs::path index = fs::path(dir) / "labels.csv";
    if (fs::exists(index)) {
        std::ifstream in(index);
        std::string line;
        bool header = true;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            if (header) {
                header = false;
                continue;
            }
            auto comma = line.rfind(',');
            std::string file = line.substr(0, comma);
            std::size_t label = std::stoull(line.substr(comma + 1));
            ds.series.push_back(ga::load_timeseries_csv((fs::path(dir) / file).string()));
            ds.labels.push_back(label);
        }
    } else {
        if (need_labels) throw ConfigError("data: no labels.csv index in " + dir);
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() == ".csv") files.push_back(entry.path());
        }
        std::sort(files.begin(), files.end());
        for (const fs::path& f : files) ds.series.push_back(ga::load_timeseries_csv(f.string()));
    }
    if (ds.series.empty()) throw ConfigError("data: no series found in " + dir);
    return ds;
}

// ---- commands -------------------------------------------------------------------

struct GenArgs {
    std::string kind = "classification";
    std::size_t t = 128, m = 1, classes = 3, samples = 20;
    double sigma = 0.1;
    std::uint64_t seed = 7;
    std::string out = "out";
};

int cmd_gen(const GenArgs& a) {
    if (a.kind != "classification" && a.kind != "imputation") {
        throw ConfigError("kind: must be 'classification' or 'imputation'");
    }
    if (a.t < 10) throw ConfigError("t: series length must be at least twice the kernel size");
    if (a.m < 1) throw ConfigError("m: need at least one channel");
    if (a.classes < 1) throw ConfigError("classes: need at least one class");
    if (a.samples < 1) throw ConfigError("samples: need at least one sample");

    fs::create_directories(a.out);
    std::vector<ga::Timeseries> series;
    std::vector<std::size_t> labels;
    if (a.kind == "classification") {
        ga::SyntheticSpec spec;
        spec.length = a.t;
        spec.channels = a.m;
        spec.classes = a.classes;
        spec.samples_per_class = a.samples;
        spec.noise_sigma = static_cast<ga::real>(a.sigma);
        spec.seed = a.seed;
        ga::LabeledSet set = ga::gen_classification(spec);
        series = std::move(set.series);
        labels = std::move(set.labels);
    } else {
        series = ga::gen_imputation(a.t, a.m, a.samples, static_cast<ga::real>(a.sigma), a.seed);
        labels.assign(series.size(), 0);
    }

    std::ostringstream index;
    index << "file,label\n";
    for (std::size_t i = 0; i < series.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "sample_%04zu.csv", i);
        ga::save_timeseries_csv(series[i], (fs::path(a.out) / name).string());
        index << name << "," << labels[i] << "\n";
    }
    write_text(fs::path(a.out) / "labels.csv", index.str());

    json resolved{{"kind", a.kind},       {"t", a.t},
                  {"m", a.m},             {"classes", a.classes},
                  {"samples", a.samples}, {"sigma", a.sigma},
                  {"seed", a.seed},       {"out", a.out}};
    write_manifest(a.out, "gen", resolved);
    std::cout << "wrote " << series.size() << " series to " << a.out << "\n";
    return 0;
}

struct TrainArgs {
    std::string data;
    std::string out = "out";
    std::string checkpoint_in;
    std::string mode = "group";
    std::size_t epochs = 100;
    double lr = 1e-4, wd = 1e-4, mask_rate = 0.2, epsilon = 2.0, alpha = 0.9;
    std::size_t layers = 8, d = 64, heads = 2, kernel = 5, stride = 0, nmax = 256, batch = 8;
    std::size_t classes = 0;
    double eval_frac = 0.25;
    bool freeze = false;
    std::string plan_path;
    std::string policy = "fixed";
    std::uint64_t seed = 42;
};

ga::EncoderStack build_model(const TrainArgs& a, std::size_t channels) {
    ga::EncoderConfig cfg;
    cfg.channels = channels;
    cfg.d_model = a.d;
    cfg.heads = a.heads;
    cfg.layers = a.layers;
    cfg.kernel = a.kernel;
    cfg.stride = a.stride == 0 ? a.kernel : a.stride;
    cfg.n_max = a.nmax;
    cfg.classes = a.classes;
    cfg.mode = a.mode == "vanilla" ? ga::AttentionMode::vanilla : ga::AttentionMode::group;
    cfg.epsilon = static_cast<ga::real>(a.epsilon);
    cfg.alpha = static_cast<ga::real>(a.alpha);
    cfg.seed = a.seed;
    ga::Rng rng(a.seed);
    return ga::EncoderStack(cfg, rng);
}

ga::TrainConfig to_train_config(const TrainArgs& a, const ga::BatchPlan* plan) {
    ga::TrainConfig cfg;
    cfg.epochs = a.epochs;
    cfg.learning_rate = static_cast<ga::real>(a.lr);
    cfg.weight_decay = static_cast<ga::real>(a.wd);
    cfg.mask_rate = static_cast<ga::real>(a.mask_rate);
    cfg.epsilon = static_cast<ga::real>(a.epsilon);
    cfg.alpha = static_cast<ga::real>(a.alpha);
    cfg.seed = a.seed;
    cfg.batch_size = a.batch;
    cfg.freeze_encoder = a.freeze;
    if (a.policy == "planned") {
        cfg.policy = ga::BatchPolicy::planned;
        cfg.plan = plan;
    }
    return cfg;
}

json train_args_json(const TrainArgs& a, const char* command) {
    return json{{"command", command},
                {"data", a.data},
                {"out", a.out},
                {"mode", a.mode},
                {"epochs", a.epochs},
                {"lr", a.lr},
                {"wd", a.wd},
                {"mask_rate", a.mask_rate},
                {"epsilon", a.epsilon},
                {"alpha", a.alpha},
                {"layers", a.layers},
                {"d", a.d},
                {"heads", a.heads},
                {"kernel", a.kernel},
                {"stride", a.stride},
                {"nmax", a.nmax},
                {"batch", a.batch},
                {"classes", a.classes},
                {"policy", a.policy},
                {"plan", a.plan_path},
                {"freeze", a.freeze},
                {"eval_frac", a.eval_frac},
                {"checkpoint", a.checkpoint_in},
                {"seed", a.seed}};
}

int cmd_pretrain(const TrainArgs& a) {
    if (a.mode != "vanilla" && a.mode != "group") {
        throw ConfigError("mode: must be 'vanilla' or 'group'");
    }
    DiskDataset ds = load_dataset(a.data, false);

    std::optional<ga::BatchPlan> plan;
    if (a.policy == "planned") {
        if (a.plan_path.empty()) throw ConfigError("plan: planned policy needs --plan");
        std::ifstream in(a.plan_path);
        if (!in) throw ConfigError("plan: cannot open " + a.plan_path);
        std::stringstream ss;
        ss << in.rdbuf();
        plan = ga::plan_from_json(ss.str());
    } else if (a.policy != "fixed") {
        throw ConfigError("policy: must be 'fixed' or 'planned'");
    }

    ga::EncoderStack model = a.checkpoint_in.empty()
                                 ? build_model(a, ds.series.front().channels())
                                 : ga::EncoderStack::load(a.checkpoint_in);
    ga::TrainConfig cfg = to_train_config(a, plan ? &*plan : nullptr);
    ga::PretrainResult res = ga::pretrain(model, ds.series, cfg);

    fs::create_directories(a.out);
    model.save((fs::path(a.out) / "checkpoint.json").string());

    std::ostringstream metrics;
    metrics << "epoch,loss\n";
    for (std::size_t e = 0; e < res.loss_curve.size(); ++e)
        metrics << e << "," << fmt_real(res.loss_curve[e]) << "\n";
    write_text(fs::path(a.out) / "metrics.csv", metrics.str());

    std::ostringstream trace;
    trace << "epoch,layer,n_before,n_after,d_threshold,merged\n";
    for (const ga::SchedulerTraceRow& row : res.trace) {
        trace << row.epoch << "," << row.layer << "," << fmt_real(row.n_before) << ","
              << fmt_real(row.n_after) << "," << fmt_real(row.d_threshold) << "," << row.merged
              << "\n";
    }
    write_text(fs::path(a.out) / "sched_trace.csv", trace.str());

    json summary{{"final_loss", res.loss_curve.empty() ? 0.0 : double(res.loss_curve.back())},
                 {"epochs", res.loss_curve.size()},
                 {"skipped_samples", res.skipped_samples}};
    write_text(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
    write_manifest(a.out, "pretrain", train_args_json(a, "pretrain"));
    std::cout << "final loss " << (res.loss_curve.empty() ? 0.0 : res.loss_curve.back()) << "\n";
    return 0;
}

int cmd_finetune(const TrainArgs& a) {
    DiskDataset ds = load_dataset(a.data, true);
    std::size_t classes = a.classes;
    if (classes == 0) {
        for (std::size_t l : ds.labels) classes = std::max(classes, l + 1);
    }

    // Deterministic split: every k-th sample held out.
    ga::LabeledSet train, eval;
    std::size_t k =
        std::max<std::size_t>(2, static_cast<std::size_t>(1.0 / std::max(a.eval_frac, 0.01)));
    for (std::size_t i = 0; i < ds.series.size(); ++i) {
        if (i % k == 0) {
            eval.series.push_back(ds.series[i]);
            eval.labels.push_back(ds.labels[i]);
        } else {
            train.series.push_back(ds.series[i]);
            train.labels.push_back(ds.labels[i]);
        }
    }

    ga::EncoderStack model = [&] {
        if (a.checkpoint_in.empty()) {
            TrainArgs b = a;
            b.classes = classes;
            return build_model(b, ds.series.front().channels());
        }
        ga::EncoderStack m = ga::EncoderStack::load(a.checkpoint_in);
        m.config().classes = classes;
        return m;
    }();

    ga::FinetuneResult res = ga::finetune(model, train, eval, to_train_config(a, nullptr));

    fs::create_directories(a.out);
    model.save((fs::path(a.out) / "checkpoint.json").string());
    std::ostringstream metrics;
    metrics << "epoch,loss\n";
    for (std::size_t e = 0; e < res.loss_curve.size(); ++e)
        metrics << e << "," << fmt_real(res.loss_curve[e]) << "\n";
    write_text(fs::path(a.out) / "metrics.csv", metrics.str());
    json summary{{"accuracy", double(res.accuracy)},
                 {"train_samples", train.series.size()},
                 {"eval_samples", eval.series.size()},
                 {"classes", classes}};
    write_text(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
    write_manifest(a.out, "finetune", train_args_json(a, "finetune"));
    std::cout << "accuracy " << res.accuracy << "\n";
    return 0;
}

struct ImputeArgs {
    std::string data, checkpoint, truth, out = "out";
    std::size_t horizon = 0; // forecast only
};

int cmd_impute(const ImputeArgs& a, bool as_forecast) {
    if (a.checkpoint.empty()) throw ConfigError("checkpoint: required");
    if (!fs::exists(a.data)) throw ConfigError("data: path does not exist: " + a.data);
    ga::EncoderStack model = ga::EncoderStack::load(a.checkpoint);
    ga::Timeseries raw = ga::load_timeseries_csv(a.data);
    ga::Timeseries scaled = model.scaler().apply(raw);

    fs::create_directories(a.out);
    json summary;
    if (as_forecast) {
        ga::ForecastResult res = ga::forecast(model, scaled, a.horizon);
        ga::Timeseries completed = res.completed;
        completed.values = model.scaler().unscale(completed.values);
        completed.missing.clear();
        ga::save_timeseries_csv(completed, (fs::path(a.out) / "completed.csv").string());
        ga::Timeseries tail{model.scaler().unscale(res.tail)};
        ga::save_timeseries_csv(tail, (fs::path(a.out) / "forecast.csv").string());
        summary = {{"horizon", a.horizon}, {"length", raw.length()}};
    } else {
        std::optional<ga::Timeseries> truth;
        if (!a.truth.empty()) {
            if (!fs::exists(a.truth)) throw ConfigError("truth: path does not exist: " + a.truth);
            truth = model.scaler().apply(ga::load_timeseries_csv(a.truth));
        }
        ga::ImputeResult res = ga::impute(model, scaled, truth ? &*truth : nullptr);
        ga::Timeseries completed = res.completed;
        completed.values = model.scaler().unscale(completed.values);
        completed.missing.clear();
        ga::save_timeseries_csv(completed, (fs::path(a.out) / "completed.csv").string());
        summary = {{"missing", scaled.missing_count()},
                   {"scored", res.scored},
                   {"masked_mse", double(res.masked_mse)}};
    }
    write_text(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
    json resolved{{"data", a.data},
                  {"checkpoint", a.checkpoint},
                  {"truth", a.truth},
                  {"out", a.out},
                  {"horizon", a.horizon}};
    write_manifest(a.out, as_forecast ? "forecast" : "impute", resolved);
    return 0;
}

struct BenchArgs {
    std::string lengths = "256,512,1024,2048";
    std::size_t groups = 32, trials = 5, d = 16, layers = 2, heads = 1;
    std::uint64_t seed = 123;
    std::string out = "out";
};

int cmd_bench(const BenchArgs& a) {
    std::vector<std::size_t> lengths;
    std::stringstream ss(a.lengths);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) lengths.push_back(std::stoull(tok));
    }
    if (lengths.empty()) throw ConfigError("lengths: need at least one length");

    ga::BenchProfile profile;
    profile.d_model = a.d;
    profile.layers = a.layers;
    profile.heads = a.heads;
    profile.trials = a.trials;
    profile.seed = a.seed;
    ga::ScalingReport report = ga::bench_scaling(lengths, a.groups, profile);

    fs::create_directories(a.out);
    std::ostringstream csv;
    csv << "length,t_vanilla,t_group,speedup\n";
    for (const ga::ScalingPoint& p : report.points) {
        csv << p.length << ",";
        csv << (p.vanilla_ok ? fmt_real(p.t_vanilla) : "NA") << ",";
        csv << (p.group_ok ? fmt_real(p.t_group) : "NA") << ",";
        csv << (p.vanilla_ok && p.group_ok ? fmt_real(p.speedup) : "NA") << "\n";
    }
    write_text(fs::path(a.out) / "scaling.csv", csv.str());

    json summary{{"have_exponents", report.have_exponents}};
    if (report.have_exponents) {
        summary["exponent_vanilla"] = report.exponent_vanilla;
        summary["exponent_group"] = report.exponent_group;
    }
    write_text(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
    json resolved{{"lengths", a.lengths}, {"groups", a.groups}, {"trials", a.trials},
                  {"d", a.d},             {"layers", a.layers}, {"heads", a.heads},
                  {"seed", a.seed},       {"out", a.out}};
    write_manifest(a.out, "bench", resolved);
    for (const ga::ScalingPoint& p : report.points) {
        std::cout << p.length << ": vanilla " << p.t_vanilla << "s, group " << p.t_group
                  << "s, speedup " << p.speedup << "\n";
    }
    if (report.have_exponents) {
        std::cout << "exponents: vanilla " << report.exponent_vanilla << ", group "
                  << report.exponent_group << "\n";
    }
    return 0;
}

struct PlanArgs {
    std::size_t lmax = 64;
    double budget = 100000, coef_ln = 0.05, coef_ld = 0.01, coef_l = 0.5, coef_const = 2.0;
    std::size_t dim = 64, min_support = 4;
    std::string out = "out";
};

int cmd_plan(const PlanArgs& a) {
    if (a.lmax < 1) throw ConfigError("lmax: must be >= 1");
    if (a.budget <= 0) throw ConfigError("budget: must be > 0");
    ga::MemoryModel model;
    model.budget = static_cast<ga::real>(a.budget);
    model.coef_ln = static_cast<ga::real>(a.coef_ln);
    model.coef_ld = static_cast<ga::real>(a.coef_ld);
    model.coef_l = static_cast<ga::real>(a.coef_l);
    model.coef_const = static_cast<ga::real>(a.coef_const);
    model.dim = a.dim;

    auto samples = ga::sample_plan_grid(a.lmax, model);
    if (samples.empty()) throw ConfigError("budget: too small, no feasible batch at any point");
    ga::BatchPlan plan = ga::dp_partition(samples, a.lmax, a.min_support);

    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "plan.json", ga::plan_to_json(plan) + "\n");
    json resolved{{"lmax", a.lmax},       {"budget", a.budget},
                  {"coef_ln", a.coef_ln}, {"coef_ld", a.coef_ld},
                  {"coef_l", a.coef_l},   {"coef_const", a.coef_const},
                  {"dim", a.dim},         {"min_support", a.min_support},
                  {"out", a.out}};
    write_manifest(a.out, "plan-batch", resolved);
    std::cout << "plan with " << plan.rects.size() << " sub-planes, total error "
              << plan.total_error << "\n";
    return 0;
}

void add_train_options(CLI::App* cmd, TrainArgs& a, bool finetune) {
    cmd->add_option("--data", a.data, "dataset directory");
    cmd->add_option("--out", a.out, "output directory");
    cmd->add_option("--checkpoint", a.checkpoint_in, "checkpoint to continue from");
    cmd->add_option("--mode", a.mode, "attention mode: vanilla|group");
    cmd->add_option("--epochs", a.epochs);
    cmd->add_option("--lr", a.lr);
    cmd->add_option("--wd", a.wd);
    cmd->add_option("--mask-rate", a.mask_rate);
    cmd->add_option("--epsilon", a.epsilon);
    cmd->add_option("--alpha", a.alpha);
    cmd->add_option("--layers", a.layers);
    cmd->add_option("--d", a.d);
    cmd->add_option("--heads", a.heads);
    cmd->add_option("--kernel", a.kernel);
    cmd->add_option("--stride", a.stride, "0 = same as kernel");
    cmd->add_option("--nmax", a.nmax);
    cmd->add_option("--batch", a.batch);
    cmd->add_option("--classes", a.classes);
    cmd->add_option("--policy", a.policy, "batch policy: fixed|planned");
    cmd->add_option("--plan", a.plan_path, "plan.json for the planned policy");
    cmd->add_option("--seed", a.seed);
    if (finetune) {
        cmd->add_option("--eval-frac", a.eval_frac, "held-out fraction");
        cmd->add_flag("--freeze", a.freeze, "freeze the encoder, train the head only");
    }
}

void merge_train_options(OptionMerger& merger, TrainArgs& a) {
    merger.apply("data", a.data);
    merger.apply("out", a.out);
    merger.apply("checkpoint", a.checkpoint_in);
    merger.apply("mode", a.mode);
    merger.apply("epochs", a.epochs);
    merger.apply("lr", a.lr);
    merger.apply("wd", a.wd);
    merger.apply("mask-rate", a.mask_rate);
    merger.apply("epsilon", a.epsilon);
    merger.apply("alpha", a.alpha);
    merger.apply("layers", a.layers);
    merger.apply("d", a.d);
    merger.apply("heads", a.heads);
    merger.apply("kernel", a.kernel);
    merger.apply("stride", a.stride);
    merger.apply("nmax", a.nmax);
    merger.apply("batch", a.batch);
    merger.apply("classes", a.classes);
    merger.apply("policy", a.policy);
    merger.apply("plan", a.plan_path);
    merger.apply("eval-frac", a.eval_frac);
    merger.apply("freeze", a.freeze);
    merger.apply_seed(a.seed);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"group-attention timeseries encoder toolkit"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "flat key = value configuration file")->expected(1);

    GenArgs gen;
    CLI::App* cmd_gen_app = app.add_subcommand("gen", "generate a synthetic dataset");
    cmd_gen_app->add_option("--kind", gen.kind, "classification|imputation");
    cmd_gen_app->add_option("--t", gen.t);
    cmd_gen_app->add_option("--m", gen.m);
    cmd_gen_app->add_option("--classes", gen.classes);
    cmd_gen_app->add_option("--samples", gen.samples, "per class (classification) or total");
    cmd_gen_app->add_option("--sigma", gen.sigma);
    cmd_gen_app->add_option("--seed", gen.seed);
    cmd_gen_app->add_option("--out", gen.out);

    TrainArgs pre;
    CLI::App* cmd_pre_app = app.add_subcommand("pretrain", "mask-and-predict pretraining");
    add_train_options(cmd_pre_app, pre, false);

    TrainArgs fin;
    fin.epochs = 50;
    CLI::App* cmd_fin_app = app.add_subcommand("finetune", "train the classifier head");
    add_train_options(cmd_fin_app, fin, true);

    ImputeArgs imp;
    CLI::App* cmd_imp_app = app.add_subcommand("impute", "fill missing values in a series");
    cmd_imp_app->add_option("--data", imp.data, "CSV with empty cells for missing values");
    cmd_imp_app->add_option("--checkpoint", imp.checkpoint);
    cmd_imp_app->add_option("--truth", imp.truth, "ground-truth CSV for scoring");
    cmd_imp_app->add_option("--out", imp.out);

    ImputeArgs for_args;
    CLI::App* cmd_for_app = app.add_subcommand("forecast", "predict the series tail");
    cmd_for_app->add_option("--data", for_args.data);
    cmd_for_app->add_option("--checkpoint", for_args.checkpoint);
    cmd_for_app->add_option("--horizon", for_args.horizon, "forecast horizon");
    cmd_for_app->add_option("--out", for_args.out);

    BenchArgs bench;
    CLI::App* cmd_bench_app = app.add_subcommand("bench", "attention scaling benchmark");
    cmd_bench_app->add_option("--lengths", bench.lengths, "comma-separated, ascending");
    cmd_bench_app->add_option("--groups", bench.groups);
    cmd_bench_app->add_option("--trials", bench.trials);
    cmd_bench_app->add_option("--d", bench.d);
    cmd_bench_app->add_option("--layers", bench.layers);
    cmd_bench_app->add_option("--heads", bench.heads);
    cmd_bench_app->add_option("--seed", bench.seed);
    cmd_bench_app->add_option("--out", bench.out);

    PlanArgs plan;
    CLI::App* cmd_plan_app = app.add_subcommand("plan-batch", "fit the batch-size predictor");
    cmd_plan_app->add_option("--lmax", plan.lmax);
    cmd_plan_app->add_option("--budget", plan.budget, "memory budget in abstract units");
    cmd_plan_app->add_option("--coef-ln", plan.coef_ln);
    cmd_plan_app->add_option("--coef-ld", plan.coef_ld);
    cmd_plan_app->add_option("--coef-l", plan.coef_l);
    cmd_plan_app->add_option("--coef-const", plan.coef_const);
    cmd_plan_app->add_option("--dim", plan.dim);
    cmd_plan_app->add_option("--min-support", plan.min_support);
    cmd_plan_app->add_option("--out", plan.out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2; // usage error
    }

    try {
        std::map<std::string, std::string> kv;
        if (!config_path.empty()) kv = read_flat_config(config_path);

        if (cmd_gen_app->parsed()) {
            OptionMerger merger(cmd_gen_app, kv);
            merger.apply("kind", gen.kind);
            merger.apply("t", gen.t);
            merger.apply("m", gen.m);
            merger.apply("classes", gen.classes);
            merger.apply("samples", gen.samples);
            merger.apply("sigma", gen.sigma);
            merger.apply("out", gen.out);
            merger.apply_seed(gen.seed);
            return cmd_gen(gen);
        }
        if (cmd_pre_app->parsed()) {
            OptionMerger merger(cmd_pre_app, kv);
            merge_train_options(merger, pre);
            if (pre.data.empty()) throw ConfigError("data: required");
            return cmd_pretrain(pre);
        }
        if (cmd_fin_app->parsed()) {
            OptionMerger merger(cmd_fin_app, kv);
            merge_train_options(merger, fin);
            if (fin.data.empty()) throw ConfigError("data: required");
            return cmd_finetune(fin);
        }
        if (cmd_imp_app->parsed()) {
            OptionMerger merger(cmd_imp_app, kv);
            merger.apply("data", imp.data);
            merger.apply("checkpoint", imp.checkpoint);
            merger.apply("truth", imp.truth);
            merger.apply("out", imp.out);
            return cmd_impute(imp, false);
        }
        if (cmd_for_app->parsed()) {
            OptionMerger merger(cmd_for_app, kv);
            merger.apply("data", for_args.data);
            merger.apply("checkpoint", for_args.checkpoint);
            merger.apply("horizon", for_args.horizon);
            merger.apply("out", for_args.out);
            return cmd_impute(for_args, true);
        }
        if (cmd_bench_app->parsed()) {
            OptionMerger merger(cmd_bench_app, kv);
            merger.apply("lengths", bench.lengths);
            merger.apply("groups", bench.groups);
            merger.apply("trials", bench.trials);
            merger.apply("d", bench.d);
            merger.apply("layers", bench.layers);
            merger.apply("heads", bench.heads);
            merger.apply("out", bench.out);
            merger.apply_seed(bench.seed);
            return cmd_bench(bench);
        }
        if (cmd_plan_app->parsed()) {
            OptionMerger merger(cmd_plan_app, kv);
            merger.apply("lmax", plan.lmax);
            merger.apply("budget", plan.budget);
            merger.apply("coef-ln", plan.coef_ln);
            merger.apply("coef-ld", plan.coef_ld);
            merger.apply("coef-l", plan.coef_l);
            merger.apply("coef-const", plan.coef_const);
            merger.apply("dim", plan.dim);
            merger.apply("min-support", plan.min_support);
            merger.apply("out", plan.out);
            return cmd_plan(plan);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
