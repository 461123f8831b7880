#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "enfc/dataio.hpp"
#include "enfc/error.hpp"
#include "enfc/evalmetrics.hpp"
#include "enfc/filterfit.hpp"
#include "enfc/log.hpp"
#include "enfc/models.hpp"
#include "enfc/synthetic.hpp"

namespace enfc::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// File names inside a data directory.
constexpr const char* kTrialsFile = "trials.jsonl";
constexpr const char* kSitesFile = "sites.jsonl";
constexpr const char* kEmbeddingsFile = "embeddings.bin";
constexpr const char* kLatentsFile = "latents.jsonl";
constexpr const char* kEncoderFile = "encoder.json";
constexpr const char* kSplitFiles[3] = {"train.jsonl", "dev.jsonl", "test.jsonl"};

struct DatagenOpts {
    std::string out;
    std::size_t trials = 1000;
    std::string profile = "enrollment";
    std::string coefficients;
    std::string id_prefix = "SYN";
    std::uint64_t seed = 0;
};

struct EncodeOpts {
    std::string in;
    std::string out;
    bool pg_eligible = false;
    std::uint64_t seed = 0;
};

struct TrainOpts {
    std::string in;
    std::string out;
    std::string model = "deterministic";
    std::string embeddings;
    std::string sites;
    std::uint64_t seed = 0;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> patience;
    std::optional<std::size_t> batch_size;
    std::optional<double> input_lr;
    std::optional<double> body_lr;
    std::optional<double> weight_decay;
};

struct ApplyOpts {
    std::string checkpoint;
    std::string in;
    std::string embeddings;
    std::string out;
    double significance = 0.1;
};

struct SimulateOpts {
    std::string checkpoint;
    std::string in;
    std::string embeddings;
    std::string out;
    std::size_t replications = 1024;
    double cap_months = 72.0;
    std::uint64_t seed = 0;
    std::int64_t sites = 0;
    std::int64_t target = 0;
    double rate_shape = 0.0;
    double rate_rate = 0.0;
    double startup_shape = 0.0;
    double startup_rate = 0.0;
};

struct BaselineOpts {
    std::string in;
    std::string corpus;
    std::string sites;
    std::string out;
    std::vector<std::string> features = {"phase", "countries", "therapeutic_areas", "sponsors"};
    std::size_t min_samples = 30;
    std::size_t replications = 1024;
    double cap_months = 72.0;
    std::uint64_t seed = 0;
};

struct EvaluateOpts {
    std::string checkpoint;
    std::string predictions;
    std::string in;
    std::string embeddings;
    std::string out;
    double significance = 0.1;
    std::size_t replications = 1024;
    double cap_months = 72.0;
    std::uint64_t seed = 0;
};

struct CalibrateOpts {
    std::string checkpoint;
    std::string in;
    std::string embeddings;
    std::string out;
    std::vector<double> grid = {0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.01};
};

// Output helpers. Artifacts are written in one piece so a failed run leaves
// no partial file behind.

void write_file(const fs::path& path, const std::string& bytes) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing '" + path.string() + "'");
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string jsonl(const std::vector<json>& rows) {
    std::string s;
    for (const auto& r : rows) s += r.dump() + "\n";
    return s;
}

// Resolved options of the subcommand as a reloadable TOML file.
void record_config(const CLI::App& sub, const fs::path& where) {
    std::string text = "# resolved configuration of `enfc " + sub.get_name() + "`\n";
    text += "[" + sub.get_name() + "]\n";
    // Unset optional overrides come out as empty strings; leave them out.
    std::istringstream lines(sub.config_to_str(true, false));
    for (std::string line; std::getline(lines, line);) {
        if (line.size() >= 3 && line.compare(line.size() - 3, 3, "=\"\"") == 0) continue;
        text += line + "\n";
    }
    write_file(where, text);
}

fs::path config_path_for_file(const std::string& out) { return fs::path(out + ".run.toml"); }

fs::path or_default(const std::string& value, const fs::path& fallback) {
    return value.empty() ? fallback : fs::path(value);
}

std::string need(const std::string& value, const char* flag, const char* sub) {
    if (value.empty()) throw UsageError(std::string(sub) + ": " + flag + " is required");
    return value;
}

std::vector<TrialRecord> load_trials_logged(const fs::path& path) {
    LoadStats stats;
    auto trials = load_trials(path, &stats);
    if (stats.unknown_fields > 0) {
        logger().info("{}: ignored {} unknown fields", path.string(), stats.unknown_fields);
    }
    return trials;
}

EncodedBatch encode_logged(const Encoder& enc, std::span<const TrialRecord> trials, const EmbeddingMatrix& emb) {
    std::size_t unknown = 0;
    auto batch = enc.encode_batch(trials, emb, &unknown);
    if (unknown > 0) logger().info("dropped {} unseen categorical labels", unknown);
    return batch;
}

Encoder read_encoder(const fs::path& path) {
    const std::string text = read_file(path);
    try {
        Encoder e;
        from_json(json::parse(text), e);
        return e;
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

// Subcommands

void do_datagen(const DatagenOpts& o, const CLI::App& sub) {
    SyntheticConfig cfg;
    cfg.n_trials = o.trials;
    cfg.seed = o.seed;
    cfg.profile = o.profile;
    cfg.id_prefix = o.id_prefix;
    const auto coefficients = o.coefficients.empty() ? default_coefficients() : load_coefficients(o.coefficients);
    const auto data = generate_synthetic(cfg, coefficients);
    const fs::path dir(o.out);
    fs::create_directories(dir);
    save_trials(dir / kTrialsFile, data.trials);
    save_sites(dir / kSitesFile, data.sites);
    save_embeddings(dir / kEmbeddingsFile, data.embeddings);
    save_latents(dir / kLatentsFile, data.latents);
    record_config(sub, dir / "datagen.run.toml");
    logger().info("wrote {} trials and {} site outcomes to {}", data.trials.size(), data.sites.size(), dir.string());
}

void do_encode(const EncodeOpts& o, const CLI::App& sub) {
    const fs::path in(o.in);
    const fs::path out = or_default(o.out, in);
    auto trials = load_trials_logged(in / kTrialsFile);
    std::vector<TrialRecord> labeled;
    for (auto& t : trials) {
        if (t.is_labeled()) labeled.push_back(std::move(t));
    }
    if (o.pg_eligible) labeled = filter_pg_eligible(labeled);
    if (labeled.size() < 3) {
        throw InsufficientDataError("encode: " + std::to_string(labeled.size()) + " usable trials, need at least 3");
    }
    const auto split = split_dataset(labeled, default_split_sizes(labeled.size()), o.seed);
    const Encoder enc = Encoder::fit(split.train);
    fs::create_directories(out);
    const std::vector<TrialRecord>* parts[3] = {&split.train, &split.dev, &split.test};
    for (int i = 0; i < 3; ++i) save_trials(out / kSplitFiles[i], *parts[i]);
    json j;
    to_json(j, enc);
    write_file(out / kEncoderFile, j.dump(2) + "\n");
    record_config(sub, out / "encode.run.toml");
    logger().info("split {} / {} / {} (stratified: {})", split.train.size(), split.dev.size(), split.test.size(),
                  split.stratified);
}

TrainingSet make_set(const Encoder& enc, HeadKind head, std::span<const TrialRecord> trials,
                     const EmbeddingMatrix& emb, std::span<const SiteOutcome> sites) {
    TrainingSet s;
    s.x = encode_logged(enc, trials, emb);
    if (head == HeadKind::PoissonGamma) {
        attach_site_targets(s, trials, sites);
    } else {
        for (const auto& t : trials) s.enrollment.push_back(static_cast<double>(t.actual_enrollment.value_or(0)));
    }
    return s;
}

void do_train(const TrainOpts& o, const CLI::App& sub) {
    const HeadKind head = parse_head_kind(o.model);
    const fs::path in(o.in);
    const fs::path out = or_default(o.out, in / "model.enfc");
    const Encoder enc = read_encoder(in / kEncoderFile);
    const auto train = load_trials_logged(in / kSplitFiles[0]);
    const auto dev = load_trials_logged(in / kSplitFiles[1]);
    const auto emb = load_embeddings(or_default(o.embeddings, in / kEmbeddingsFile));
    std::vector<SiteOutcome> sites;
    if (head == HeadKind::PoissonGamma) sites = load_sites(or_default(o.sites, in / kSitesFile));

    TrainConfig cfg = head == HeadKind::PoissonGamma ? TrainConfig::poisson_gamma() : TrainConfig::study_level();
    cfg.seed = o.seed;
    if (o.epochs) cfg.max_epochs = *o.epochs;
    if (o.patience) cfg.patience = *o.patience;
    if (o.batch_size) cfg.batch_size = *o.batch_size;
    if (o.input_lr) cfg.input_lr = *o.input_lr;
    if (o.body_lr) cfg.body_lr = *o.body_lr;
    if (o.weight_decay) cfg.weight_decay = *o.weight_decay;
    cfg.validate();

    BackboneConfig backbone;
    backbone.d_emb = emb.dim;
    backbone.d_cat = enc.cat_width();
    const auto model = train_model(head, enc, make_set(enc, head, train, emb, sites),
                                   make_set(enc, head, dev, emb, sites), backbone, cfg,
                                   [](const EpochReport& r) {
                                       logger().info("epoch {} loss {:.6f} dev {:.6f}{}", r.epoch, r.train_loss,
                                                     r.dev_metric, r.improved ? " *" : "");
                                   });
    save_checkpoint(out, model);
    record_config(sub, config_path_for_file(out.string()));
    logger().info("best epoch {} of {}, dev {} {:.6f}", model.meta.best_epoch, model.meta.epochs_run,
                  model.meta.dev_metric, model.meta.best_dev_metric);
}

struct Applied {
    ModelCheckpoint model;
    std::vector<TrialRecord> trials;
    EncodedBatch x;
};

Applied apply_model(const std::string& checkpoint, const std::string& in, const std::string& embeddings,
                    const char* sub) {
    Applied a;
    a.model = load_checkpoint(need(checkpoint, "--checkpoint", sub));
    const fs::path trials_path(need(in, "--in", sub));
    a.trials = load_trials_logged(trials_path);
    if (a.trials.empty()) throw InsufficientDataError(std::string(sub) + ": no trials in " + trials_path.string());
    const auto emb = load_embeddings(or_default(embeddings, trials_path.parent_path() / kEmbeddingsFile));
    a.x = encode_logged(a.model.encoder, a.trials, emb);
    return a;
}

void do_predict(const ApplyOpts& o, const CLI::App& sub) {
    const auto a = apply_model(o.checkpoint, o.in, o.embeddings, "predict");
    std::vector<json> rows;
    if (a.model.head == HeadKind::PoissonGamma) {
        const auto params = predict_site_params(a.model, a.x);
        for (std::size_t i = 0; i < params.size(); ++i) {
            rows.push_back({{"trial_id", a.trials[i].trial_id},
                            {"rate_shape", params[i].rate_dist.shape},
                            {"rate_rate", params[i].rate_dist.rate},
                            {"startup_shape", params[i].startup_dist.shape},
                            {"startup_rate", params[i].startup_dist.rate}});
        }
    } else {
        const auto pred = predict_enrollment(a.model, a.x);
        std::vector<GammaParams> dist;
        if (a.model.head == HeadKind::Gamma) dist = predict_distribution(a.model, a.x);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            json r = {{"trial_id", a.trials[i].trial_id}, {"prediction", pred[i]}};
            if (!dist.empty()) {
                r["log_shape"] = dist[i].shape;
                r["log_rate"] = dist[i].rate;
            }
            rows.push_back(std::move(r));
        }
    }
    const std::string out = need(o.out, "--out", "predict");
    write_file(out, jsonl(rows));
    record_config(sub, config_path_for_file(out));
}

void do_interval(const ApplyOpts& o, const CLI::App& sub) {
    const auto a = apply_model(o.checkpoint, o.in, o.embeddings, "interval");
    const auto pred = predict_enrollment(a.model, a.x);
    const auto iv = predict_interval(a.model, a.x, o.significance);
    std::vector<json> rows;
    for (std::size_t i = 0; i < iv.size(); ++i) {
        rows.push_back({{"trial_id", a.trials[i].trial_id},
                        {"prediction", pred[i]},
                        {"lower", iv[i].lower},
                        {"upper", iv[i].upper},
                        {"level", iv[i].level}});
    }
    const std::string out = need(o.out, "--out", "interval");
    write_file(out, jsonl(rows));
    record_config(sub, config_path_for_file(out));
}

DurationSettings settings_of(std::size_t replications, double cap_months, std::uint64_t seed) {
    DurationSettings s;
    s.replications = replications;
    s.cap_months = cap_months;
    s.seed = seed;
    return s;
}

// Every trial is simulated with the same seed, so a trial's summary does not
// depend on its position in the file.
std::vector<json> simulate_trials(const Applied& a, const DurationSettings& settings) {
    const auto params = predict_site_params(a.model, a.x);
    std::vector<json> rows;
    for (std::size_t i = 0; i < params.size(); ++i) {
        rows.push_back(summary_to_json(a.trials[i].trial_id, duration_from_params(params[i], a.trials[i], settings)));
    }
    return rows;
}

void do_simulate(const SimulateOpts& o, const CLI::App& sub) {
    const auto settings = settings_of(o.replications, o.cap_months, o.seed);
    const std::string out = need(o.out, "--out", "simulate");
    if (!o.checkpoint.empty()) {
        const auto a = apply_model(o.checkpoint, o.in, o.embeddings, "simulate");
        write_file(out, jsonl(simulate_trials(a, settings)));
    } else {
        if (o.sites < 1 || o.target < 1) {
            throw UsageError("simulate: give --checkpoint, or --sites, --target and the four Gamma parameters");
        }
        SimSpec spec;
        spec.n_sites = o.sites;
        spec.target = o.target;
        spec.rate_dist = make_gamma(o.rate_shape, o.rate_rate);
        spec.startup_dist = make_gamma(o.startup_shape, o.startup_rate);
        spec.cap_months = o.cap_months;
        write_file(out, summary_to_json("direct", estimate_duration(spec, o.replications, o.seed)).dump() + "\n");
    }
    record_config(sub, config_path_for_file(out));
}

void do_fit_baseline(const BaselineOpts& o, const CLI::App& sub) {
    const auto queries = load_trials_logged(need(o.in, "--in", "fit-baseline"));
    const auto corpus = load_trials_logged(need(o.corpus, "--corpus", "fit-baseline"));
    const auto sites = load_sites(need(o.sites, "--sites", "fit-baseline"));
    FilterFitConfig cfg;
    cfg.features.clear();
    for (const auto& f : o.features) cfg.features.push_back(parse_feature(f));
    cfg.min_samples = o.min_samples;
    cfg.replications = o.replications;
    cfg.cap_months = o.cap_months;
    cfg.seed = o.seed;
    std::vector<json> rows;
    std::size_t skipped = 0;
    for (const auto& q : queries) {
        try {
            const auto r = predict_duration_filterfit(q, corpus, sites, cfg);
            json row = summary_to_json(q.trial_id, r.summary);
            row["rate_shape"] = r.rate_dist.shape;
            row["rate_rate"] = r.rate_dist.rate;
            row["startup_shape"] = r.startup_dist.shape;
            row["startup_rate"] = r.startup_dist.rate;
            row["similar_trials"] = r.similar_trials;
            row["site_samples"] = r.site_samples;
            row["newton_fallback"] = r.newton_fallback;
            rows.push_back(std::move(row));
        } catch (const InsufficientDataError& e) {
            ++skipped;
            rows.push_back({{"trial_id", q.trial_id}, {"skipped", e.what()}});
        }
    }
    if (skipped > 0) logger().warn("fit-baseline: {} of {} trials had too few similar sites", skipped, queries.size());
    const std::string out = need(o.out, "--out", "fit-baseline");
    write_file(out, jsonl(rows));
    record_config(sub, config_path_for_file(out));
}

std::optional<double> safe_r2(std::span<const double> truth, std::span<const double> pred) {
    try {
        return r2(truth, pred);
    } catch (const UndefinedMetricError& e) {
        logger().warn("{}", e.what());
        return std::nullopt;
    }
}

MetricsReport point_report(std::span<const double> truth, std::span<const double> pred, bool duration) {
    MetricsReport r;
    r.mae = mae(truth, pred);
    r.medae = medae(truth, pred);
    r.r2 = safe_r2(truth, pred);
    if (duration) r.coverage_6mo = window_coverage(truth, pred, 6.0);
    return r;
}

MetricsReport evaluate_checkpoint(const EvaluateOpts& o) {
    const auto a = apply_model(o.checkpoint, o.in, o.embeddings, "evaluate");
    if (a.model.head == HeadKind::PoissonGamma) {
        std::vector<double> truth, pred;
        const auto rows = simulate_trials(a, settings_of(o.replications, o.cap_months, o.seed));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!a.trials[i].duration_months) continue;
            truth.push_back(*a.trials[i].duration_months);
            pred.push_back(rows[i]["mean"].get<double>());
        }
        if (truth.empty()) throw InsufficientDataError("evaluate: no trial has a duration");
        return point_report(truth, pred, true);
    }
    std::vector<double> truth;
    for (const auto& t : a.trials) {
        if (!t.actual_enrollment) throw DataError("evaluate: trial '" + t.trial_id + "' has no actual enrollment");
        truth.push_back(static_cast<double>(*t.actual_enrollment));
    }
    MetricsReport r = point_report(truth, predict_enrollment(a.model, a.x), false);
    if (a.model.head == HeadKind::Gamma) {
        const auto m = interval_metrics(truth, predict_interval(a.model, a.x, o.significance));
        r.interval = IntervalReport{1.0 - o.significance, m.accuracy, m.median_width};
    }
    return r;
}

// Lines carry either "prediction" (enrollment, optionally with lower/upper)
// or "mean" (duration). Lines marked "skipped" are ignored.
MetricsReport evaluate_predictions(const EvaluateOpts& o) {
    const auto trials = load_trials_logged(need(o.in, "--in", "evaluate"));
    std::unordered_map<std::string, const TrialRecord*> by_id;
    for (const auto& t : trials) by_id.emplace(t.trial_id, &t);
    std::istringstream lines(read_file(o.predictions));
    std::vector<double> truth, pred;
    std::vector<PredictionInterval> intervals;
    std::optional<bool> duration;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(lines, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw FormatError(o.predictions + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (j.contains("skipped")) continue;
        const auto id = j.value("trial_id", std::string());
        const auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError(o.predictions + ":" + std::to_string(lineno) + ": unknown trial '" + id + "'");
        const bool is_duration = j.contains("mean");
        if (duration && *duration != is_duration) throw FormatError(o.predictions + ": mixes duration and enrollment rows");
        duration = is_duration;
        const TrialRecord& t = *it->second;
        if (is_duration) {
            if (!t.duration_months) continue;
            truth.push_back(*t.duration_months);
            pred.push_back(j.at("mean").get<double>());
        } else {
            if (!t.actual_enrollment) throw DataError("evaluate: trial '" + id + "' has no actual enrollment");
            truth.push_back(static_cast<double>(*t.actual_enrollment));
            pred.push_back(j.at("prediction").get<double>());
            if (j.contains("lower")) {
                intervals.push_back({j.at("lower").get<double>(), j.at("upper").get<double>(), j.at("level").get<double>()});
            }
        }
    }
    if (truth.empty()) throw InsufficientDataError("evaluate: no prediction matched a trial with an outcome");
    MetricsReport r = point_report(truth, pred, duration.value_or(false));
    if (!intervals.empty()) {
        if (intervals.size() != truth.size()) throw FormatError(o.predictions + ": only some rows carry intervals");
        const auto m = interval_metrics(truth, intervals);
        r.interval = IntervalReport{intervals.front().level, m.accuracy, m.median_width};
    }
    return r;
}

void do_evaluate(const EvaluateOpts& o, const CLI::App& sub) {
    if (o.checkpoint.empty() == o.predictions.empty()) {
        throw UsageError("evaluate: give exactly one of --checkpoint and --predictions");
    }
    const MetricsReport r = o.checkpoint.empty() ? evaluate_predictions(o) : evaluate_checkpoint(o);
    const std::string out = need(o.out, "--out", "evaluate");
    write_file(out, report_to_json(r).dump(2) + "\n");
    record_config(sub, config_path_for_file(out));
}

void do_calibrate(const CalibrateOpts& o, const CLI::App& sub) {
    const auto a = apply_model(o.checkpoint, o.in, o.embeddings, "calibrate");
    std::vector<double> truth;
    for (const auto& t : a.trials) {
        if (!t.actual_enrollment) throw DataError("calibrate: trial '" + t.trial_id + "' has no actual enrollment");
        truth.push_back(static_cast<double>(*t.actual_enrollment));
    }
    const auto rows = calibration_sweep(a.model, a.x, truth, o.grid);
    std::ostringstream csv;
    write_calibration_csv(csv, rows);
    const std::string out = need(o.out, "--out", "calibrate");
    write_file(out, csv.str());
    record_config(sub, config_path_for_file(out));
}

// Parser construction

void add_checkpoint_inputs(CLI::App* sub, std::string& checkpoint, std::string& in, std::string& embeddings) {
    sub->add_option("--checkpoint", checkpoint, "Trained model file");
    sub->add_option("--in", in, "Trials to score (JSON lines)");
    sub->add_option("--embeddings", embeddings, "Embedding matrix (default: embeddings.bin beside --in)");
}

void add_sim_flags(CLI::App* sub, std::size_t& replications, double& cap_months) {
    sub->add_option("--replications", replications, "Simulated enrollments per trial")
        ->check(CLI::PositiveNumber);
    sub->add_option("--cap-months", cap_months, "Censoring horizon of a simulation")->check(CLI::PositiveNumber);
}

struct Options {
    DatagenOpts datagen;
    EncodeOpts encode;
    TrainOpts train;
    ApplyOpts predict;
    ApplyOpts interval;
    SimulateOpts simulate;
    BaselineOpts baseline;
    EvaluateOpts evaluate;
    CalibrateOpts calibrate;
};

void build(CLI::App& app, Options& o) {
    app.require_subcommand(1, 1);
    app.option_defaults()->always_capture_default();
    app.set_config("--config", "", "TOML file of option values; [subcommand] tables, explicit flags win");
    app.get_config_ptr()->group("Global");
    app.allow_config_extras(false);

    auto* s = app.add_subcommand("datagen", "Generate a synthetic corpus");
    s->add_option("--out", o.datagen.out, "Output directory")->required();
    s->add_option("--trials", o.datagen.trials, "Number of trials")->check(CLI::PositiveNumber);
    s->add_option("--profile", o.datagen.profile, "Generator profile")
        ->check(CLI::IsMember({"enrollment", "poisson_gamma"}));
    s->add_option("--coefficients", o.datagen.coefficients, "Coefficient JSON (default: built-in v1)");
    s->add_option("--id-prefix", o.datagen.id_prefix, "Trial id prefix");
    s->add_option("--seed", o.datagen.seed, "Random seed");

    s = app.add_subcommand("encode", "Split labeled trials and fit the encoders on the training part");
    s->add_option("--in", o.encode.in, "Data directory holding trials.jsonl")->required();
    s->add_option("--out", o.encode.out, "Output directory (default: --in)");
    s->add_flag("--pg-eligible", o.encode.pg_eligible, "Keep only trials with >10 sites and 6-36 month durations");
    s->add_option("--seed", o.encode.seed, "Split seed");

    s = app.add_subcommand("train", "Train a model on an encoded directory");
    s->add_option("--in", o.train.in, "Encoded directory")->required();
    s->add_option("--out", o.train.out, "Checkpoint path (default: <in>/model.enfc)");
    s->add_option("--model", o.train.model, "Head")
        ->check(CLI::IsMember({"deterministic", "stochastic", "poisson-gamma"}));
    s->add_option("--embeddings", o.train.embeddings, "Embedding matrix (default: <in>/embeddings.bin)");
    s->add_option("--sites", o.train.sites, "Site outcomes for poisson-gamma (default: <in>/sites.jsonl)");
    s->add_option("--seed", o.train.seed, "Training seed");
    s->add_option("--epochs", o.train.epochs, "Maximum epochs (default: 200; poisson-gamma 256)");
    s->add_option("--patience", o.train.patience, "Early-stopping patience (default: 20; poisson-gamma 256)");
    s->add_option("--batch-size", o.train.batch_size, "Batch size (default: 256; poisson-gamma 32)");
    s->add_option("--input-lr", o.train.input_lr, "Learning rate of the input branches (default: 1e-4)");
    s->add_option("--body-lr", o.train.body_lr, "Learning rate of the rest (default: 1e-3; poisson-gamma 1e-4)");
    s->add_option("--weight-decay", o.train.weight_decay, "AdamW weight decay (default: 0.01)");

    s = app.add_subcommand("predict", "Point predictions or site distributions");
    add_checkpoint_inputs(s, o.predict.checkpoint, o.predict.in, o.predict.embeddings);
    s->add_option("--out", o.predict.out, "Output JSON lines");

    s = app.add_subcommand("interval", "Enrollment intervals from a stochastic model");
    add_checkpoint_inputs(s, o.interval.checkpoint, o.interval.in, o.interval.embeddings);
    s->add_option("--out", o.interval.out, "Output JSON lines");
    s->add_option("--significance", o.interval.significance, "Significance level (interval level is 1 - this)")
        ->check(CLI::Range(0.0, 1.0));

    s = app.add_subcommand("simulate", "Duration summaries from a poisson-gamma model or explicit parameters");
    add_checkpoint_inputs(s, o.simulate.checkpoint, o.simulate.in, o.simulate.embeddings);
    s->add_option("--out", o.simulate.out, "Output JSON lines");
    add_sim_flags(s, o.simulate.replications, o.simulate.cap_months);
    s->add_option("--seed", o.simulate.seed, "Simulation seed");
    s->add_option("--sites", o.simulate.sites, "Planned sites (without --checkpoint)");
    s->add_option("--target", o.simulate.target, "Target enrollment (without --checkpoint)");
    s->add_option("--rate-shape", o.simulate.rate_shape, "Site rate Gamma shape (without --checkpoint)");
    s->add_option("--rate-rate", o.simulate.rate_rate, "Site rate Gamma rate (without --checkpoint)");
    s->add_option("--startup-shape", o.simulate.startup_shape, "Startup Gamma shape (without --checkpoint)");
    s->add_option("--startup-rate", o.simulate.startup_rate, "Startup Gamma rate (without --checkpoint)");

    s = app.add_subcommand("fit-baseline", "Filter-and-fit duration estimates");
    s->add_option("--in", o.baseline.in, "Query trials");
    s->add_option("--corpus", o.baseline.corpus, "Historical trials to filter");
    s->add_option("--sites", o.baseline.sites, "Site outcomes of the corpus");
    s->add_option("--out", o.baseline.out, "Output JSON lines");
    s->add_option("--features", o.baseline.features, "Categorical features that must overlap")->delimiter(',');
    s->add_option("--min-samples", o.baseline.min_samples, "Fewest pooled site outcomes to fit");
    add_sim_flags(s, o.baseline.replications, o.baseline.cap_months);
    s->add_option("--seed", o.baseline.seed, "Simulation seed");

    s = app.add_subcommand("evaluate", "Metrics JSON for a model or a predictions file");
    add_checkpoint_inputs(s, o.evaluate.checkpoint, o.evaluate.in, o.evaluate.embeddings);
    s->add_option("--predictions", o.evaluate.predictions, "Predictions JSON lines instead of a model");
    s->add_option("--out", o.evaluate.out, "Output JSON");
    s->add_option("--significance", o.evaluate.significance, "Significance of the reported interval")
        ->check(CLI::Range(0.0, 1.0));
    add_sim_flags(s, o.evaluate.replications, o.evaluate.cap_months);
    s->add_option("--seed", o.evaluate.seed, "Simulation seed");

    s = app.add_subcommand("calibrate", "Interval accuracy and width over a significance grid (CSV)");
    add_checkpoint_inputs(s, o.calibrate.checkpoint, o.calibrate.in, o.calibrate.embeddings);
    s->add_option("--out", o.calibrate.out, "Output CSV");
    s->add_option("--grid", o.calibrate.grid, "Significance levels")->delimiter(',');
}

void dispatch(const CLI::App& app, const Options& o) {
    const CLI::App* sub = app.get_subcommands().front();
    const std::string& name = sub->get_name();
    if (name == "datagen") do_datagen(o.datagen, *sub);
    else if (name == "encode") do_encode(o.encode, *sub);
    else if (name == "train") do_train(o.train, *sub);
    else if (name == "predict") do_predict(o.predict, *sub);
    else if (name == "interval") do_interval(o.interval, *sub);
    else if (name == "simulate") do_simulate(o.simulate, *sub);
    else if (name == "fit-baseline") do_fit_baseline(o.baseline, *sub);
    else if (name == "evaluate") do_evaluate(o.evaluate, *sub);
    else if (name == "calibrate") do_calibrate(o.calibrate, *sub);
}

int report(std::ostream& err, const char* kind, const std::exception& e, int code) {
    err << "enfc: " << kind << " error: " << e.what() << "\n";
    return code;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app("Clinical trial enrollment forecasting", "enfc");
    Options options;
    build(app, options);
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    try {
        dispatch(app, options);
        return kExitOk;
    } catch (const UsageError& e) {
        return report(err, "usage", e, kExitUsage);
    } catch (const DomainError& e) {
        return report(err, "usage", e, kExitUsage);
    } catch (const DataError& e) {
        return report(err, "data", e, kExitData);
    } catch (const StructuralError& e) {
        return report(err, "data", e, kExitData);
    } catch (const NumericError& e) {
        return report(err, "numeric", e, kExitNumeric);
    } catch (const fs::filesystem_error& e) {
        return report(err, "data", e, kExitData);
    } catch (const std::exception& e) {
        return report(err, "internal", e, kExitFailure);
    }
}

}  // namespace enfc::cli
