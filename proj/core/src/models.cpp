#include "enfc/models.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "enfc/error.hpp"
#include "enfc/filterfit.hpp"
#include "enfc/log.hpp"
#include "enfc/optim.hpp"

namespace enfc {
namespace {

constexpr double kLeakySlope = 0.01;
constexpr std::size_t kEvalChunk = 1024;

struct HeadLayout {
    std::vector<std::string> outputs;
};

HeadLayout layout_of(HeadKind head) {
    switch (head) {
        case HeadKind::Deterministic:
            return {{"log_count"}};
        case HeadKind::Gamma:
            return {{"shape", "rate"}};
        case HeadKind::PoissonGamma:
            return {{"rate_shape", "rate_rate", "startup_shape", "startup_rate"}};
    }
    throw UsageError("unknown head kind");
}

Tensor random_matrix(std::size_t in, std::size_t out, Rng& rng) {
    Tensor w(Shape{in, out});
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w.values()) v = rng.normal() * scale;
    return w;
}

void add_linear(ad::ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                const std::string& group, Rng& rng) {
    store.add(prefix + ".w", random_matrix(in, out, rng), group);
    store.add(prefix + ".b", Tensor(Shape{out}, 0.0), group);
}

ad::NodeId dense(ad::Graph& g, ad::NodeId x, const std::string& prefix) {
    return ad::linear(g, x, g.parameter(prefix + ".w"), g.parameter(prefix + ".b"));
}

ad::NodeId branch(ad::Graph& g, const BackboneConfig& config, const std::string& name, const Tensor& input,
                  double dropout_rate) {
    ad::NodeId x = g.constant(input);
    for (std::size_t l = 0; l < config.branch_layers; ++l) {
        x = ad::leaky_relu(g, dense(g, x, name + ".l" + std::to_string(l)), kLeakySlope);
        if (l == 0 && dropout_rate > 0.0) x = ad::dropout(g, x, dropout_rate);
    }
    return x;
}

void require_head(const ModelCheckpoint& model, std::initializer_list<HeadKind> allowed, const char* fn) {
    if (std::find(allowed.begin(), allowed.end(), model.head) != allowed.end()) return;
    throw UsageError(std::string(fn) + ": not available for a " + std::string(to_string(model.head)) + " model");
}

void check_batch(const BackboneConfig& config, const EncodedBatch& batch) {
    if (batch.size() == 0) throw StructuralError("empty batch");
    if (batch.emb.last_dim() != config.d_emb || batch.cat.last_dim() != config.d_cat ||
        batch.num.last_dim() != config.d_num) {
        std::ostringstream os;
        os << "batch widths emb/cat/num " << batch.emb.last_dim() << "/" << batch.cat.last_dim() << "/"
           << batch.num.last_dim() << " do not match the model (" << config.d_emb << "/" << config.d_cat << "/"
           << config.d_num << ")";
        throw StructuralError(os.str());
    }
}

std::vector<double> log1p_targets(const std::vector<double>& counts, std::span<const std::size_t> rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(std::log(counts.at(r) + 1.0));
    return out;
}

std::vector<std::vector<double>> pick_groups(const std::vector<std::vector<double>>& groups,
                                             std::span<const std::size_t> rows) {
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(groups.at(r));
    return out;
}

GammaParams pooled_fit(const std::vector<double>& samples) {
    try {
        return fit_gamma_newton(samples);
    } catch (const Error&) {
        // Moment matching as a fallback for degenerate pools.
        double m = 0.0;
        for (double x : samples) m += x;
        m /= static_cast<double>(samples.size());
        double v = 0.0;
        for (double x : samples) v += (x - m) * (x - m);
        v = std::max(v / static_cast<double>(samples.size()), 1e-6 * m * m);
        return {m * m / v, m / v};
    }
}

// Output biases start at the pooled fit of the training targets.
void init_output_biases(ad::ParameterStore& store, HeadKind head, const TrainingSet& train) {
    std::vector<std::size_t> all(train.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    switch (head) {
        case HeadKind::Deterministic: {
            const auto t = log1p_targets(train.enrollment, all);
            store.get("head.log_count.out.b")[0] = std::accumulate(t.begin(), t.end(), 0.0) / t.size();
            break;
        }
        case HeadKind::Gamma: {
            const GammaParams p = pooled_fit(log1p_targets(train.enrollment, all));
            store.get("head.shape.out.b")[0] = std::log(p.shape);
            store.get("head.rate.out.b")[0] = std::log(p.rate);
            break;
        }
        case HeadKind::PoissonGamma: {
            std::vector<double> rates;
            std::vector<double> startups;
            for (const auto& g : train.site_rates) rates.insert(rates.end(), g.begin(), g.end());
            for (const auto& g : train.site_startups) startups.insert(startups.end(), g.begin(), g.end());
            const GammaParams r = pooled_fit(rates);
            const GammaParams s = pooled_fit(startups);
            store.get("head.rate_shape.out.b")[0] = std::log(r.shape);
            store.get("head.rate_rate.out.b")[0] = std::log(r.rate);
            store.get("head.startup_shape.out.b")[0] = std::log(s.shape);
            store.get("head.startup_rate.out.b")[0] = std::log(s.rate);
            break;
        }
    }
}

void check_training_set(HeadKind head, const TrainingSet& set, const char* which) {
    const std::size_t n = set.size();
    if (n == 0) throw InsufficientDataError(std::string(which) + " split is empty");
    if (head == HeadKind::PoissonGamma) {
        if (set.site_rates.size() != n || set.site_startups.size() != n) {
            throw StructuralError(std::string(which) + " split has no site targets attached");
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (set.site_rates[i].empty()) {
                throw DataError(std::string(which) + " row " + std::to_string(i) + " has no site outcomes");
            }
        }
    } else if (set.enrollment.size() != n) {
        throw StructuralError(std::string(which) + " split: " + std::to_string(set.enrollment.size()) +
                              " enrollment targets for " + std::to_string(n) + " rows");
    }
}

void check_significance(double significance) {
    if (!(significance > 0.0) || !(significance < 1.0)) {
        std::ostringstream os;
        os << "significance must be in (0, 1), got " << significance;
        throw DomainError(os.str());
    }
}

// Eval graphs only read parameter values.
ad::ParameterStore* readonly(const ad::ParameterStore& store) {
    return const_cast<ad::ParameterStore*>(&store);
}

double dev_metric(HeadKind head, const ModelCheckpoint& model, const TrainingSet& dev) {
    if (head == HeadKind::PoissonGamma) return evaluate_loss(model, dev);
    const auto pred = predict_enrollment(model, dev.x);
    return mae(dev.enrollment, pred);
}

}  // namespace

std::string_view to_string(HeadKind kind) {
    switch (kind) {
        case HeadKind::Deterministic:
            return "deterministic";
        case HeadKind::Gamma:
            return "stochastic";
        case HeadKind::PoissonGamma:
            return "poisson-gamma";
    }
    return "unknown";
}

HeadKind parse_head_kind(std::string_view text) {
    if (text == "deterministic") return HeadKind::Deterministic;
    if (text == "stochastic" || text == "gamma") return HeadKind::Gamma;
    if (text == "poisson-gamma") return HeadKind::PoissonGamma;
    throw UsageError("unknown model kind '" + std::string(text) +
                     "' (expected deterministic, stochastic or poisson-gamma)");
}

void BackboneConfig::validate() const {
    if (d_emb == 0 || d_cat == 0 || d_num == 0) throw StructuralError("backbone: input widths must be positive");
    if (hidden == 0 || heads == 0 || hidden % heads != 0) {
        throw StructuralError("backbone: hidden width " + std::to_string(hidden) + " not divisible by " +
                              std::to_string(heads) + " heads");
    }
    if (hidden < 2) throw StructuralError("backbone: hidden width must be at least 2");
    if (branch_layers == 0) throw StructuralError("backbone: branches need at least one layer");
    if (!(cat_dropout >= 0.0) || !(cat_dropout < 1.0)) throw DomainError("backbone: dropout must be in [0, 1)");
}

TrainConfig TrainConfig::study_level() { return {}; }

TrainConfig TrainConfig::poisson_gamma() {
    TrainConfig c;
    c.batch_size = 32;
    c.input_lr = 1e-4;
    c.body_lr = 1e-4;
    c.max_epochs = 256;
    c.patience = 256;
    return c;
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw DomainError("train: batch size must be positive");
    if (max_epochs == 0) throw DomainError("train: epochs must be positive");
    if (patience == 0) throw DomainError("train: patience must be at least 1");
    if (!(input_lr > 0.0) || !(body_lr > 0.0) || !std::isfinite(input_lr) || !std::isfinite(body_lr)) {
        throw DomainError("train: learning rates must be positive");
    }
    if (!(weight_decay >= 0.0)) throw DomainError("train: weight decay must be non-negative");
}

void init_parameters(ad::ParameterStore& store, const BackboneConfig& config, HeadKind head, Rng& rng) {
    config.validate();
    const std::size_t d = config.hidden;
    const std::pair<const char*, std::size_t> branches[] = {
        {"emb", config.d_emb}, {"cat", config.d_cat}, {"num", config.d_num}};
    for (const auto& [name, width] : branches) {
        for (std::size_t l = 0; l < config.branch_layers; ++l) {
            add_linear(store, std::string(name) + ".l" + std::to_string(l), l == 0 ? width : d, d, "input", rng);
        }
    }
    for (const char* p : {"att.q", "att.k", "att.v", "att.o"}) add_linear(store, p, d, d, "body", rng);
    store.add("norm.gain", Tensor(Shape{d}, 1.0), "body");
    store.add("norm.bias", Tensor(Shape{d}, 0.0), "body");
    for (const auto& out : layout_of(head).outputs) {
        add_linear(store, "head." + out + ".l0", d, d / 2, "body", rng);
        add_linear(store, "head." + out + ".out", d / 2, 1, "body", rng);
    }
}

ad::NodeId forward_backbone(ad::Graph& g, const BackboneConfig& config, const EncodedBatch& batch) {
    check_batch(config, batch);
    const std::size_t b = batch.size();
    const std::size_t d = config.hidden;
    const ad::NodeId z_emb = branch(g, config, "emb", batch.emb, 0.0);
    const ad::NodeId z_cat = branch(g, config, "cat", batch.cat, config.cat_dropout);
    const ad::NodeId z_num = branch(g, config, "num", batch.num, 0.0);

    const ad::NodeId query = ad::reshape(g, z_emb, Shape{b, 1, d});
    const ad::NodeId keys = ad::stack(g, {z_cat, z_num});
    const ad::AttentionWeights w{g.parameter("att.q.w"), g.parameter("att.q.b"), g.parameter("att.k.w"),
                                 g.parameter("att.k.b"), g.parameter("att.v.w"), g.parameter("att.v.b"),
                                 g.parameter("att.o.w"), g.parameter("att.o.b")};
    const ad::NodeId attended = ad::reshape(g, ad::multi_head_attention(g, query, keys, w, config.heads), Shape{b, d});
    return ad::layer_norm(g, ad::add(g, attended, z_emb), g.parameter("norm.gain"), g.parameter("norm.bias"));
}

std::vector<ad::NodeId> forward_head(ad::Graph& g, const BackboneConfig& config, HeadKind head, ad::NodeId h) {
    (void)config;
    std::vector<ad::NodeId> outs;
    for (const auto& out : layout_of(head).outputs) {
        const ad::NodeId hidden = ad::leaky_relu(g, dense(g, h, "head." + out + ".l0"), kLeakySlope);
        outs.push_back(ad::select_column(g, dense(g, hidden, "head." + out + ".out"), 0));
    }
    return outs;
}

std::vector<std::vector<double>> head_outputs(const ModelCheckpoint& model, const EncodedBatch& batch) {
    check_batch(model.backbone, batch);
    const std::size_t n = batch.size();
    std::vector<std::vector<double>> rows(n);
    for (std::size_t start = 0; start < n; start += kEvalChunk) {
        const std::size_t stop = std::min(n, start + kEvalChunk);
        std::vector<std::size_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        const EncodedBatch part = (start == 0 && stop == n) ? batch : gather(batch, idx);
        ad::Graph g(readonly(model.weights), ad::Mode::Eval);
        const auto outs = forward_head(g, model.backbone, model.head, forward_backbone(g, model.backbone, part));
        for (std::size_t i = start; i < stop; ++i) {
            rows[i].reserve(outs.size());
            for (ad::NodeId o : outs) rows[i].push_back(g.value(o)[i - start]);
        }
    }
    return rows;
}

std::vector<double> predict_point(const ModelCheckpoint& model, const EncodedBatch& batch) {
    require_head(model, {HeadKind::Deterministic}, "predict_point");
    std::vector<double> out;
    for (const auto& r : head_outputs(model, batch)) out.push_back(std::max(0.0, std::expm1(r[0])));
    return out;
}

std::vector<GammaParams> predict_distribution(const ModelCheckpoint& model, const EncodedBatch& batch) {
    require_head(model, {HeadKind::Gamma}, "predict_distribution");
    std::vector<GammaParams> out;
    for (const auto& r : head_outputs(model, batch)) out.push_back(make_gamma(std::exp(r[0]), std::exp(r[1])));
    return out;
}

std::vector<double> predict_enrollment(const ModelCheckpoint& model, const EncodedBatch& batch) {
    require_head(model, {HeadKind::Deterministic, HeadKind::Gamma}, "predict_enrollment");
    if (model.head == HeadKind::Deterministic) return predict_point(model, batch);
    std::vector<double> out;
    for (const auto& p : predict_distribution(model, batch)) out.push_back(std::expm1(p.mean()));
    return out;
}

PredictionInterval interval_from_log_gamma(const GammaParams& params, double significance) {
    check_significance(significance);
    return {std::expm1(gamma_quantile(params, significance / 2.0)),
            std::expm1(gamma_quantile(params, 1.0 - significance / 2.0)), 1.0 - significance};
}

std::vector<PredictionInterval> predict_interval(const ModelCheckpoint& model, const EncodedBatch& batch,
                                                 double significance) {
    require_head(model, {HeadKind::Gamma}, "predict_interval");
    check_significance(significance);
    std::vector<PredictionInterval> out;
    for (const auto& p : predict_distribution(model, batch)) out.push_back(interval_from_log_gamma(p, significance));
    return out;
}

std::vector<CalibrationRow> calibration_sweep(const ModelCheckpoint& model, const EncodedBatch& batch,
                                              std::span<const double> truth, std::span<const double> significances) {
    require_head(model, {HeadKind::Gamma}, "calibration_sweep");
    for (double a : significances) check_significance(a);
    const auto dists = predict_distribution(model, batch);
    if (truth.size() != dists.size()) {
        throw StructuralError("calibration_sweep: " + std::to_string(truth.size()) + " truths for " +
                              std::to_string(dists.size()) + " rows");
    }
    std::vector<CalibrationRow> rows;
    std::vector<PredictionInterval> intervals(dists.size());
    for (double a : significances) {
        for (std::size_t i = 0; i < dists.size(); ++i) intervals[i] = interval_from_log_gamma(dists[i], a);
        const auto m = interval_metrics(truth, intervals);
        rows.push_back({a, 1.0 - a, m.accuracy, m.median_width});
    }
    return rows;
}

std::vector<PoissonGammaParams> predict_site_params(const ModelCheckpoint& model, const EncodedBatch& batch) {
    require_head(model, {HeadKind::PoissonGamma}, "predict_site_params");
    std::vector<PoissonGammaParams> out;
    for (const auto& r : head_outputs(model, batch)) {
        out.push_back({make_gamma(std::exp(r[0]), std::exp(r[1])), make_gamma(std::exp(r[2]), std::exp(r[3]))});
    }
    return out;
}

DurationSummary duration_from_params(const PoissonGammaParams& params, const TrialRecord& trial,
                                     const DurationSettings& settings) {
    if (trial.planned_sites < 1 || trial.planned_participants < 1) {
        throw DataError("trial '" + trial.trial_id + "' needs planned_sites and planned_participants >= 1");
    }
    SimSpec spec;
    spec.n_sites = trial.planned_sites;
    spec.target = trial.planned_participants;
    spec.rate_dist = params.rate_dist;
    spec.startup_dist = params.startup_dist;
    spec.cap_months = settings.cap_months;
    return estimate_duration(spec, settings.replications, settings.seed);
}

DurationSummary predict_trial_duration(const ModelCheckpoint& model, const TrialRecord& trial,
                                       const EncodedBatch& row, const DurationSettings& settings) {
    if (row.size() != 1) throw StructuralError("predict_trial_duration: expected one encoded row");
    return duration_from_params(predict_site_params(model, row).front(), trial, settings);
}

void attach_site_targets(TrainingSet& set, std::span<const TrialRecord> trials, std::span<const SiteOutcome> sites) {
    std::unordered_map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < trials.size(); ++i) row_of.emplace(trials[i].trial_id, i);
    set.site_rates.assign(trials.size(), {});
    set.site_startups.assign(trials.size(), {});
    for (const auto& s : sites) {
        const auto it = row_of.find(s.trial_id);
        if (it == row_of.end()) continue;
        set.site_rates[it->second].push_back(s.rate + kSiteTargetShift);
        set.site_startups[it->second].push_back(s.startup_months + kSiteTargetShift);
    }
}

ad::NodeId build_loss(ad::Graph& g, HeadKind head, const BackboneConfig& config, const TrainingSet& set,
                      std::span<const std::size_t> rows) {
    const EncodedBatch x = gather(set.x, rows);
    const auto outs = forward_head(g, config, head, forward_backbone(g, config, x));
    switch (head) {
        case HeadKind::Deterministic: {
            std::vector<double> counts;
            for (std::size_t r : rows) counts.push_back(set.enrollment.at(r));
            return ad::l1_log_loss(g, outs[0], counts);
        }
        case HeadKind::Gamma:
            return ad::gamma_nll_loss(g, outs[0], outs[1], log1p_targets(set.enrollment, rows));
        case HeadKind::PoissonGamma: {
            const ad::NodeId rate = ad::gamma_nll_grouped(g, outs[0], outs[1], pick_groups(set.site_rates, rows));
            const ad::NodeId startup =
                ad::gamma_nll_grouped(g, outs[2], outs[3], pick_groups(set.site_startups, rows));
            return ad::add(g, rate, startup);
        }
    }
    throw UsageError("unknown head kind");
}

double evaluate_loss(const ModelCheckpoint& model, const TrainingSet& set) {
    check_training_set(model.head, set, "evaluation");
    double total = 0.0;
    for (std::size_t start = 0; start < set.size(); start += kEvalChunk) {
        const std::size_t stop = std::min(set.size(), start + kEvalChunk);
        std::vector<std::size_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        ad::Graph g(readonly(model.weights), ad::Mode::Eval);
        total += g.value(build_loss(g, model.head, model.backbone, set, idx)).item() * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(set.size());
}

ModelCheckpoint train_model(HeadKind head, const Encoder& encoder, const TrainingSet& train, const TrainingSet& dev,
                            const BackboneConfig& backbone, const TrainConfig& config, const EpochCallback& on_epoch) {
    backbone.validate();
    config.validate();
    check_training_set(head, train, "train");
    check_training_set(head, dev, "dev");

    ModelCheckpoint model;
    model.head = head;
    model.backbone = backbone;
    model.train = config;
    model.encoder = encoder;

    const Rng root(config.seed);
    Rng init_rng = root.split(0);
    Rng order_rng = root.split(1);
    init_parameters(model.weights, backbone, head, init_rng);
    init_output_biases(model.weights, head, train);

    ad::AdamWConfig opt_config;
    opt_config.lr = config.body_lr;
    opt_config.weight_decay = config.weight_decay;
    opt_config.decay_vectors = false;
    opt_config.group_lr = {{"input", config.input_lr}, {"body", config.body_lr}};
    ad::AdamW optimizer(opt_config);

    model.meta.seed = config.seed;
    model.meta.dev_metric = head == HeadKind::PoissonGamma ? "nll" : "mae";
    ad::ParameterStore best = model.weights;
    double best_metric = dev_metric(head, model, dev);
    std::size_t best_epoch = 0;
    std::size_t stale = 0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::uint64_t step = 0;

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        shuffle(std::span<std::size_t>(order), order_rng);
        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t stop = std::min(order.size(), start + config.batch_size);
            const std::span<const std::size_t> rows(order.data() + start, stop - start);
            ad::Graph g(&model.weights, ad::Mode::Train, splitmix64(config.seed ^ splitmix64(++step)));
            const ad::NodeId loss = build_loss(g, head, backbone, train, rows);
            const double value = g.value(loss).item();
            if (!std::isfinite(value)) {
                std::ostringstream os;
                os << "training diverged: non-finite loss at epoch " << epoch << ", batch " << start / config.batch_size;
                throw NumericError(os.str());
            }
            loss_sum += value * static_cast<double>(rows.size());
            g.backward(loss);
            optimizer.step(model.weights, g.parameter_gradients());
        }

        const double train_loss = loss_sum / static_cast<double>(order.size());
        const double metric = dev_metric(head, model, dev);
        if (!std::isfinite(metric)) {
            throw NumericError("training diverged: non-finite dev metric at epoch " + std::to_string(epoch));
        }
        const bool improved = metric < best_metric;
        if (improved) {
            best_metric = metric;
            best_epoch = epoch;
            best = model.weights;
            stale = 0;
        } else {
            ++stale;
        }
        model.meta.epochs_run = epoch;
        model.meta.train_loss_history.push_back(train_loss);
        model.meta.dev_history.push_back(metric);
        logger().debug("epoch {} train_loss {:.6f} dev_{} {:.6f}{}", epoch, train_loss, model.meta.dev_metric, metric,
                       improved ? " *" : "");
        if (on_epoch) on_epoch({epoch, train_loss, metric, improved});
        if (stale >= config.patience) break;
    }

    model.weights = std::move(best);
    model.meta.best_epoch = best_epoch;
    model.meta.best_dev_metric = best_metric;
    return model;
}

}  // namespace enfc
