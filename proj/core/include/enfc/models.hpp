#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "enfc/autograd.hpp"
#include "enfc/encoding.hpp"
#include "enfc/evalmetrics.hpp"
#include "enfc/pgsim.hpp"
#include "enfc/randdist.hpp"

namespace enfc {

enum class HeadKind { Deterministic, Gamma, PoissonGamma };

std::string_view to_string(HeadKind kind);
/// Accepts deterministic, stochastic (or gamma), poisson-gamma.
HeadKind parse_head_kind(std::string_view text);

struct BackboneConfig {
    std::size_t d_emb = 0;  // text embedding width
    std::size_t d_cat = 0;  // multi-hot width
    std::size_t d_num = kNumericWidth;
    std::size_t hidden = 64;
    std::size_t heads = 4;
    double cat_dropout = 0.3;
    std::size_t branch_layers = 2;

    /// Throws StructuralError / DomainError on inconsistent settings.
    void validate() const;
    friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

struct TrainConfig {
    std::size_t batch_size = 256;
    double input_lr = 1e-4;  // the three input branches
    double body_lr = 1e-3;   // attention, normalization and heads
    double weight_decay = 0.01;
    std::size_t max_epochs = 200;
    std::size_t patience = 20;  // epochs without dev improvement
    std::uint64_t seed = 0;

    /// Defaults of the study-level models.
    static TrainConfig study_level();
    /// Defaults of the Poisson-Gamma parameter network.
    static TrainConfig poisson_gamma();

    void validate() const;
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct TrainingMeta {
    std::uint64_t seed = 0;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;  // 1-based
    std::string dev_metric;      // "mae" or "nll"
    double best_dev_metric = 0.0;
    std::vector<double> dev_history;
    std::vector<double> train_loss_history;

    friend bool operator==(const TrainingMeta&, const TrainingMeta&) = default;
};

struct ModelCheckpoint {
    HeadKind head = HeadKind::Deterministic;
    BackboneConfig backbone;
    TrainConfig train;
    Encoder encoder;
    ad::ParameterStore weights;
    TrainingMeta meta;

    friend bool operator==(const ModelCheckpoint&, const ModelCheckpoint&) = default;
};

/// Adds every weight tensor of the backbone and `head` to `store` with
/// seeded random values. Branch tensors go to group "input", the rest to "body".
void init_parameters(ad::ParameterStore& store, const BackboneConfig& config, HeadKind head, Rng& rng);

/// h [B, D] = LayerNorm(attention(z_emb; z_cat, z_num) + z_emb).
ad::NodeId forward_backbone(ad::Graph& g, const BackboneConfig& config, const EncodedBatch& batch);

/// Raw head outputs, each of shape [B]. The deterministic head fills
/// outputs[0] (log prediction); the Gamma head fills shape and rate logits;
/// the Poisson-Gamma head fills rate shape, rate rate, startup shape, startup rate logits.
std::vector<ad::NodeId> forward_head(ad::Graph& g, const BackboneConfig& config, HeadKind head, ad::NodeId h);

/// Eval-mode head outputs as rows [B][k].
std::vector<std::vector<double>> head_outputs(const ModelCheckpoint& model, const EncodedBatch& batch);

/// exp(log prediction) − 1, clamped at 0. Deterministic head only.
std::vector<double> predict_point(const ModelCheckpoint& model, const EncodedBatch& batch);

/// Distribution of ln(y + 1). Gamma head only.
std::vector<GammaParams> predict_distribution(const ModelCheckpoint& model, const EncodedBatch& batch);

/// Point estimate of either study-level head: the deterministic prediction, or
/// exp(shape / rate) − 1 for the Gamma head.
std::vector<double> predict_enrollment(const ModelCheckpoint& model, const EncodedBatch& batch);

/// Equal-tailed interval of a log-space Gamma mapped back by exp(·) − 1.
PredictionInterval interval_from_log_gamma(const GammaParams& params, double significance);
std::vector<PredictionInterval> predict_interval(const ModelCheckpoint& model, const EncodedBatch& batch,
                                                 double significance);

/// Interval accuracy and median width at each significance level. Gamma head only.
std::vector<CalibrationRow> calibration_sweep(const ModelCheckpoint& model, const EncodedBatch& batch,
                                              std::span<const double> truth, std::span<const double> significances);

struct PoissonGammaParams {
    GammaParams rate_dist;
    GammaParams startup_dist;
};

/// Poisson-Gamma head only.
std::vector<PoissonGammaParams> predict_site_params(const ModelCheckpoint& model, const EncodedBatch& batch);

struct DurationSettings {
    std::size_t replications = 1024;
    double cap_months = 72.0;
    std::uint64_t seed = 0;
};

/// Simulates the trial's duration with its planned sites and target enrollment
/// under the predicted site distributions. `row` is the trial's encoded batch of one.
DurationSummary predict_trial_duration(const ModelCheckpoint& model, const TrialRecord& trial,
                                       const EncodedBatch& row, const DurationSettings& settings);
DurationSummary duration_from_params(const PoissonGammaParams& params, const TrialRecord& trial,
                                     const DurationSettings& settings);

/// Targets for one split. Study-level heads use `enrollment`; the
/// Poisson-Gamma head uses per-trial site rates and startup times.
struct TrainingSet {
    EncodedBatch x;
    std::vector<double> enrollment;
    std::vector<std::vector<double>> site_rates;
    std::vector<std::vector<double>> site_startups;

    std::size_t size() const { return x.size(); }
};

/// Offset added to site targets before the Gamma likelihood.
inline constexpr double kSiteTargetShift = 1e-6;

/// Groups site outcomes by trial in `trials` order (shifted by kSiteTargetShift).
/// Trials without sites get empty groups.
void attach_site_targets(TrainingSet& set, std::span<const TrialRecord> trials, std::span<const SiteOutcome> sites);

struct EpochReport {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double dev_metric = 0.0;
    bool improved = false;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Trains from seeded initial weights and returns the parameters of the epoch
/// with the best dev metric (MAE for the study-level heads, mean NLL for Poisson-Gamma).
ModelCheckpoint train_model(HeadKind head, const Encoder& encoder, const TrainingSet& train, const TrainingSet& dev,
                            const BackboneConfig& backbone, const TrainConfig& config,
                            const EpochCallback& on_epoch = {});

/// Training loss of `model` on a whole split (eval mode).
double evaluate_loss(const ModelCheckpoint& model, const TrainingSet& set);

/// Loss graph for one batch; exposed for gradient checks.
ad::NodeId build_loss(ad::Graph& g, HeadKind head, const BackboneConfig& config, const TrainingSet& set,
                      std::span<const std::size_t> rows);

// Checkpoint file: "ENFC", u32 version, u64 manifest length, JSON manifest,
// little-endian f64 tensor payloads in manifest order, trailing CRC32 of all
// preceding bytes.

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const ModelCheckpoint& model);
/// FormatError (magic or manifest), VersionError, SizeMismatchError
/// (truncation), ChecksumError.
ModelCheckpoint deserialize_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const ModelCheckpoint& model);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace enfc
