#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "enfc/dataio.hpp"
#include "enfc/records.hpp"

namespace enfc {

/// Log-scale offsets a label contributes: expected enrollment, mean site
/// rate, mean site startup.
struct LabelEffect {
    double enroll = 0.0;
    double rate = 0.0;
    double startup = 0.0;
};

struct IndicationSpec {
    std::string name;
    LabelEffect effect;
};

struct TherapeuticAreaSpec {
    std::string name;
    LabelEffect effect;
    std::vector<IndicationSpec> indications;
};

/// Knobs of one generated corpus.
struct SyntheticProfile {
    double base_log_enrollment = 0.0;
    double enrollment_noise_sd = 0.0;  // sd of the log-normal noise on realized enrollment
    double plan_log_bias = 0.0;
    double plan_noise_sd = 0.0;
    double base_log_rate = 0.0;
    double rate_noise_sd = 0.0;
    double rate_shape = 1.0;
    double base_log_startup = 0.0;
    double startup_noise_sd = 0.0;
    double startup_shape = 1.0;
    double plan_duration_log_mean = 0.0;
    double plan_duration_log_sd = 0.0;
    // true: sites uniform in [min_sites, max_sites], target = planned participants.
    // false: realized target = expected enrollment times noise, plan is a biased noisy guess.
    bool target_is_plan = false;
    std::int64_t min_sites = 1;
    std::int64_t max_sites = 1;
    std::size_t min_countries = 1;
    std::size_t max_countries = 1;
    double multi_phase_prob = 0.0;
    double second_ta_prob = 0.0;
    double completed_fraction = 1.0;
    double cap_months = 72.0;
};

struct EmbeddingSpec {
    std::size_t dim = 128;
    double noise_sd = 0.0;
    std::uint64_t projection_seed = 0;
};

/// Versioned generator coefficients.
struct SyntheticCoefficients {
    int version = 0;
    std::vector<std::pair<std::string, LabelEffect>> phases;
    std::vector<double> phase_weights;
    std::vector<std::pair<std::string, LabelEffect>> countries;
    std::vector<TherapeuticAreaSpec> therapeutic_areas;
    std::vector<std::pair<std::string, LabelEffect>> sponsors;
    std::vector<std::pair<std::string, LabelEffect>> mechanisms;
    EmbeddingSpec embedding;
    std::map<std::string, SyntheticProfile> profiles;

    const SyntheticProfile& profile(const std::string& name) const;
};

/// The coefficients shipped with the library (data/synthetic_v1.json).
const SyntheticCoefficients& default_coefficients();
SyntheticCoefficients parse_coefficients(const std::string& json_text);
SyntheticCoefficients load_coefficients(const std::filesystem::path& path);

/// Ground truth of one generated trial.
struct TrialLatent {
    std::string trial_id;
    double log_expected_enrollment = 0.0;
    double enrollment_noise = 0.0;  // log-scale noise drawn for the realized target
    std::int64_t target = 0;        // enrollment at which recruitment stops
    double rate_mean = 0.0;
    double rate_shape = 0.0;
    double rate_rate = 0.0;
    double startup_mean = 0.0;
    double startup_shape = 0.0;
    double startup_rate = 0.0;
    double planned_duration = 0.0;
    bool censored = false;

    friend bool operator==(const TrialLatent&, const TrialLatent&) = default;
};

struct SyntheticConfig {
    std::size_t n_trials = 1000;
    std::uint64_t seed = 0;
    std::string profile = "enrollment";
    std::string id_prefix = "SYN";
};

struct SyntheticDataset {
    std::vector<TrialRecord> trials;
    std::vector<SiteOutcome> sites;
    EmbeddingMatrix embeddings;
    std::vector<TrialLatent> latents;
};

/// Trial i is drawn from Rng(seed).split(i) only, so a dataset of n trials is
/// a prefix of a dataset of n + k trials with the same seed.
SyntheticDataset generate_synthetic(const SyntheticConfig& config,
                                    const SyntheticCoefficients& coefficients = default_coefficients());

/// Token-hash bag of serialize_context(trial) under a fixed random projection.
std::vector<float> hashed_text_embedding(const TrialRecord& trial, const EmbeddingSpec& spec);

void write_latents(std::ostream& out, std::span<const TrialLatent> latents);
std::vector<TrialLatent> read_latents(std::istream& in);
void save_latents(const std::filesystem::path& path, std::span<const TrialLatent> latents);
std::vector<TrialLatent> load_latents(const std::filesystem::path& path);

/// E|f e^ε − f| for ε ~ N(0, σ²), per unit f: e^{σ²/2}(2Φ(σ) − 1).
double lognormal_abs_deviation(double sigma);

/// Lowest achievable expected MAE when realized enrollment is the expected
/// enrollment times log-normal noise: the mean of f_i times lognormal_abs_deviation(σ).
double enrollment_noise_floor(std::span<const TrialLatent> latents, double sigma);

}  // namespace enfc
