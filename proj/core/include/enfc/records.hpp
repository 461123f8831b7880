#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace enfc {

enum class TrialStatus { Completed, Closed, Other };

std::string_view to_string(TrialStatus status);
/// Throws DataError for anything but "Completed", "Closed" or "Other".
TrialStatus parse_status(std::string_view text);

/// One clinical trial: Key attributes (categorical label sets and planned
/// counts), Context text fields, and observed outcomes when known.
struct TrialRecord {
    std::string trial_id;

    std::vector<std::string> phase;
    std::vector<std::string> countries;
    std::vector<std::string> therapeutic_areas;
    std::vector<std::string> sponsors;

    std::string title;
    std::string objective;
    std::string mechanism_of_action;
    std::string indication;
    std::string inclusion_criteria;
    std::string exclusion_criteria;

    std::int64_t planned_participants = 0;
    std::int64_t planned_sites = 0;
    TrialStatus status = TrialStatus::Other;
    std::optional<std::int64_t> actual_enrollment;
    std::optional<double> duration_months;

    /// Completed or Closed with a known enrollment; usable as a training label.
    bool is_labeled() const;

    friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

/// Per-site observation used as a Poisson-Gamma training target.
struct SiteOutcome {
    std::string trial_id;
    std::string site_id;
    std::int64_t patients = 0;
    double startup_months = 0.0;
    double rate = 0.0;  // patients per month of active enrollment

    friend bool operator==(const SiteOutcome&, const SiteOutcome&) = default;
};

/// The Key categorical features, in encoding order.
enum class CategoricalFeature { Phase, Country, TherapeuticArea, Sponsor };

inline constexpr std::array<CategoricalFeature, 4> kCategoricalFeatures = {
    CategoricalFeature::Phase, CategoricalFeature::Country, CategoricalFeature::TherapeuticArea,
    CategoricalFeature::Sponsor};

std::string_view feature_name(CategoricalFeature feature);
/// Accepts "phase", "countries"/"country", "therapeutic_areas"/"therapeutic_area", "sponsors"/"sponsor".
CategoricalFeature parse_feature(std::string_view name);
const std::vector<std::string>& labels_of(const TrialRecord& trial, CategoricalFeature feature);

}  // namespace enfc
