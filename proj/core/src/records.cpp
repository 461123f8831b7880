#include "enfc/records.hpp"

#include "enfc/error.hpp"

namespace enfc {

std::string_view to_string(TrialStatus status) {
    switch (status) {
        case TrialStatus::Completed: return "Completed";
        case TrialStatus::Closed: return "Closed";
        case TrialStatus::Other: return "Other";
    }
    return "Other";
}

TrialStatus parse_status(std::string_view text) {
    if (text == "Completed") return TrialStatus::Completed;
    if (text == "Closed") return TrialStatus::Closed;
    if (text == "Other") return TrialStatus::Other;
    throw DataError("unknown trial status '" + std::string(text) + "'");
}

bool TrialRecord::is_labeled() const {
    return (status == TrialStatus::Completed || status == TrialStatus::Closed) && actual_enrollment.has_value();
}

std::string_view feature_name(CategoricalFeature feature) {
    switch (feature) {
        case CategoricalFeature::Phase: return "phase";
        case CategoricalFeature::Country: return "countries";
        case CategoricalFeature::TherapeuticArea: return "therapeutic_areas";
        case CategoricalFeature::Sponsor: return "sponsors";
    }
    return "phase";
}

CategoricalFeature parse_feature(std::string_view name) {
    if (name == "phase" || name == "phases") return CategoricalFeature::Phase;
    if (name == "countries" || name == "country") return CategoricalFeature::Country;
    if (name == "therapeutic_areas" || name == "therapeutic_area" || name == "ta") {
        return CategoricalFeature::TherapeuticArea;
    }
    if (name == "sponsors" || name == "sponsor") return CategoricalFeature::Sponsor;
    throw UsageError("unknown categorical feature '" + std::string(name) + "'");
}

const std::vector<std::string>& labels_of(const TrialRecord& trial, CategoricalFeature feature) {
    switch (feature) {
        case CategoricalFeature::Phase: return trial.phase;
        case CategoricalFeature::Country: return trial.countries;
        case CategoricalFeature::TherapeuticArea: return trial.therapeutic_areas;
        case CategoricalFeature::Sponsor: return trial.sponsors;
    }
    return trial.phase;
}

}  // namespace enfc
