#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace enfc {

/// Equal-tailed prediction interval on the original (patient) scale.
struct PredictionInterval {
    double lower = 0.0;
    double upper = 0.0;
    double level = 0.0;
};

// All metrics take aligned truth / prediction lists on the original scale and
// throw StructuralError on empty or misaligned input.

double mae(std::span<const double> truth, std::span<const double> pred);
double medae(std::span<const double> truth, std::span<const double> pred);
/// 1 − SS_res / SS_tot. UndefinedMetricError when the truth has no variance.
double r2(std::span<const double> truth, std::span<const double> pred);
/// Fraction with |truth − pred| ≤ window / 2.
double window_coverage(std::span<const double> truth, std::span<const double> pred, double window);

/// Median of a sample (mean of the two middle values for even sizes).
double median(std::vector<double> values);

struct IntervalMetrics {
    double accuracy = 0.0;      // fraction of truths in [lower, upper]
    double median_width = 0.0;  // median of upper − lower
};

IntervalMetrics interval_metrics(std::span<const double> truth, std::span<const PredictionInterval> intervals);

struct CalibrationRow {
    double significance = 0.0;
    double level = 0.0;
    double accuracy = 0.0;
    double median_width = 0.0;
};

/// Header "significance,level,accuracy,median_width" then one row per entry.
void write_calibration_csv(std::ostream& out, std::span<const CalibrationRow> rows);

struct IntervalReport {
    double level = 0.0;
    double accuracy = 0.0;
    double median_width = 0.0;
};

/// Absent values serialize as null so every key is always present.
struct MetricsReport {
    std::optional<double> mae;
    std::optional<double> r2;
    std::optional<double> medae;
    std::optional<double> coverage_6mo;
    std::optional<IntervalReport> interval;
};

nlohmann::ordered_json report_to_json(const MetricsReport& report);

}  // namespace enfc
