#include "enfc/evalmetrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "enfc/error.hpp"

namespace enfc {
namespace {

void check_pairs(std::span<const double> truth, std::span<const double> pred, const char* fn) {
    if (truth.empty()) throw StructuralError(std::string(fn) + ": no data");
    if (truth.size() != pred.size()) {
        throw StructuralError(std::string(fn) + ": " + std::to_string(truth.size()) + " truths vs " +
                              std::to_string(pred.size()) + " predictions");
    }
}

std::vector<double> abs_errors(std::span<const double> truth, std::span<const double> pred) {
    std::vector<double> e(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) e[i] = std::fabs(truth[i] - pred[i]);
    return e;
}

nlohmann::ordered_json opt(const std::optional<double>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

double median(std::vector<double> values) {
    if (values.empty()) throw StructuralError("median: no data");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double mae(std::span<const double> truth, std::span<const double> pred) {
    check_pairs(truth, pred, "mae");
    double total = 0.0;
    for (double e : abs_errors(truth, pred)) total += e;
    return total / static_cast<double>(truth.size());
}

double medae(std::span<const double> truth, std::span<const double> pred) {
    check_pairs(truth, pred, "medae");
    return median(abs_errors(truth, pred));
}

double r2(std::span<const double> truth, std::span<const double> pred) {
    check_pairs(truth, pred, "r2");
    if (truth.size() < 2) throw UndefinedMetricError("r2: need at least two points");
    double mean = 0.0;
    for (double t : truth) mean += t / static_cast<double>(truth.size());
    double ss_tot = 0.0;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        ss_tot += (truth[i] - mean) * (truth[i] - mean);
        ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    }
    if (ss_tot == 0.0) throw UndefinedMetricError("r2: truth has zero variance");
    return 1.0 - ss_res / ss_tot;
}

double window_coverage(std::span<const double> truth, std::span<const double> pred, double window) {
    check_pairs(truth, pred, "window_coverage");
    if (!(window > 0.0)) throw DomainError("window_coverage: window must be positive");
    std::size_t hits = 0;
    for (double e : abs_errors(truth, pred)) hits += e <= 0.5 * window ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

IntervalMetrics interval_metrics(std::span<const double> truth, std::span<const PredictionInterval> intervals) {
    if (truth.empty()) throw StructuralError("interval_metrics: no data");
    if (intervals.size() != truth.size()) {
        throw StructuralError("interval_metrics: " + std::to_string(truth.size()) + " truths vs " +
                              std::to_string(intervals.size()) + " intervals");
    }
    std::size_t inside = 0;
    std::vector<double> widths(truth.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        inside += truth[i] >= intervals[i].lower && truth[i] <= intervals[i].upper ? 1 : 0;
        widths[i] = intervals[i].upper - intervals[i].lower;
    }
    return {static_cast<double>(inside) / static_cast<double>(truth.size()), median(std::move(widths))};
}

void write_calibration_csv(std::ostream& out, std::span<const CalibrationRow> rows) {
    out << "significance,level,accuracy,median_width\n";
    // Shortest text that parses back to the same double.
    const auto put = [&](double v) {
        char buf[32];
        const auto res = std::to_chars(buf, buf + sizeof buf, v);
        out.write(buf, res.ptr - buf);
    };
    for (const auto& r : rows) {
        put(r.significance);
        out << ',';
        put(r.level);
        out << ',';
        put(r.accuracy);
        out << ',';
        put(r.median_width);
        out << '\n';
    }
}

nlohmann::ordered_json report_to_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["mae"] = opt(r.mae);
    j["r2"] = opt(r.r2);
    j["medae"] = opt(r.medae);
    j["coverage_6mo"] = opt(r.coverage_6mo);
    if (r.interval) {
        j["interval"] = {{"level", r.interval->level},
                         {"accuracy", r.interval->accuracy},
                         {"median_width", r.interval->median_width}};
    } else {
        j["interval"] = {{"level", nullptr}, {"accuracy", nullptr}, {"median_width", nullptr}};
    }
    return j;
}

}  // namespace enfc
