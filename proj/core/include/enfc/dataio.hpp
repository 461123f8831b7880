#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "enfc/records.hpp"

namespace enfc {

struct LoadStats {
    std::size_t lines = 0;
    std::size_t unknown_fields = 0;
};

// Trial records: JSON lines, one object per trial, keys named as the
// TrialRecord fields. Unknown keys are ignored and counted.

std::vector<TrialRecord> read_trials(std::istream& in, LoadStats* stats = nullptr);
void write_trials(std::ostream& out, std::span<const TrialRecord> records);
std::vector<TrialRecord> load_trials(const std::filesystem::path& path, LoadStats* stats = nullptr);
void save_trials(const std::filesystem::path& path, std::span<const TrialRecord> records);

std::string trial_to_json_line(const TrialRecord& record);

// Site outcomes: JSON lines with trial_id, site_id, patients, startup_months, rate.

std::vector<SiteOutcome> read_sites(std::istream& in, LoadStats* stats = nullptr);
void write_sites(std::ostream& out, std::span<const SiteOutcome> sites);
std::vector<SiteOutcome> load_sites(const std::filesystem::path& path, LoadStats* stats = nullptr);
void save_sites(const std::filesystem::path& path, std::span<const SiteOutcome> sites);

/// n × dim float32 matrix with one row per trial id.
struct EmbeddingMatrix {
    std::vector<std::string> ids;
    std::size_t dim = 0;
    std::vector<float> values;  // row-major, ids.size() * dim

    std::size_t rows() const { return ids.size(); }
    std::span<const float> row(std::size_t i) const;
    /// Row index of `id`; throws DataError if absent.
    std::size_t index_of(const std::string& id) const;

    friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

// Binary layout: "EMB1", u32 n, u32 dim, n NUL-terminated UTF-8 ids, then
// n*dim little-endian float32 values. Errors: FormatError (magic),
// SizeMismatchError (counts/truncation), ValidationError (NaN/Inf, names the row).

EmbeddingMatrix read_embeddings(std::istream& in);
void write_embeddings(std::ostream& out, const EmbeddingMatrix& matrix);
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& matrix);

/// rate = patients / (trial_duration − startup). DataError if startup >= duration.
SiteOutcome derive_site_rate(const SiteOutcome& site, double trial_duration_months);

struct SplitSizes {
    std::size_t train = 0;
    std::size_t dev = 0;
    std::size_t test = 0;
};

/// Sizes proportional to 9410 / 1000 / 1000 for `n` records.
SplitSizes default_split_sizes(std::size_t n);

struct DatasetSplit {
    std::vector<TrialRecord> train;
    std::vector<TrialRecord> dev;
    std::vector<TrialRecord> test;
    bool stratified = true;
};

/// Stratified by deciles of actual_enrollment (records without one form an
/// extra stratum). Each split's per-stratum count is within one record of its
/// proportional share. Falls back to a seeded random split (with a warning)
/// when some decile has fewer than 3 records.
DatasetSplit split_dataset(std::span<const TrialRecord> records, SplitSizes sizes, std::uint64_t seed);

/// Trials with planned_sites > 10 and 6 <= duration_months <= 36.
std::vector<TrialRecord> filter_pg_eligible(std::span<const TrialRecord> records);

}  // namespace enfc
