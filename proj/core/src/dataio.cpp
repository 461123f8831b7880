#include "enfc/dataio.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "enfc/error.hpp"
#include "enfc/log.hpp"
#include "enfc/randdist.hpp"

namespace enfc {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

const std::set<std::string> kTrialFields = {
    "trial_id",           "phase",       "countries",        "therapeutic_areas",  "sponsors",
    "title",              "objective",   "mechanism_of_action", "indication",      "inclusion_criteria",
    "exclusion_criteria", "planned_participants", "planned_sites", "status",       "actual_enrollment",
    "duration_months"};

const std::set<std::string> kSiteFields = {"trial_id", "site_id", "patients", "startup_months", "rate"};

[[noreturn]] void line_error(std::size_t line, const std::string& what) {
    throw DataError("line " + std::to_string(line) + ": " + what);
}

std::string get_string(const json& obj, const char* key, std::size_t line, bool required) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        if (required) line_error(line, std::string("missing field '") + key + "'");
        return {};
    }
    if (!it->is_string()) line_error(line, std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
}

std::vector<std::string> get_labels(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return {};
    if (it->is_string()) return {it->get<std::string>()};
    if (!it->is_array()) line_error(line, std::string("field '") + key + "' must be an array of strings");
    std::vector<std::string> out;
    for (const auto& v : *it) {
        if (!v.is_string()) line_error(line, std::string("field '") + key + "' must contain only strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

std::int64_t get_int(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) line_error(line, std::string("missing field '") + key + "'");
    if (it->is_number_integer() || it->is_number_unsigned()) return it->get<std::int64_t>();
    if (it->is_number_float()) {
        const double d = it->get<double>();
        if (std::floor(d) == d && std::fabs(d) < 9e15) return static_cast<std::int64_t>(d);
    }
    line_error(line, std::string("field '") + key + "' must be an integer");
}

double get_double(const json& obj, const char* key, std::size_t line) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) line_error(line, std::string("missing field '") + key + "'");
    if (!it->is_number()) line_error(line, std::string("field '") + key + "' must be a number");
    const double v = it->get<double>();
    if (!std::isfinite(v)) line_error(line, std::string("field '") + key + "' must be finite");
    return v;
}

bool has_value(const json& obj, const char* key) {
    auto it = obj.find(key);
    return it != obj.end() && !it->is_null();
}

json parse_line(const std::string& text, std::size_t line) {
    try {
        json obj = json::parse(text);
        if (!obj.is_object()) line_error(line, "expected a JSON object");
        return obj;
    } catch (const json::parse_error& e) {
        line_error(line, std::string("malformed JSON: ") + e.what());
    }
}

bool blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

TrialRecord trial_from_json(const json& obj, std::size_t line, std::size_t& unknown) {
    for (const auto& [key, _] : obj.items()) {
        if (!kTrialFields.contains(key)) ++unknown;
    }
    TrialRecord r;
    r.trial_id = get_string(obj, "trial_id", line, true);
    if (r.trial_id.empty()) line_error(line, "trial_id must not be empty");
    r.phase = get_labels(obj, "phase", line);
    r.countries = get_labels(obj, "countries", line);
    r.therapeutic_areas = get_labels(obj, "therapeutic_areas", line);
    r.sponsors = get_labels(obj, "sponsors", line);
    r.title = get_string(obj, "title", line, false);
    r.objective = get_string(obj, "objective", line, false);
    r.mechanism_of_action = get_string(obj, "mechanism_of_action", line, false);
    r.indication = get_string(obj, "indication", line, false);
    r.inclusion_criteria = get_string(obj, "inclusion_criteria", line, false);
    r.exclusion_criteria = get_string(obj, "exclusion_criteria", line, false);
    r.planned_participants = get_int(obj, "planned_participants", line);
    if (r.planned_participants < 1) line_error(line, "planned_participants must be positive");
    r.planned_sites = get_int(obj, "planned_sites", line);
    if (r.planned_sites < 1) line_error(line, "planned_sites must be positive");
    try {
        r.status = parse_status(get_string(obj, "status", line, true));
    } catch (const DataError& e) {
        if (std::string(e.what()).starts_with("line ")) throw;
        line_error(line, e.what());
    }
    if (has_value(obj, "actual_enrollment")) {
        r.actual_enrollment = get_int(obj, "actual_enrollment", line);
        if (*r.actual_enrollment < 1) line_error(line, "actual_enrollment must be >= 1 when present");
    }
    if (has_value(obj, "duration_months")) {
        r.duration_months = get_double(obj, "duration_months", line);
        if (!(*r.duration_months > 0.0)) line_error(line, "duration_months must be positive");
    }
    return r;
}

ordered_json trial_to_json(const TrialRecord& r) {
    ordered_json o;
    o["trial_id"] = r.trial_id;
    o["phase"] = r.phase;
    o["countries"] = r.countries;
    o["therapeutic_areas"] = r.therapeutic_areas;
    o["sponsors"] = r.sponsors;
    o["title"] = r.title;
    o["objective"] = r.objective;
    o["mechanism_of_action"] = r.mechanism_of_action;
    o["indication"] = r.indication;
    o["inclusion_criteria"] = r.inclusion_criteria;
    o["exclusion_criteria"] = r.exclusion_criteria;
    o["planned_participants"] = r.planned_participants;
    o["planned_sites"] = r.planned_sites;
    o["status"] = std::string(to_string(r.status));
    if (r.actual_enrollment) o["actual_enrollment"] = *r.actual_enrollment;
    if (r.duration_months) o["duration_months"] = *r.duration_months;
    return o;
}

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode = std::ios::in) {
    std::ifstream in(path, mode);
    if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
    return in;
}

std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, mode | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    return out;
}

// Little-endian primitives for the embedding format.
void put_u32(std::ostream& out, std::uint32_t v) {
    std::array<char, 4> b{};
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out.write(b.data(), 4);
}

bool get_u32(std::istream& in, std::uint32_t& v) {
    std::array<unsigned char, 4> b{};
    if (!in.read(reinterpret_cast<char*>(b.data()), 4)) return false;
    v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return true;
}

}  // namespace

std::string trial_to_json_line(const TrialRecord& record) { return trial_to_json(record).dump(); }

std::vector<TrialRecord> read_trials(std::istream& in, LoadStats* stats) {
    std::vector<TrialRecord> out;
    std::map<std::string, std::size_t> seen;
    std::size_t unknown = 0;
    std::size_t line_no = 0;
    std::string text;
    while (std::getline(in, text)) {
        ++line_no;
        if (blank(text)) continue;
        const json obj = parse_line(text, line_no);
        TrialRecord r = trial_from_json(obj, line_no, unknown);
        auto [it, inserted] = seen.emplace(r.trial_id, line_no);
        if (!inserted) {
            throw DuplicateIdError("duplicate trial_id '" + r.trial_id + "' on lines " + std::to_string(it->second) +
                                   " and " + std::to_string(line_no));
        }
        out.push_back(std::move(r));
    }
    if (unknown > 0) logger().warn("trial records: ignored {} unknown field(s)", unknown);
    if (stats) {
        stats->lines = line_no;
        stats->unknown_fields = unknown;
    }
    return out;
}

void write_trials(std::ostream& out, std::span<const TrialRecord> records) {
    for (const auto& r : records) out << trial_to_json(r).dump() << '\n';
}

std::vector<TrialRecord> load_trials(const std::filesystem::path& path, LoadStats* stats) {
    auto in = open_input(path);
    try {
        return read_trials(in, stats);
    } catch (const DuplicateIdError& e) {
        throw DuplicateIdError(path.string() + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void save_trials(const std::filesystem::path& path, std::span<const TrialRecord> records) {
    auto out = open_output(path);
    write_trials(out, records);
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

std::vector<SiteOutcome> read_sites(std::istream& in, LoadStats* stats) {
    std::vector<SiteOutcome> out;
    std::size_t unknown = 0;
    std::size_t line_no = 0;
    std::string text;
    while (std::getline(in, text)) {
        ++line_no;
        if (blank(text)) continue;
        const json obj = parse_line(text, line_no);
        for (const auto& [key, _] : obj.items()) {
            if (!kSiteFields.contains(key)) ++unknown;
        }
        SiteOutcome s;
        s.trial_id = get_string(obj, "trial_id", line_no, true);
        s.site_id = get_string(obj, "site_id", line_no, true);
        s.patients = get_int(obj, "patients", line_no);
        s.startup_months = get_double(obj, "startup_months", line_no);
        s.rate = get_double(obj, "rate", line_no);
        if (s.patients < 0 || s.startup_months < 0.0 || s.rate < 0.0) {
            line_error(line_no, "site values must be non-negative");
        }
        out.push_back(std::move(s));
    }
    if (unknown > 0) logger().warn("site records: ignored {} unknown field(s)", unknown);
    if (stats) {
        stats->lines = line_no;
        stats->unknown_fields = unknown;
    }
    return out;
}

void write_sites(std::ostream& out, std::span<const SiteOutcome> sites) {
    for (const auto& s : sites) {
        ordered_json o;
        o["trial_id"] = s.trial_id;
        o["site_id"] = s.site_id;
        o["patients"] = s.patients;
        o["startup_months"] = s.startup_months;
        o["rate"] = s.rate;
        out << o.dump() << '\n';
    }
}

std::vector<SiteOutcome> load_sites(const std::filesystem::path& path, LoadStats* stats) {
    auto in = open_input(path);
    try {
        return read_sites(in, stats);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void save_sites(const std::filesystem::path& path, std::span<const SiteOutcome> sites) {
    auto out = open_output(path);
    write_sites(out, sites);
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

// Embeddings

std::span<const float> EmbeddingMatrix::row(std::size_t i) const {
    if (i >= ids.size()) throw StructuralError("EmbeddingMatrix::row: index out of range");
    return std::span<const float>(values).subspan(i * dim, dim);
}

std::size_t EmbeddingMatrix::index_of(const std::string& id) const {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) throw DataError("no embedding row for trial '" + id + "'");
    return static_cast<std::size_t>(it - ids.begin());
}

void write_embeddings(std::ostream& out, const EmbeddingMatrix& m) {
    if (m.values.size() != m.ids.size() * m.dim) {
        throw StructuralError("write_embeddings: value count does not match rows * dim");
    }
    out.write("EMB1", 4);
    put_u32(out, static_cast<std::uint32_t>(m.ids.size()));
    put_u32(out, static_cast<std::uint32_t>(m.dim));
    for (const auto& id : m.ids) {
        if (id.find('\0') != std::string::npos) throw DataError("embedding id contains NUL");
        out.write(id.c_str(), static_cast<std::streamsize>(id.size() + 1));
    }
    for (float f : m.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

EmbeddingMatrix read_embeddings(std::istream& in) {
    std::array<char, 4> magic{};
    if (!in.read(magic.data(), 4) || std::memcmp(magic.data(), "EMB1", 4) != 0) {
        throw FormatError("embeddings: bad magic (expected EMB1)");
    }
    std::uint32_t n = 0;
    std::uint32_t d = 0;
    if (!get_u32(in, n) || !get_u32(in, d)) throw SizeMismatchError("embeddings: truncated header");
    EmbeddingMatrix m;
    m.dim = d;
    m.ids.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string id;
        if (!std::getline(in, id, '\0')) {
            throw SizeMismatchError("embeddings: expected " + std::to_string(n) + " ids, found " + std::to_string(i));
        }
        m.ids.push_back(std::move(id));
    }
    const std::size_t count = static_cast<std::size_t>(n) * d;
    m.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        if (!get_u32(in, bits)) {
            throw SizeMismatchError("embeddings: payload truncated at value " + std::to_string(i) + " of " +
                                    std::to_string(count));
        }
        m.values[i] = std::bit_cast<float>(bits);
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw SizeMismatchError("embeddings: trailing bytes after " + std::to_string(count) + " values");
    }
    for (std::size_t i = 0; i < count; ++i) {
        if (!std::isfinite(m.values[i])) {
            const std::size_t row = d ? i / d : 0;
            throw ValidationError("embeddings: non-finite value in row " + std::to_string(row) + " ('" +
                                  m.ids[row] + "')");
        }
    }
    return m;
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
    auto in = open_input(path, std::ios::in | std::ios::binary);
    try {
        return read_embeddings(in);
    } catch (const ValidationError& e) {
        throw ValidationError(path.string() + ": " + e.what());
    } catch (const SizeMismatchError& e) {
        throw SizeMismatchError(path.string() + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& matrix) {
    auto out = open_output(path, std::ios::out | std::ios::binary);
    write_embeddings(out, matrix);
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

SiteOutcome derive_site_rate(const SiteOutcome& site, double trial_duration_months) {
    if (!(trial_duration_months > site.startup_months)) {
        std::ostringstream os;
        os << "site '" << site.site_id << "' of trial '" << site.trial_id << "': startup " << site.startup_months
           << " is not before trial duration " << trial_duration_months;
        throw DataError(os.str());
    }
    SiteOutcome out = site;
    out.rate = static_cast<double>(site.patients) / (trial_duration_months - site.startup_months);
    return out;
}

// Splitting

SplitSizes default_split_sizes(std::size_t n) {
    constexpr std::size_t kTrain = 9410;
    constexpr std::size_t kDev = 1000;
    constexpr std::size_t kTotal = 11410;
    SplitSizes s;
    s.dev = n * kDev / kTotal;
    s.test = s.dev;
    s.train = n - s.dev - s.test;
    (void)kTrain;
    return s;
}

namespace {

// Integer max-flow by augmenting paths on a tiny dense graph.
class FlowNetwork {
public:
    explicit FlowNetwork(std::size_t n) : cap_(n, std::vector<long long>(n, 0)) {}
    void add(std::size_t u, std::size_t v, long long c) { cap_[u][v] += c; }
    long long cap(std::size_t u, std::size_t v) const { return cap_[u][v]; }

    long long max_flow(std::size_t s, std::size_t t) {
        long long total = 0;
        while (true) {
            std::vector<long long> parent(cap_.size(), -1);
            parent[s] = static_cast<long long>(s);
            std::vector<std::size_t> queue{s};
            for (std::size_t qi = 0; qi < queue.size() && parent[t] < 0; ++qi) {
                const std::size_t u = queue[qi];
                for (std::size_t v = 0; v < cap_.size(); ++v) {
                    if (parent[v] < 0 && cap_[u][v] > 0) {
                        parent[v] = static_cast<long long>(u);
                        queue.push_back(v);
                    }
                }
            }
            if (parent[t] < 0) return total;
            long long f = std::numeric_limits<long long>::max();
            for (std::size_t v = t; v != s; v = static_cast<std::size_t>(parent[v])) {
                f = std::min(f, cap_[static_cast<std::size_t>(parent[v])][v]);
            }
            for (std::size_t v = t; v != s; v = static_cast<std::size_t>(parent[v])) {
                const auto u = static_cast<std::size_t>(parent[v]);
                cap_[u][v] -= f;
                cap_[v][u] += f;
            }
            total += f;
        }
    }

private:
    std::vector<std::vector<long long>> cap_;
};

// Rounds the table counts[s][j] = sizes[j] * strata[s] / total to integers
// so that every entry is the floor or ceiling of its quota while row sums
// equal the stratum sizes and column sums equal the split sizes.
std::vector<std::vector<std::size_t>> controlled_round(const std::vector<std::size_t>& strata,
                                                       const std::vector<std::size_t>& sizes) {
    const std::size_t total = std::accumulate(strata.begin(), strata.end(), std::size_t{0});
    const std::size_t ns = strata.size();
    const std::size_t nj = sizes.size();
    std::vector<std::vector<std::size_t>> table(ns, std::vector<std::size_t>(nj, 0));
    std::vector<long long> row_deficit(ns, 0);
    std::vector<long long> col_deficit(nj, 0);
    for (std::size_t s = 0; s < ns; ++s) {
        std::size_t row = 0;
        for (std::size_t j = 0; j < nj; ++j) {
            table[s][j] = sizes[j] * strata[s] / total;
            row += table[s][j];
        }
        row_deficit[s] = static_cast<long long>(strata[s]) - static_cast<long long>(row);
    }
    for (std::size_t j = 0; j < nj; ++j) {
        std::size_t col = 0;
        for (std::size_t s = 0; s < ns; ++s) col += table[s][j];
        col_deficit[j] = static_cast<long long>(sizes[j]) - static_cast<long long>(col);
    }
    // nodes: 0 = source, 1..ns = strata, ns+1..ns+nj = splits, last = sink
    const std::size_t source = 0;
    const std::size_t sink = ns + nj + 1;
    FlowNetwork net(sink + 1);
    for (std::size_t s = 0; s < ns; ++s) net.add(source, 1 + s, row_deficit[s]);
    for (std::size_t j = 0; j < nj; ++j) net.add(1 + ns + j, sink, col_deficit[j]);
    for (std::size_t s = 0; s < ns; ++s) {
        for (std::size_t j = 0; j < nj; ++j) {
            if ((sizes[j] * strata[s]) % total != 0) net.add(1 + s, 1 + ns + j, 1);
        }
    }
    const long long need = std::accumulate(row_deficit.begin(), row_deficit.end(), 0LL);
    const long long got = net.max_flow(source, sink);
    if (got != need) throw NumericError("split_dataset: controlled rounding failed");
    for (std::size_t s = 0; s < ns; ++s) {
        for (std::size_t j = 0; j < nj; ++j) {
            if ((sizes[j] * strata[s]) % total != 0 && net.cap(1 + s, 1 + ns + j) == 0) ++table[s][j];
        }
    }
    return table;
}

}  // namespace

DatasetSplit split_dataset(std::span<const TrialRecord> records, SplitSizes sizes, std::uint64_t seed) {
    const std::size_t n = records.size();
    const std::size_t requested = sizes.train + sizes.dev + sizes.test;
    if (requested > n) {
        throw StructuralError("split_dataset: requested " + std::to_string(requested) + " records but only " +
                              std::to_string(n) + " available");
    }
    Rng rng(seed);
    DatasetSplit out;
    const std::vector<std::size_t> split_sizes = {sizes.train, sizes.dev, sizes.test, n - requested};

    std::vector<std::size_t> labeled;
    std::vector<std::size_t> unlabeled;
    for (std::size_t i = 0; i < n; ++i) (records[i].actual_enrollment ? labeled : unlabeled).push_back(i);
    std::stable_sort(labeled.begin(), labeled.end(), [&](std::size_t a, std::size_t b) {
        const auto ea = *records[a].actual_enrollment;
        const auto eb = *records[b].actual_enrollment;
        if (ea != eb) return ea < eb;
        return records[a].trial_id < records[b].trial_id;
    });

    constexpr std::size_t kDeciles = 10;
    constexpr std::size_t kMinPerStratum = 3;
    std::vector<std::vector<std::size_t>> strata(kDeciles);
    for (std::size_t r = 0; r < labeled.size(); ++r) strata[r * kDeciles / labeled.size()].push_back(labeled[r]);
    if (!unlabeled.empty()) strata.push_back(unlabeled);

    const bool too_small = std::any_of(strata.begin(), strata.begin() + kDeciles,
                                       [](const auto& s) { return s.size() < kMinPerStratum; });
    std::vector<std::vector<std::size_t>> assigned(4);
    if (too_small) {
        logger().warn("split_dataset: fewer than {} records in some enrollment decile; using a random split",
                      kMinPerStratum);
        out.stratified = false;
        std::vector<std::size_t> all(n);
        std::iota(all.begin(), all.end(), std::size_t{0});
        shuffle(std::span<std::size_t>(all), rng);
        std::size_t pos = 0;
        for (std::size_t j = 0; j < 4; ++j) {
            assigned[j].assign(all.begin() + static_cast<std::ptrdiff_t>(pos),
                               all.begin() + static_cast<std::ptrdiff_t>(pos + split_sizes[j]));
            pos += split_sizes[j];
        }
    } else {
        std::vector<std::size_t> stratum_sizes;
        for (const auto& s : strata) stratum_sizes.push_back(s.size());
        const auto table = controlled_round(stratum_sizes, split_sizes);
        for (std::size_t s = 0; s < strata.size(); ++s) {
            auto members = strata[s];
            shuffle(std::span<std::size_t>(members), rng);
            std::size_t pos = 0;
            for (std::size_t j = 0; j < 4; ++j) {
                for (std::size_t c = 0; c < table[s][j]; ++c) assigned[j].push_back(members[pos++]);
            }
        }
    }
    auto collect = [&](std::vector<std::size_t>& idx, std::vector<TrialRecord>& dst) {
        std::sort(idx.begin(), idx.end());
        dst.reserve(idx.size());
        for (std::size_t i : idx) dst.push_back(records[i]);
    };
    collect(assigned[0], out.train);
    collect(assigned[1], out.dev);
    collect(assigned[2], out.test);
    return out;
}

std::vector<TrialRecord> filter_pg_eligible(std::span<const TrialRecord> records) {
    std::vector<TrialRecord> out;
    for (const auto& r : records) {
        if (r.planned_sites > 10 && r.duration_months && *r.duration_months >= 6.0 && *r.duration_months <= 36.0) {
            out.push_back(r);
        }
    }
    return out;
}

}  // namespace enfc
