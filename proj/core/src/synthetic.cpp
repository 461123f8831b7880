#include "enfc/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "enfc/encoding.hpp"
#include "enfc/error.hpp"
#include "enfc/pgsim.hpp"
#include "enfc/randdist.hpp"

namespace enfc {
namespace detail {
extern const char* const kSyntheticV1Json;
}

namespace {

using json = nlohmann::ordered_json;

LabelEffect effect_from(const json& j) {
    return {j.value("e", 0.0), j.value("r", 0.0), j.value("s", 0.0)};
}

std::vector<std::pair<std::string, LabelEffect>> effect_table(const json& j) {
    std::vector<std::pair<std::string, LabelEffect>> out;
    for (const auto& [name, value] : j.items()) out.emplace_back(name, effect_from(value));
    if (out.empty()) throw FormatError("synthetic coefficients: empty label table");
    return out;
}

SyntheticProfile profile_from(const json& j) {
    SyntheticProfile p;
    j.at("base_log_enrollment").get_to(p.base_log_enrollment);
    j.at("enrollment_noise_sd").get_to(p.enrollment_noise_sd);
    j.at("plan_log_bias").get_to(p.plan_log_bias);
    j.at("plan_noise_sd").get_to(p.plan_noise_sd);
    j.at("base_log_rate").get_to(p.base_log_rate);
    j.at("rate_noise_sd").get_to(p.rate_noise_sd);
    j.at("rate_shape").get_to(p.rate_shape);
    j.at("base_log_startup").get_to(p.base_log_startup);
    j.at("startup_noise_sd").get_to(p.startup_noise_sd);
    j.at("startup_shape").get_to(p.startup_shape);
    j.at("plan_duration_log_mean").get_to(p.plan_duration_log_mean);
    j.at("plan_duration_log_sd").get_to(p.plan_duration_log_sd);
    j.at("target_is_plan").get_to(p.target_is_plan);
    j.at("min_sites").get_to(p.min_sites);
    j.at("max_sites").get_to(p.max_sites);
    j.at("min_countries").get_to(p.min_countries);
    j.at("max_countries").get_to(p.max_countries);
    j.at("multi_phase_prob").get_to(p.multi_phase_prob);
    j.at("second_ta_prob").get_to(p.second_ta_prob);
    j.at("completed_fraction").get_to(p.completed_fraction);
    j.at("cap_months").get_to(p.cap_months);
    if (p.min_sites < 1 || p.max_sites < p.min_sites || p.min_countries < 1 || p.max_countries < p.min_countries) {
        throw FormatError("synthetic profile: bad site or country range");
    }
    if (!(p.rate_shape > 0.0) || !(p.startup_shape > 0.0) || !(p.cap_months >= 1.0)) {
        throw FormatError("synthetic profile: shapes and cap must be positive");
    }
    return p;
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

using TokenCache = std::unordered_map<std::string, std::vector<double>>;

std::vector<double> text_projection(const TrialRecord& trial, const EmbeddingSpec& spec, TokenCache& cache) {
    std::vector<double> out(spec.dim, 0.0);
    const double scale = 1.0 / std::sqrt(static_cast<double>(spec.dim));
    for (const auto& tok : tokenize(serialize_context(trial))) {
        auto it = cache.find(tok);
        if (it == cache.end()) {
            Rng r(splitmix64(spec.projection_seed ^ fnv1a(tok)));
            std::vector<double> v(spec.dim);
            for (double& x : v) x = r.normal() * scale;
            it = cache.emplace(tok, std::move(v)).first;
        }
        for (std::size_t k = 0; k < spec.dim; ++k) out[k] += it->second[k];
    }
    return out;
}

std::size_t weighted_pick(const std::vector<double>& weights, Rng& rng) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (u < weights[i]) return i;
        u -= weights[i];
    }
    return weights.size() - 1;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string pad_index(std::size_t i) {
    std::string s = std::to_string(i + 1);
    return std::string(s.size() < 6 ? 6 - s.size() : 0, '0') + s;
}

struct SiteDraw {
    double rate = 0.0;
    double startup = 0.0;
    std::int64_t patients = 0;
};

// Monthly per-site Poisson arrivals until the target is met; arrivals of the
// final month beyond the target are removed uniformly at random.
double simulate_sites(std::vector<SiteDraw>& sites, std::int64_t target, double cap, Rng& rng, bool& censored) {
    const auto months = static_cast<std::int64_t>(std::floor(cap));
    std::vector<std::int64_t> month(sites.size());
    std::int64_t total = 0;
    for (std::int64_t t = 1; t <= months; ++t) {
        std::int64_t month_total = 0;
        for (std::size_t j = 0; j < sites.size(); ++j) {
            const double exposure = site_exposure(sites[j].startup, t, 1.0);
            month[j] = exposure > 0.0 ? poisson_sample(sites[j].rate * exposure, rng) : 0;
            month_total += month[j];
        }
        if (total + month_total >= target) {
            std::int64_t excess = total + month_total - target;
            while (excess > 0) {
                auto pick = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(month_total)));
                std::size_t j = 0;
                while (pick >= month[j]) pick -= month[j++];
                --month[j];
                --month_total;
                --excess;
            }
            for (std::size_t j = 0; j < sites.size(); ++j) sites[j].patients += month[j];
            censored = false;
            return static_cast<double>(t);
        }
        for (std::size_t j = 0; j < sites.size(); ++j) sites[j].patients += month[j];
        total += month_total;
    }
    censored = true;
    return static_cast<double>(months);
}

}  // namespace

const SyntheticProfile& SyntheticCoefficients::profile(const std::string& name) const {
    const auto it = profiles.find(name);
    if (it == profiles.end()) throw UsageError("unknown synthetic profile '" + name + "'");
    return it->second;
}

SyntheticCoefficients parse_coefficients(const std::string& json_text) {
    try {
        const json j = json::parse(json_text);
        SyntheticCoefficients c;
        j.at("version").get_to(c.version);
        c.phases = effect_table(j.at("phase"));
        j.at("phase_weights").get_to(c.phase_weights);
        if (c.phase_weights.size() != c.phases.size()) throw FormatError("synthetic coefficients: phase weights");
        c.countries = effect_table(j.at("countries"));
        for (const auto& [name, ta] : j.at("therapeutic_areas").items()) {
            TherapeuticAreaSpec spec{name, effect_from(ta), {}};
            for (const auto& [ind, eff] : ta.at("indications").items()) spec.indications.push_back({ind, effect_from(eff)});
            if (spec.indications.empty()) throw FormatError("synthetic coefficients: '" + name + "' has no indications");
            c.therapeutic_areas.push_back(std::move(spec));
        }
        c.sponsors = effect_table(j.at("sponsors"));
        c.mechanisms = effect_table(j.at("mechanisms"));
        const json& e = j.at("embedding");
        e.at("dim").get_to(c.embedding.dim);
        e.at("noise_sd").get_to(c.embedding.noise_sd);
        e.at("projection_seed").get_to(c.embedding.projection_seed);
        for (const auto& [name, p] : j.at("profiles").items()) c.profiles.emplace(name, profile_from(p));
        if (c.therapeutic_areas.size() < 2 || c.embedding.dim == 0) {
            throw FormatError("synthetic coefficients: need two therapeutic areas and a positive embedding width");
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("synthetic coefficients: ") + e.what());
    }
}

const SyntheticCoefficients& default_coefficients() {
    static const SyntheticCoefficients c = parse_coefficients(detail::kSyntheticV1Json);
    return c;
}

SyntheticCoefficients load_coefficients(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_coefficients(buf.str());
}

std::vector<float> hashed_text_embedding(const TrialRecord& trial, const EmbeddingSpec& spec) {
    TokenCache cache;
    const auto v = text_projection(trial, spec, cache);
    return {v.begin(), v.end()};
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config, const SyntheticCoefficients& c) {
    if (config.n_trials == 0) throw DomainError("generate_synthetic: n_trials must be positive");
    const SyntheticProfile& p = c.profile(config.profile);
    const Rng root(config.seed);
    TokenCache cache;

    SyntheticDataset out;
    out.embeddings.dim = c.embedding.dim;
    out.trials.reserve(config.n_trials);
    out.latents.reserve(config.n_trials);

    for (std::size_t i = 0; i < config.n_trials; ++i) {
        Rng rng = root.split(i);
        TrialRecord t;
        t.trial_id = config.id_prefix + "-" + pad_index(i);

        // Key attributes
        std::vector<std::size_t> phase_idx;
        if (p.multi_phase_prob > 0.0 && rng.uniform() < p.multi_phase_prob && c.phases.size() >= 3) {
            const std::size_t lo = rng.below(2);  // Phase 1/2 or Phase 2/3
            phase_idx = {lo, lo + 1};
        } else {
            phase_idx = {weighted_pick(c.phase_weights, rng)};
        }
        const std::size_t n_countries =
            p.min_countries + rng.below(std::min(p.max_countries, c.countries.size()) - p.min_countries + 1);
        std::vector<std::size_t> country_pool(c.countries.size());
        for (std::size_t k = 0; k < country_pool.size(); ++k) country_pool[k] = k;
        for (std::size_t k = 0; k < n_countries; ++k) {
            std::swap(country_pool[k], country_pool[k + rng.below(country_pool.size() - k)]);
        }
        std::vector<std::size_t> country_idx(country_pool.begin(), country_pool.begin() + n_countries);
        std::sort(country_idx.begin(), country_idx.end());
        std::vector<std::size_t> ta_idx = {rng.below(c.therapeutic_areas.size())};
        if (p.second_ta_prob > 0.0 && rng.uniform() < p.second_ta_prob) {
            ta_idx.push_back((ta_idx[0] + 1 + rng.below(c.therapeutic_areas.size() - 1)) % c.therapeutic_areas.size());
        }
        const std::size_t sponsor = rng.below(c.sponsors.size());
        const TherapeuticAreaSpec& main_ta = c.therapeutic_areas[ta_idx[0]];
        const IndicationSpec& indication = main_ta.indications[rng.below(main_ta.indications.size())];
        const auto& mechanism = c.mechanisms[rng.below(c.mechanisms.size())];

        LabelEffect sum{};
        const auto accumulate = [&sum](const LabelEffect& e) {
            sum.enroll += e.enroll;
            sum.rate += e.rate;
            sum.startup += e.startup;
        };
        for (std::size_t k : phase_idx) {
            t.phase.push_back(c.phases[k].first);
            accumulate(c.phases[k].second);
        }
        double country_rate = 0.0;
        double country_startup = 0.0;
        for (std::size_t k : country_idx) {
            t.countries.push_back(c.countries[k].first);
            sum.enroll += c.countries[k].second.enroll;
            country_rate += c.countries[k].second.rate;
            country_startup += c.countries[k].second.startup;
        }
        sum.rate += country_rate / static_cast<double>(n_countries);
        sum.startup += country_startup / static_cast<double>(n_countries);
        for (std::size_t k : ta_idx) {
            t.therapeutic_areas.push_back(c.therapeutic_areas[k].name);
            accumulate(c.therapeutic_areas[k].effect);
        }
        t.sponsors.push_back(c.sponsors[sponsor].first);
        accumulate(c.sponsors[sponsor].second);
        accumulate(indication.effect);
        accumulate(mechanism.second);

        // Context text
        std::vector<std::string> ta_names;
        for (std::size_t k : ta_idx) ta_names.push_back(c.therapeutic_areas[k].name);
        t.title = "A " + join(t.phase, "/") + " study of " + mechanism.first + " in " + indication.name;
        t.objective = "To evaluate the efficacy and safety of " + mechanism.first + " in patients with " + indication.name;
        t.mechanism_of_action = mechanism.first;
        t.indication = indication.name;
        t.inclusion_criteria = "Adults with confirmed " + indication.name + " managed by " + join(ta_names, " and ") +
                               " specialists";
        t.exclusion_criteria = "Prior exposure to " + mechanism.first + " or enrollment in another interventional study";

        // Latent site process
        TrialLatent lat;
        lat.trial_id = t.trial_id;
        const double rate_prior = std::exp(p.base_log_rate + sum.rate);
        lat.rate_mean = rate_prior * std::exp(p.rate_noise_sd * rng.normal());
        lat.startup_mean = std::exp(p.base_log_startup + sum.startup + p.startup_noise_sd * rng.normal());
        lat.rate_shape = p.rate_shape;
        lat.rate_rate = p.rate_shape / lat.rate_mean;
        lat.startup_shape = p.startup_shape;
        lat.startup_rate = p.startup_shape / lat.startup_mean;
        lat.planned_duration = std::exp(p.plan_duration_log_mean + p.plan_duration_log_sd * rng.normal());

        if (p.target_is_plan) {
            t.planned_sites = p.min_sites + static_cast<std::int64_t>(
                                                rng.below(static_cast<std::uint64_t>(p.max_sites - p.min_sites + 1)));
            t.planned_participants = std::max<std::int64_t>(
                1, std::llround(static_cast<double>(t.planned_sites) * rate_prior * lat.planned_duration));
            lat.target = t.planned_participants;
            lat.log_expected_enrollment = std::log(static_cast<double>(lat.target));
        } else {
            lat.log_expected_enrollment = p.base_log_enrollment + sum.enroll;
            const double expected = std::exp(lat.log_expected_enrollment);
            lat.enrollment_noise = p.enrollment_noise_sd * rng.normal();
            lat.target = std::max<std::int64_t>(1, std::llround(expected * std::exp(lat.enrollment_noise)));
            t.planned_participants = std::max<std::int64_t>(
                1, std::llround(expected * std::exp(p.plan_log_bias + p.plan_noise_sd * rng.normal())));
            t.planned_sites = std::clamp<std::int64_t>(std::llround(expected / (rate_prior * lat.planned_duration)),
                                                       p.min_sites, p.max_sites);
        }

        std::vector<SiteDraw> sites(static_cast<std::size_t>(t.planned_sites));
        const GammaParams rate_dist = make_gamma(lat.rate_shape, lat.rate_rate);
        const GammaParams startup_dist = make_gamma(lat.startup_shape, lat.startup_rate);
        for (auto& s : sites) {
            s.rate = gamma_sample(rate_dist, rng);
            s.startup = gamma_sample(startup_dist, rng);
        }
        const double duration = simulate_sites(sites, lat.target, p.cap_months, rng, lat.censored);
        std::int64_t enrolled = 0;
        for (const auto& s : sites) enrolled += s.patients;

        if (enrolled > 0) {
            t.status = rng.uniform() < p.completed_fraction ? TrialStatus::Completed : TrialStatus::Closed;
            t.actual_enrollment = enrolled;
            t.duration_months = duration;
            for (std::size_t j = 0; j < sites.size(); ++j) {
                if (!(sites[j].startup < duration)) continue;  // never opened; no patients
                SiteOutcome so;
                so.trial_id = t.trial_id;
                so.site_id = t.trial_id + "-S" + std::to_string(j + 1);
                so.patients = sites[j].patients;
                so.startup_months = sites[j].startup;
                out.sites.push_back(derive_site_rate(so, duration));
            }
        } else {
            t.status = TrialStatus::Other;
        }

        std::vector<double> emb = text_projection(t, c.embedding, cache);
        for (double& v : emb) v += c.embedding.noise_sd * rng.normal();
        out.embeddings.ids.push_back(t.trial_id);
        for (double v : emb) out.embeddings.values.push_back(static_cast<float>(v));

        out.trials.push_back(std::move(t));
        out.latents.push_back(std::move(lat));
    }
    return out;
}

void write_latents(std::ostream& out, std::span<const TrialLatent> latents) {
    for (const auto& l : latents) {
        json j = {{"trial_id", l.trial_id},
                  {"log_expected_enrollment", l.log_expected_enrollment},
                  {"enrollment_noise", l.enrollment_noise},
                  {"target", l.target},
                  {"rate_mean", l.rate_mean},
                  {"rate_shape", l.rate_shape},
                  {"rate_rate", l.rate_rate},
                  {"startup_mean", l.startup_mean},
                  {"startup_shape", l.startup_shape},
                  {"startup_rate", l.startup_rate},
                  {"planned_duration", l.planned_duration},
                  {"censored", l.censored}};
        out << j.dump() << '\n';
    }
}

std::vector<TrialLatent> read_latents(std::istream& in) {
    std::vector<TrialLatent> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const json j = json::parse(line);
            TrialLatent l;
            j.at("trial_id").get_to(l.trial_id);
            j.at("log_expected_enrollment").get_to(l.log_expected_enrollment);
            j.at("enrollment_noise").get_to(l.enrollment_noise);
            j.at("target").get_to(l.target);
            j.at("rate_mean").get_to(l.rate_mean);
            j.at("rate_shape").get_to(l.rate_shape);
            j.at("rate_rate").get_to(l.rate_rate);
            j.at("startup_mean").get_to(l.startup_mean);
            j.at("startup_shape").get_to(l.startup_shape);
            j.at("startup_rate").get_to(l.startup_rate);
            j.at("planned_duration").get_to(l.planned_duration);
            j.at("censored").get_to(l.censored);
            out.push_back(std::move(l));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void save_latents(const std::filesystem::path& path, std::span<const TrialLatent> latents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    write_latents(out, latents);
}

std::vector<TrialLatent> load_latents(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return read_latents(in);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

double lognormal_abs_deviation(double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw DomainError("lognormal_abs_deviation: sigma must be >= 0");
    const double phi = 0.5 * std::erfc(-sigma / std::numbers::sqrt2);
    return std::exp(0.5 * sigma * sigma) * (2.0 * phi - 1.0);
}

double enrollment_noise_floor(std::span<const TrialLatent> latents, double sigma) {
    if (latents.empty()) throw StructuralError("enrollment_noise_floor: no trials");
    double sum = 0.0;
    for (const auto& l : latents) sum += std::exp(l.log_expected_enrollment);
    return sum / static_cast<double>(latents.size()) * lognormal_abs_deviation(sigma);
}

}  // namespace enfc
