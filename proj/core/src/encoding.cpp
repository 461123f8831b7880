#include "enfc/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <nlohmann/json.hpp>

#include "enfc/error.hpp"
#include "enfc/log.hpp"

namespace enfc {

using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kSep = " [SEP] ";

std::string escape_separator(std::string value) {
    std::size_t pos = 0;
    while ((pos = value.find(kSep, pos)) != std::string::npos) {
        value.replace(pos, kSep.size(), " / ");
        pos += 3;
    }
    return value;
}

std::array<double, kNumericWidth> numeric_row(const TrialRecord& t) {
    return {static_cast<double>(t.planned_participants), static_cast<double>(t.planned_sites)};
}

}  // namespace

std::size_t MultiLabelVocab::width() const {
    std::size_t w = 0;
    for (const auto& l : labels) w += l.size();
    return w;
}

std::size_t MultiLabelVocab::offset(CategoricalFeature feature) const {
    std::size_t off = 0;
    for (std::size_t i = 0; i < kCategoricalFeatures.size(); ++i) {
        if (kCategoricalFeatures[i] == feature) return off;
        off += labels.at(i).size();
    }
    return off;
}

MultiLabelVocab fit_categorical(std::span<const TrialRecord> train) {
    if (train.empty()) throw StructuralError("fit_categorical: empty training set");
    MultiLabelVocab vocab;
    for (CategoricalFeature f : kCategoricalFeatures) {
        std::set<std::string> seen;
        for (const auto& t : train) {
            for (const auto& label : labels_of(t, f)) seen.insert(label);
        }
        vocab.labels.emplace_back(seen.begin(), seen.end());
    }
    return vocab;
}

std::vector<double> transform_categorical(const MultiLabelVocab& vocab, const TrialRecord& trial,
                                          std::size_t* unknown) {
    std::vector<double> row(vocab.width(), 0.0);
    std::size_t offset = 0;
    std::size_t missing = 0;
    for (std::size_t i = 0; i < kCategoricalFeatures.size(); ++i) {
        const auto& block = vocab.labels.at(i);
        for (const auto& label : labels_of(trial, kCategoricalFeatures[i])) {
            auto it = std::lower_bound(block.begin(), block.end(), label);
            if (it != block.end() && *it == label) {
                row[offset + static_cast<std::size_t>(it - block.begin())] = 1.0;
            } else {
                ++missing;
            }
        }
        offset += block.size();
    }
    if (unknown) *unknown += missing;
    return row;
}

ZScoreState fit_zscore(std::span<const TrialRecord> train) {
    if (train.empty()) throw StructuralError("fit_zscore: empty training set");
    ZScoreState s;
    s.mean.assign(kNumericWidth, 0.0);
    s.stddev.assign(kNumericWidth, 0.0);
    const double n = static_cast<double>(train.size());
    for (const auto& t : train) {
        const auto row = numeric_row(t);
        for (std::size_t j = 0; j < kNumericWidth; ++j) s.mean[j] += row[j] / n;
    }
    for (const auto& t : train) {
        const auto row = numeric_row(t);
        for (std::size_t j = 0; j < kNumericWidth; ++j) s.stddev[j] += (row[j] - s.mean[j]) * (row[j] - s.mean[j]);
    }
    for (auto& v : s.stddev) v = std::sqrt(v / n);
    return s;
}

std::vector<double> transform_zscore(const ZScoreState& state, const TrialRecord& trial) {
    const auto row = numeric_row(trial);
    std::vector<double> out(kNumericWidth, 0.0);
    for (std::size_t j = 0; j < kNumericWidth; ++j) {
        if (state.stddev.at(j) > 0.0) out[j] = (row[j] - state.mean.at(j)) / state.stddev[j];
    }
    return out;
}

std::string serialize_context(const TrialRecord& t) {
    const std::pair<const char*, const std::string*> fields[] = {
        {"title", &t.title},
        {"objective", &t.objective},
        {"mechanism_of_action", &t.mechanism_of_action},
        {"indication", &t.indication},
        {"inclusion_criteria", &t.inclusion_criteria},
        {"exclusion_criteria", &t.exclusion_criteria},
    };
    std::string out;
    bool first = true;
    for (const auto& [name, value] : fields) {
        if (!first) out += kSep;
        first = false;
        out += name;
        out += ": ";
        out += escape_separator(*value);
    }
    return out;
}

Encoder Encoder::fit(std::span<const TrialRecord> train) { return {fit_categorical(train), fit_zscore(train)}; }

EncodedTrial Encoder::encode(const TrialRecord& trial, const EmbeddingMatrix& embeddings, std::size_t* unknown) const {
    EncodedTrial e;
    const auto row = embeddings.row(embeddings.index_of(trial.trial_id));
    e.emb.assign(row.begin(), row.end());
    e.cat = transform_categorical(vocab, trial, unknown);
    e.num = transform_zscore(zscore, trial);
    return e;
}

EncodedBatch Encoder::encode_batch(std::span<const TrialRecord> trials, const EmbeddingMatrix& embeddings,
                                   std::size_t* unknown) const {
    std::vector<EncodedTrial> rows;
    rows.reserve(trials.size());
    std::size_t missing = 0;
    for (const auto& t : trials) rows.push_back(encode(t, embeddings, &missing));
    if (missing > 0) logger().warn("encoding: dropped {} categorical label(s) unseen in training", missing);
    if (unknown) *unknown += missing;
    return stack_encoded(rows);
}

EncodedBatch stack_encoded(std::span<const EncodedTrial> rows) {
    if (rows.empty()) throw StructuralError("stack_encoded: no rows");
    const std::size_t b = rows.size();
    const std::size_t d3 = rows[0].emb.size();
    const std::size_t d1 = rows[0].cat.size();
    const std::size_t d2 = rows[0].num.size();
    EncodedBatch out{Tensor(Shape{b, d3}), Tensor(Shape{b, d1}), Tensor(Shape{b, d2})};
    for (std::size_t i = 0; i < b; ++i) {
        if (rows[i].emb.size() != d3 || rows[i].cat.size() != d1 || rows[i].num.size() != d2) {
            throw StructuralError("stack_encoded: row " + std::to_string(i) + " has inconsistent widths");
        }
        std::copy(rows[i].emb.begin(), rows[i].emb.end(), out.emb.values().begin() + static_cast<std::ptrdiff_t>(i * d3));
        std::copy(rows[i].cat.begin(), rows[i].cat.end(), out.cat.values().begin() + static_cast<std::ptrdiff_t>(i * d1));
        std::copy(rows[i].num.begin(), rows[i].num.end(), out.num.values().begin() + static_cast<std::ptrdiff_t>(i * d2));
    }
    return out;
}

EncodedBatch gather(const EncodedBatch& batch, std::span<const std::size_t> indices) {
    auto pick = [&](const Tensor& src) {
        const std::size_t w = src.last_dim();
        Tensor out(Shape{indices.size(), w});
        for (std::size_t r = 0; r < indices.size(); ++r) {
            const std::size_t i = indices[r];
            if (i >= src.dim(0)) throw StructuralError("gather: row index out of range");
            std::copy_n(src.values().begin() + static_cast<std::ptrdiff_t>(i * w), w,
                        out.values().begin() + static_cast<std::ptrdiff_t>(r * w));
        }
        return out;
    };
    return {pick(batch.emb), pick(batch.cat), pick(batch.num)};
}

void to_json(ordered_json& j, const Encoder& e) {
    ordered_json vocab = ordered_json::object();
    for (std::size_t i = 0; i < kCategoricalFeatures.size(); ++i) {
        vocab[std::string(feature_name(kCategoricalFeatures[i]))] = e.vocab.labels.at(i);
    }
    j = ordered_json{{"vocab", vocab},
                     {"zscore", {{"features", {"planned_participants", "planned_sites"}},
                                 {"mean", e.zscore.mean},
                                 {"std", e.zscore.stddev}}}};
}

void from_json(const ordered_json& j, Encoder& e) {
    try {
        e.vocab.labels.clear();
        for (CategoricalFeature f : kCategoricalFeatures) {
            e.vocab.labels.push_back(j.at("vocab").at(std::string(feature_name(f))).get<std::vector<std::string>>());
        }
        e.zscore.mean = j.at("zscore").at("mean").get<std::vector<double>>();
        e.zscore.stddev = j.at("zscore").at("std").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(std::string("encoder state: ") + ex.what());
    }
    if (e.zscore.mean.size() != kNumericWidth || e.zscore.stddev.size() != kNumericWidth) {
        throw FormatError("encoder state: numeric width mismatch");
    }
    for (const auto& block : e.vocab.labels) {
        if (!std::is_sorted(block.begin(), block.end())) throw FormatError("encoder state: vocabulary not sorted");
    }
}

}  // namespace enfc
