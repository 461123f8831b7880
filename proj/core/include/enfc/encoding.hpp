#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "enfc/dataio.hpp"
#include "enfc/records.hpp"
#include "enfc/tensor.hpp"

namespace enfc {

/// Per-feature sorted label lists, blocks laid out in kCategoricalFeatures order.
struct MultiLabelVocab {
    std::vector<std::vector<std::string>> labels;  // one list per feature

    std::size_t width() const;
    /// Column where the block of `feature` starts.
    std::size_t offset(CategoricalFeature feature) const;

    friend bool operator==(const MultiLabelVocab&, const MultiLabelVocab&) = default;
};

/// Throws StructuralError on an empty training set.
MultiLabelVocab fit_categorical(std::span<const TrialRecord> train);

/// Multi-hot row of length vocab.width(). Labels missing from the vocabulary
/// are dropped; their count is added to *unknown when given.
std::vector<double> transform_categorical(const MultiLabelVocab& vocab, const TrialRecord& trial,
                                          std::size_t* unknown = nullptr);

/// Mean and population standard deviation of planned participants and planned sites.
struct ZScoreState {
    std::vector<double> mean;
    std::vector<double> stddev;

    friend bool operator==(const ZScoreState&, const ZScoreState&) = default;
};

inline constexpr std::size_t kNumericWidth = 2;

ZScoreState fit_zscore(std::span<const TrialRecord> train);
/// (x - mean) / std per feature; 0 where std is 0.
std::vector<double> transform_zscore(const ZScoreState& state, const TrialRecord& trial);

/// "title: <v> [SEP] objective: <v> [SEP] ... exclusion_criteria: <v>". A
/// literal " [SEP] " inside a value is replaced by " / ".
std::string serialize_context(const TrialRecord& trial);

struct EncodedTrial {
    std::vector<double> emb;
    std::vector<double> cat;
    std::vector<double> num;
};

/// Model-ready batch: emb [B, d3], cat [B, d1], num [B, d2].
struct EncodedBatch {
    Tensor emb;
    Tensor cat;
    Tensor num;
    std::size_t size() const { return emb.shape().empty() ? 0 : emb.dim(0); }
};

/// Fitted categorical and numeric encoders. Fit only ever sees a training split.
struct Encoder {
    MultiLabelVocab vocab;
    ZScoreState zscore;

    static Encoder fit(std::span<const TrialRecord> train);

    std::size_t cat_width() const { return vocab.width(); }

    /// Looks up the trial's embedding row by id (DataError when absent).
    EncodedTrial encode(const TrialRecord& trial, const EmbeddingMatrix& embeddings,
                        std::size_t* unknown = nullptr) const;

    EncodedBatch encode_batch(std::span<const TrialRecord> trials, const EmbeddingMatrix& embeddings,
                              std::size_t* unknown = nullptr) const;

    friend bool operator==(const Encoder&, const Encoder&) = default;
};

/// Stacks encoded rows into tensors; rows must share widths.
EncodedBatch stack_encoded(std::span<const EncodedTrial> rows);

/// Rows `indices` of a batch.
EncodedBatch gather(const EncodedBatch& batch, std::span<const std::size_t> indices);

void to_json(nlohmann::ordered_json& j, const Encoder& e);
void from_json(const nlohmann::ordered_json& j, Encoder& e);

}  // namespace enfc
