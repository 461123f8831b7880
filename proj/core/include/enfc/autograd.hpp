#pragma once

// Minimal tape-based reverse-mode differentiation over dense tensors.
//
// A Graph is built eagerly: every op computes its value immediately and
// records a backward closure. `backward(loss)` walks the tape in reverse.
// Only the ops the enrollment networks need are provided.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "enfc/randdist.hpp"
#include "enfc/tensor.hpp"

namespace enfc::ad {

struct Parameter {
    std::string name;
    std::string group;
    Tensor value;
};

/// Named, ordered collection of trainable tensors. Insertion order is kept
/// and is the order used for serialization.
class ParameterStore {
public:
    Tensor& add(const std::string& name, Tensor init, const std::string& group = "default");

    bool contains(const std::string& name) const { return index_.contains(name); }
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    const Parameter& entry(const std::string& name) const;

    std::vector<Parameter>& entries() { return params_; }
    const std::vector<Parameter>& entries() const { return params_; }
    std::size_t size() const { return params_.size(); }
    std::size_t scalar_count() const;

    friend bool operator==(const ParameterStore& a, const ParameterStore& b) { return a.params_ == b.params_; }

private:
    std::vector<Parameter> params_;
    std::map<std::string, std::size_t> index_;
};

inline bool operator==(const Parameter& a, const Parameter& b) {
    return a.name == b.name && a.group == b.group && a.value == b.value;
}

using Gradients = std::map<std::string, Tensor>;

using NodeId = std::size_t;

enum class Mode { Train, Eval };

class Graph;
using BackwardFn = std::function<void(Graph&, NodeId)>;

class Graph {
public:
    explicit Graph(ParameterStore* params = nullptr, Mode mode = Mode::Eval, std::uint64_t dropout_seed = 0);

    Mode mode() const { return mode_; }
    Rng& dropout_rng() { return dropout_rng_; }

    /// Leaf holding data that receives no gradient.
    NodeId constant(Tensor value);
    /// Leaf bound to a stored parameter; repeated calls return the same node.
    NodeId parameter(const std::string& name);

    const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
    const Shape& shape(NodeId id) const { return nodes_.at(id).value.shape(); }
    /// Gradient of the last backward pass; zeros if the node was not reached.
    Tensor grad(NodeId id) const;
    /// Mutable gradient buffer for backward closures (allocated on first use).
    Tensor& grad_buffer(NodeId id);
    bool has_grad(NodeId id) const { return nodes_.at(id).grad.has_value(); }

    NodeId record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward);
    const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar node. Throws StructuralError if `loss` is not scalar.
    void backward(NodeId loss);

    /// Gradients of every parameter node created in this graph.
    Gradients parameter_gradients() const;

private:
    struct Node {
        Tensor value;
        std::optional<Tensor> grad;
        std::vector<NodeId> inputs;
        BackwardFn backward;
    };

    ParameterStore* params_;
    Mode mode_;
    Rng dropout_rng_;
    std::vector<Node> nodes_;
    std::map<std::string, NodeId> param_nodes_;
};

// Elementwise and structural ops

NodeId add(Graph& g, NodeId a, NodeId b);
NodeId exp(Graph& g, NodeId x);
NodeId sum(Graph& g, NodeId x);
NodeId mean(Graph& g, NodeId x);
NodeId leaky_relu(Graph& g, NodeId x, double slope = 0.01);
NodeId reshape(Graph& g, NodeId x, Shape shape);
/// [B, k] -> [B]
NodeId select_column(Graph& g, NodeId x, std::size_t column);
/// k tensors of shape [B, D] -> [B, k, D]
NodeId stack(Graph& g, const std::vector<NodeId>& parts);

/// y = x W + b over the last axis. x [..., in], W [in, out], b [out].
NodeId linear(Graph& g, NodeId x, NodeId weight, NodeId bias);

/// Inverted dropout. Identity in eval mode; in train mode each element is kept
/// with probability 1 - rate and scaled by 1 / (1 - rate). The mask is drawn
/// from the graph's dropout generator.
NodeId dropout(Graph& g, NodeId x, double rate);

/// Per-row standardization over the last axis (population variance, eps
/// inside the square root) followed by gain and bias.
NodeId layer_norm(Graph& g, NodeId x, NodeId gain, NodeId bias, double eps = 1e-5);

/// Scaled dot-product attention split into `heads` heads.
/// q [B, Lq, D], k and v [B, L, D] -> [B, Lq, D]. If `weights` is non-null it
/// receives the softmax weights, shape [B, heads, Lq, L].
NodeId scaled_dot_product_attention(Graph& g, NodeId q, NodeId k, NodeId v, std::size_t heads,
                                    Tensor* weights = nullptr);

struct AttentionWeights {
    NodeId wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Projects query and keys/values, attends per head, concatenates heads and
/// applies the output projection. query [B, Lq, D], keys_values [B, L, D].
NodeId multi_head_attention(Graph& g, NodeId query, NodeId keys_values, const AttentionWeights& w,
                            std::size_t heads, Tensor* weights = nullptr);

// Losses (scalar outputs)

/// mean_i |ln(target_i + 1) - pred_log_i|. pred_log has shape [B].
NodeId l1_log_loss(Graph& g, NodeId pred_log, const std::vector<double>& target_count);

/// mean_i -ln Gamma(target_i | exp(shape_logit_i), exp(rate_logit_i)).
NodeId gamma_nll_loss(Graph& g, NodeId shape_logit, NodeId rate_logit, const std::vector<double>& target);

/// mean_i (1/|S_i|) sum_{x in S_i} -ln Gamma(x | exp(shape_logit_i), exp(rate_logit_i)).
/// Every group must be non-empty and strictly positive.
NodeId gamma_nll_grouped(Graph& g, NodeId shape_logit, NodeId rate_logit,
                         const std::vector<std::vector<double>>& groups);

}  // namespace enfc::ad
