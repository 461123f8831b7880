#include "enfc/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "enfc/error.hpp"
#include "enfc/specfun.hpp"

namespace enfc::ad {

// ParameterStore

Tensor& ParameterStore::add(const std::string& name, Tensor init, const std::string& group) {
    if (index_.contains(name)) throw StructuralError("ParameterStore: duplicate parameter '" + name + "'");
    index_.emplace(name, params_.size());
    params_.push_back(Parameter{name, group, std::move(init)});
    return params_.back().value;
}

Tensor& ParameterStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw StructuralError("ParameterStore: unknown parameter '" + name + "'");
    return params_[it->second].value;
}

const Tensor& ParameterStore::get(const std::string& name) const { return entry(name).value; }

const Parameter& ParameterStore::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw StructuralError("ParameterStore: unknown parameter '" + name + "'");
    return params_[it->second];
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

// Graph

Graph::Graph(ParameterStore* params, Mode mode, std::uint64_t dropout_seed)
    : params_(params), mode_(mode), dropout_rng_(dropout_seed) {}

NodeId Graph::constant(Tensor value) { return record(std::move(value), {}, nullptr); }

NodeId Graph::parameter(const std::string& name) {
    if (!params_) throw StructuralError("Graph::parameter: graph has no parameter store");
    if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return it->second;
    const NodeId id = record(params_->get(name), {}, nullptr);
    param_nodes_.emplace(name, id);
    return id;
}

Tensor Graph::grad(NodeId id) const {
    const Node& n = nodes_.at(id);
    if (n.grad) return *n.grad;
    return Tensor(n.value.shape(), 0.0);
}

Tensor& Graph::grad_buffer(NodeId id) {
    Node& n = nodes_.at(id);
    if (!n.grad) n.grad.emplace(n.value.shape(), 0.0);
    return *n.grad;
}

NodeId Graph::record(Tensor value, std::vector<NodeId> inputs, BackwardFn backward) {
    for (NodeId in : inputs) {
        if (in >= nodes_.size()) throw StructuralError("Graph::record: input node does not exist");
    }
    nodes_.push_back(Node{std::move(value), std::nullopt, std::move(inputs), std::move(backward)});
    return nodes_.size() - 1;
}

void Graph::backward(NodeId loss) {
    if (loss >= nodes_.size()) throw StructuralError("Graph::backward: unknown node");
    if (nodes_[loss].value.size() != 1) {
        throw StructuralError("Graph::backward: loss must be scalar, got shape " +
                              shape_string(nodes_[loss].value.shape()));
    }
    for (auto& n : nodes_) n.grad.reset();
    grad_buffer(loss).fill(1.0);
    for (NodeId id = loss + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.grad || !n.backward) continue;
        n.backward(*this, id);
    }
}

Gradients Graph::parameter_gradients() const {
    Gradients out;
    for (const auto& [name, id] : param_nodes_) out.emplace(name, grad(id));
    return out;
}

// Ops

namespace {

void require_same_shape(const Graph& g, NodeId a, NodeId b, const char* op) {
    if (g.shape(a) != g.shape(b)) {
        throw StructuralError(std::string(op) + ": shape mismatch " + shape_string(g.shape(a)) + " vs " +
                              shape_string(g.shape(b)));
    }
}

void require_finite(std::span<const double> v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite input");
    }
}

}  // namespace

NodeId add(Graph& g, NodeId a, NodeId b) {
    require_same_shape(g, a, b, "add");
    Tensor out = g.value(a);
    const auto& bv = g.value(b).storage();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    return g.record(std::move(out), {a, b}, [a, b](Graph& gr, NodeId self) {
        const Tensor gout = gr.grad_buffer(self);
        for (NodeId in : {a, b}) {
            Tensor& gi = gr.grad_buffer(in);
            for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gout[i];
        }
    });
}

NodeId exp(Graph& g, NodeId x) {
    Tensor out = g.value(x);
    for (auto& v : out.storage()) v = std::exp(v);
    return g.record(std::move(out), {x}, [x](Graph& gr, NodeId self) {
        const Tensor& gout = gr.grad_buffer(self);
        const Tensor& y = gr.value(self);
        Tensor& gi = gr.grad_buffer(x);
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gout[i] * y[i];
    });
}

NodeId sum(Graph& g, NodeId x) {
    double s = 0.0;
    for (double v : g.value(x).storage()) s += v;
    return g.record(Tensor::scalar(s), {x}, [x](Graph& gr, NodeId self) {
        const double go = gr.grad_buffer(self)[0];
        for (auto& v : gr.grad_buffer(x).storage()) v += go;
    });
}

NodeId mean(Graph& g, NodeId x) {
    const auto& xv = g.value(x).storage();
    double s = 0.0;
    for (double v : xv) s += v;
    const double n = static_cast<double>(xv.size());
    return g.record(Tensor::scalar(s / n), {x}, [x, n](Graph& gr, NodeId self) {
        const double go = gr.grad_buffer(self)[0] / n;
        for (auto& v : gr.grad_buffer(x).storage()) v += go;
    });
}

NodeId leaky_relu(Graph& g, NodeId x, double slope) {
    Tensor out = g.value(x);
    for (auto& v : out.storage()) v = v > 0.0 ? v : slope * v;
    return g.record(std::move(out), {x}, [x, slope](Graph& gr, NodeId self) {
        const Tensor& gout = gr.grad_buffer(self);
        const Tensor& xv = gr.value(x);
        Tensor& gi = gr.grad_buffer(x);
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += xv[i] > 0.0 ? gout[i] : slope * gout[i];
    });
}

NodeId reshape(Graph& g, NodeId x, Shape shape) {
    Tensor out = g.value(x).reshaped(std::move(shape));
    return g.record(std::move(out), {x}, [x](Graph& gr, NodeId self) {
        const Tensor& gout = gr.grad_buffer(self);
        Tensor& gi = gr.grad_buffer(x);
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gout[i];
    });
}

NodeId select_column(Graph& g, NodeId x, std::size_t column) {
    const Tensor& xv = g.value(x);
    if (xv.rank() != 2 || column >= xv.dim(1)) {
        throw StructuralError("select_column: column " + std::to_string(column) + " out of range for " +
                              shape_string(xv.shape()));
    }
    const std::size_t rows = xv.dim(0);
    const std::size_t cols = xv.dim(1);
    Tensor out(Shape{rows});
    for (std::size_t r = 0; r < rows; ++r) out[r] = xv[r * cols + column];
    return g.record(std::move(out), {x}, [x, column, cols](Graph& gr, NodeId self) {
        const Tensor& gout = gr.grad_buffer(self);
        Tensor& gi = gr.grad_buffer(x);
        for (std::size_t r = 0; r < gout.size(); ++r) gi[r * cols + column] += gout[r];
    });
}

NodeId stack(Graph& g, const std::vector<NodeId>& parts) {
    if (parts.empty()) throw StructuralError("stack: no inputs");
    const Shape& s0 = g.shape(parts[0]);
    if (s0.size() != 2) throw StructuralError("stack: inputs must be [B, D], got " + shape_string(s0));
    for (NodeId p : parts) require_same_shape(g, parts[0], p, "stack");
    const std::size_t batch = s0[0];
    const std::size_t width = s0[1];
    const std::size_t k = parts.size();
    Tensor out(Shape{batch, k, width});
    for (std::size_t j = 0; j < k; ++j) {
        const Tensor& pv = g.value(parts[j]);
        for (std::size_t b = 0; b < batch; ++b) {
            std::copy_n(pv.storage().begin() + static_cast<std::ptrdiff_t>(b * width), width,
                        out.storage().begin() + static_cast<std::ptrdiff_t>((b * k + j) * width));
        }
    }
    return g.record(std::move(out), parts, [parts, batch, width, k](Graph& gr, NodeId self) {
        const Tensor gout = gr.grad_buffer(self);
        for (std::size_t j = 0; j < k; ++j) {
            Tensor& gi = gr.grad_buffer(parts[j]);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t d = 0; d < width; ++d) gi[b * width + d] += gout[(b * k + j) * width + d];
            }
        }
    });
}

NodeId linear(Graph& g, NodeId x, NodeId weight, NodeId bias) {
    const Tensor& xv = g.value(x);
    const Tensor& w = g.value(weight);
    const Tensor& b = g.value(bias);
    if (w.rank() != 2 || xv.rank() == 0 || xv.last_dim() != w.dim(0) || b.size() != w.dim(1)) {
        throw StructuralError("linear: incompatible shapes x" + shape_string(xv.shape()) + " W" +
                              shape_string(w.shape()) + " b" + shape_string(b.shape()));
    }
    const std::size_t rows = xv.rows();
    const std::size_t in = w.dim(0);
    const std::size_t out_w = w.dim(1);
    Shape out_shape = xv.shape();
    out_shape.back() = out_w;
    Tensor out(out_shape);
    for (std::size_t r = 0; r < rows; ++r) {
        double* y = out.storage().data() + r * out_w;
        std::copy_n(b.storage().data(), out_w, y);
        const double* xr = xv.storage().data() + r * in;
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            if (xi == 0.0) continue;
            const double* wr = w.storage().data() + i * out_w;
            for (std::size_t o = 0; o < out_w; ++o) y[o] += xi * wr[o];
        }
    }
    return g.record(std::move(out), {x, weight, bias},
                    [x, weight, bias, rows, in, out_w](Graph& gr, NodeId self) {
                        const Tensor& gout = gr.grad_buffer(self);
                        const Tensor& xv2 = gr.value(x);
                        const Tensor& w2 = gr.value(weight);
                        {
                            Tensor& gb = gr.grad_buffer(bias);
                            for (std::size_t r = 0; r < rows; ++r) {
                                for (std::size_t o = 0; o < out_w; ++o) gb[o] += gout[r * out_w + o];
                            }
                        }
                        {
                            Tensor& gw = gr.grad_buffer(weight);
                            for (std::size_t r = 0; r < rows; ++r) {
                                const double* go = gout.storage().data() + r * out_w;
                                for (std::size_t i = 0; i < in; ++i) {
                                    const double xi = xv2[r * in + i];
                                    if (xi == 0.0) continue;
                                    double* gwr = gw.storage().data() + i * out_w;
                                    for (std::size_t o = 0; o < out_w; ++o) gwr[o] += xi * go[o];
                                }
                            }
                        }
                        Tensor& gx = gr.grad_buffer(x);
                        for (std::size_t r = 0; r < rows; ++r) {
                            const double* go = gout.storage().data() + r * out_w;
                            for (std::size_t i = 0; i < in; ++i) {
                                const double* wr = w2.storage().data() + i * out_w;
                                double acc = 0.0;
                                for (std::size_t o = 0; o < out_w; ++o) acc += wr[o] * go[o];
                                gx[r * in + i] += acc;
                            }
                        }
                    });
}

NodeId dropout(Graph& g, NodeId x, double rate) {
    if (!(rate >= 0.0) || !(rate < 1.0)) throw DomainError("dropout: rate must lie in [0, 1)");
    if (g.mode() == Mode::Eval || rate == 0.0) return x;
    const double keep = 1.0 - rate;
    const double scale = 1.0 / keep;
    Tensor mask(g.shape(x));
    Rng& rng = g.dropout_rng();
    for (auto& m : mask.storage()) m = rng.uniform() < keep ? scale : 0.0;
    Tensor out = g.value(x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return g.record(std::move(out), {x}, [x, mask = std::move(mask)](Graph& gr, NodeId self) {
        const Tensor& gout = gr.grad_buffer(self);
        Tensor& gi = gr.grad_buffer(x);
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += gout[i] * mask[i];
    });
}

NodeId layer_norm(Graph& g, NodeId x, NodeId gain, NodeId bias, double eps) {
    const Tensor& xv = g.value(x);
    const std::size_t d = xv.last_dim();
    if (xv.rank() == 0 || d < 2) throw StructuralError("layer_norm: last dimension must be >= 2");
    if (g.value(gain).size() != d || g.value(bias).size() != d) {
        throw StructuralError("layer_norm: gain/bias width must equal " + std::to_string(d));
    }
    const std::size_t rows = xv.rows();
    Tensor xhat(xv.shape());
    std::vector<double> rstd(rows);
    const Tensor& gv = g.value(gain);
    const Tensor& bv = g.value(bias);
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = xv.storage().data() + r * d;
        double m = 0.0;
        for (std::size_t i = 0; i < d; ++i) m += xr[i];
        m /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t i = 0; i < d; ++i) var += (xr[i] - m) * (xr[i] - m);
        var /= static_cast<double>(d);
        rstd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t i = 0; i < d; ++i) {
            const double h = (xr[i] - m) * rstd[r];
            xhat[r * d + i] = h;
            out[r * d + i] = h * gv[i] + bv[i];
        }
    }
    return g.record(std::move(out), {x, gain, bias},
                    [x, gain, bias, rows, d, xhat = std::move(xhat), rstd = std::move(rstd)](Graph& gr,
                                                                                              NodeId self) {
                        const Tensor& gout = gr.grad_buffer(self);
                        const Tensor& gv2 = gr.value(gain);
                        {
                            Tensor& gg = gr.grad_buffer(gain);
                            Tensor& gb = gr.grad_buffer(bias);
                            for (std::size_t r = 0; r < rows; ++r) {
                                for (std::size_t i = 0; i < d; ++i) {
                                    gg[i] += gout[r * d + i] * xhat[r * d + i];
                                    gb[i] += gout[r * d + i];
                                }
                            }
                        }
                        Tensor& gx = gr.grad_buffer(x);
                        const double inv_d = 1.0 / static_cast<double>(d);
                        for (std::size_t r = 0; r < rows; ++r) {
                            double mean_dh = 0.0;
                            double mean_dh_h = 0.0;
                            for (std::size_t i = 0; i < d; ++i) {
                                const double dh = gout[r * d + i] * gv2[i];
                                mean_dh += dh;
                                mean_dh_h += dh * xhat[r * d + i];
                            }
                            mean_dh *= inv_d;
                            mean_dh_h *= inv_d;
                            for (std::size_t i = 0; i < d; ++i) {
                                const double dh = gout[r * d + i] * gv2[i];
                                gx[r * d + i] += rstd[r] * (dh - mean_dh - xhat[r * d + i] * mean_dh_h);
                            }
                        }
                    });
}

NodeId scaled_dot_product_attention(Graph& g, NodeId q, NodeId k, NodeId v, std::size_t heads,
                                    Tensor* weights) {
    const Tensor& qv = g.value(q);
    const Tensor& kv = g.value(k);
    const Tensor& vv = g.value(v);
    if (qv.rank() != 3 || kv.rank() != 3 || kv.shape() != vv.shape() || qv.dim(0) != kv.dim(0) ||
        qv.dim(2) != kv.dim(2)) {
        throw StructuralError("attention: expected q [B,Lq,D], k=v [B,L,D]; got q" + shape_string(qv.shape()) +
                              " k" + shape_string(kv.shape()) + " v" + shape_string(vv.shape()));
    }
    const std::size_t batch = qv.dim(0);
    const std::size_t lq = qv.dim(1);
    const std::size_t lk = kv.dim(1);
    const std::size_t width = qv.dim(2);
    if (heads == 0 || width % heads != 0) {
        throw StructuralError("attention: width " + std::to_string(width) + " not divisible by " +
                              std::to_string(heads) + " heads");
    }
    const std::size_t dh = width / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Tensor attn(Shape{batch, heads, lq, lk});
    Tensor out(Shape{batch, lq, width});
    std::vector<double> scores(lk);
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t i = 0; i < lq; ++i) {
                const double* qi = qv.storage().data() + (b * lq + i) * width + h * dh;
                double mx = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < lk; ++j) {
                    const double* kj = kv.storage().data() + (b * lk + j) * width + h * dh;
                    double s = 0.0;
                    for (std::size_t t = 0; t < dh; ++t) s += qi[t] * kj[t];
                    scores[j] = s * scale;
                    mx = std::max(mx, scores[j]);
                }
                double z = 0.0;
                for (std::size_t j = 0; j < lk; ++j) {
                    scores[j] = std::exp(scores[j] - mx);
                    z += scores[j];
                }
                double* a = attn.storage().data() + ((b * heads + h) * lq + i) * lk;
                double* oi = out.storage().data() + (b * lq + i) * width + h * dh;
                for (std::size_t j = 0; j < lk; ++j) {
                    a[j] = scores[j] / z;
                    const double* vj = vv.storage().data() + (b * lk + j) * width + h * dh;
                    for (std::size_t t = 0; t < dh; ++t) oi[t] += a[j] * vj[t];
                }
            }
        }
    }
    if (weights) *weights = attn;
    return g.record(
        std::move(out), {q, k, v},
        [q, k, v, batch, heads, lq, lk, width, dh, scale, attn = std::move(attn)](Graph& gr, NodeId self) {
            const Tensor& gout = gr.grad_buffer(self);
            const Tensor& qv2 = gr.value(q);
            const Tensor& kv2 = gr.value(k);
            const Tensor& vv2 = gr.value(v);
            Tensor gq(qv2.shape());
            Tensor gk(kv2.shape());
            Tensor gv(vv2.shape());
            std::vector<double> da(lk);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t h = 0; h < heads; ++h) {
                    for (std::size_t i = 0; i < lq; ++i) {
                        const double* a = attn.storage().data() + ((b * heads + h) * lq + i) * lk;
                        const double* go = gout.storage().data() + (b * lq + i) * width + h * dh;
                        double dot = 0.0;
                        for (std::size_t j = 0; j < lk; ++j) {
                            const double* vj = vv2.storage().data() + (b * lk + j) * width + h * dh;
                            double* gvj = gv.storage().data() + (b * lk + j) * width + h * dh;
                            double s = 0.0;
                            for (std::size_t t = 0; t < dh; ++t) {
                                gvj[t] += a[j] * go[t];
                                s += go[t] * vj[t];
                            }
                            da[j] = s;
                            dot += a[j] * s;
                        }
                        const double* qi = qv2.storage().data() + (b * lq + i) * width + h * dh;
                        double* gqi = gq.storage().data() + (b * lq + i) * width + h * dh;
                        for (std::size_t j = 0; j < lk; ++j) {
                            const double ds = a[j] * (da[j] - dot) * scale;
                            const double* kj = kv2.storage().data() + (b * lk + j) * width + h * dh;
                            double* gkj = gk.storage().data() + (b * lk + j) * width + h * dh;
                            for (std::size_t t = 0; t < dh; ++t) {
                                gqi[t] += ds * kj[t];
                                gkj[t] += ds * qi[t];
                            }
                        }
                    }
                }
            }
            auto accumulate = [&gr](NodeId id, const Tensor& src) {
                Tensor& dst = gr.grad_buffer(id);
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
            };
            accumulate(q, gq);
            accumulate(k, gk);
            accumulate(v, gv);
        });
}

NodeId multi_head_attention(Graph& g, NodeId query, NodeId keys_values, const AttentionWeights& w,
                            std::size_t heads, Tensor* weights) {
    const NodeId q = linear(g, query, w.wq, w.bq);
    const NodeId k = linear(g, keys_values, w.wk, w.bk);
    const NodeId v = linear(g, keys_values, w.wv, w.bv);
    const NodeId att = scaled_dot_product_attention(g, q, k, v, heads, weights);
    return linear(g, att, w.wo, w.bo);
}

NodeId l1_log_loss(Graph& g, NodeId pred_log, const std::vector<double>& target_count) {
    const Tensor& p = g.value(pred_log);
    if (p.rank() != 1 || p.size() != target_count.size() || p.size() == 0) {
        throw StructuralError("l1_log_loss: predictions " + shape_string(p.shape()) + " vs " +
                              std::to_string(target_count.size()) + " targets");
    }
    require_finite(p.values(), "l1_log_loss");
    require_finite(target_count, "l1_log_loss");
    const std::size_t n = p.size();
    std::vector<double> sign(n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (target_count[i] < 0.0) throw DomainError("l1_log_loss: negative target count");
        const double r = std::log1p(target_count[i]) - p[i];
        loss += std::fabs(r);
        sign[i] = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    return g.record(Tensor::scalar(loss * inv_n), {pred_log},
                    [pred_log, inv_n, sign = std::move(sign)](Graph& gr, NodeId self) {
                        const double go = gr.grad_buffer(self)[0];
                        Tensor& gi = gr.grad_buffer(pred_log);
                        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] -= go * sign[i] * inv_n;
                    });
}

NodeId gamma_nll_grouped(Graph& g, NodeId shape_logit, NodeId rate_logit,
                         const std::vector<std::vector<double>>& groups) {
    const Tensor& a = g.value(shape_logit);
    const Tensor& r = g.value(rate_logit);
    if (a.rank() != 1 || a.shape() != r.shape() || a.size() != groups.size() || groups.empty()) {
        throw StructuralError("gamma_nll: logits " + shape_string(a.shape()) + "/" + shape_string(r.shape()) +
                              " vs " + std::to_string(groups.size()) + " target groups");
    }
    require_finite(a.values(), "gamma_nll");
    require_finite(r.values(), "gamma_nll");
    const std::size_t n = groups.size();
    // Sufficient statistics per row: the NLL depends on targets only via mean x and mean ln x.
    std::vector<double> mean_x(n);
    std::vector<double> mean_log_x(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (groups[i].empty()) throw StructuralError("gamma_nll: empty target group");
        double sx = 0.0;
        double slx = 0.0;
        for (double x : groups[i]) {
            if (!std::isfinite(x)) throw NumericError("gamma_nll: non-finite target");
            if (!(x > 0.0)) {
                std::ostringstream os;
                os << "gamma_nll: targets must be positive (got " << x << ")";
                throw DomainError(os.str());
            }
            sx += x;
            slx += std::log(x);
        }
        const double m = static_cast<double>(groups[i].size());
        mean_x[i] = sx / m;
        mean_log_x[i] = slx / m;
    }
    std::vector<double> d_shape(n);
    std::vector<double> d_rate(n);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double alpha = std::exp(a[i]);
        const double lambda = std::exp(r[i]);
        if (!(alpha > 0.0) || !std::isfinite(alpha) || !(lambda > 0.0) || !std::isfinite(lambda)) {
            throw NumericError("gamma_nll: shape or rate overflowed (logits " + std::to_string(a[i]) + ", " +
                               std::to_string(r[i]) + ")");
        }
        loss += -alpha * r[i] + specfun::ln_gamma(alpha) - (alpha - 1.0) * mean_log_x[i] + lambda * mean_x[i];
        d_shape[i] = alpha * (specfun::digamma(alpha) - r[i] - mean_log_x[i]);
        d_rate[i] = lambda * mean_x[i] - alpha;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    return g.record(Tensor::scalar(loss * inv_n), {shape_logit, rate_logit},
                    [shape_logit, rate_logit, inv_n, d_shape = std::move(d_shape),
                     d_rate = std::move(d_rate)](Graph& gr, NodeId self) {
                        const double go = gr.grad_buffer(self)[0] * inv_n;
                        Tensor& ga = gr.grad_buffer(shape_logit);
                        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += go * d_shape[i];
                        Tensor& grt = gr.grad_buffer(rate_logit);
                        for (std::size_t i = 0; i < grt.size(); ++i) grt[i] += go * d_rate[i];
                    });
}

NodeId gamma_nll_loss(Graph& g, NodeId shape_logit, NodeId rate_logit, const std::vector<double>& target) {
    std::vector<std::vector<double>> groups;
    groups.reserve(target.size());
    for (double t : target) groups.push_back({t});
    return gamma_nll_grouped(g, shape_logit, rate_logit, groups);
}

}  // namespace enfc::ad
