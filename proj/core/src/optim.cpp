#include "enfc/optim.hpp"

#include <cmath>

#include "enfc/error.hpp"

namespace enfc::ad {

namespace {

double group_rate(const std::map<std::string, double>& group_lr, const std::string& group, double fallback) {
    auto it = group_lr.find(group);
    return it == group_lr.end() ? fallback : it->second;
}

const Tensor* find_grad(const Gradients& grads, const Parameter& p) {
    auto it = grads.find(p.name);
    if (it == grads.end()) return nullptr;
    if (it->second.shape() != p.value.shape()) {
        throw StructuralError("optimizer: gradient shape " + shape_string(it->second.shape()) +
                              " does not match parameter '" + p.name + "' " + shape_string(p.value.shape()));
    }
    return &it->second;
}

}  // namespace

AdamW::AdamW(AdamWConfig config) : config_(std::move(config)) {}

double AdamW::lr_for(const std::string& group) const { return group_rate(config_.group_lr, group, config_.lr); }

void AdamW::step(ParameterStore& params, const Gradients& grads) {
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double bc1 = 1.0 - std::pow(config_.beta1, t);
    const double bc2 = 1.0 - std::pow(config_.beta2, t);
    for (auto& p : params.entries()) {
        const Tensor* g = find_grad(grads, p);
        if (!g) continue;
        auto [mit, m_new] = m_.try_emplace(p.name, p.value.shape(), 0.0);
        auto [vit, v_new] = v_.try_emplace(p.name, p.value.shape(), 0.0);
        Tensor& m = mit->second;
        Tensor& v = vit->second;
        const double lr = lr_for(p.group);
        const bool decays = config_.decay_vectors || p.value.rank() > 1;
        const double decay = decays ? 1.0 - lr * config_.weight_decay : 1.0;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double gi = (*g)[i];
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * gi;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * gi * gi;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            p.value[i] = p.value[i] * decay - lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

RmsProp::RmsProp(RmsPropConfig config) : config_(std::move(config)) {}

double RmsProp::lr_for(const std::string& group) const { return group_rate(config_.group_lr, group, config_.lr); }

void RmsProp::step(ParameterStore& params, const Gradients& grads) {
    ++steps_;
    for (auto& p : params.entries()) {
        const Tensor* g = find_grad(grads, p);
        if (!g) continue;
        auto [vit, inserted] = v_.try_emplace(p.name, p.value.shape(), 0.0);
        Tensor& v = vit->second;
        const double lr = lr_for(p.group);
        const double decay = 1.0 - lr * config_.weight_decay;
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double gi = (*g)[i];
            v[i] = config_.decay * v[i] + (1.0 - config_.decay) * gi * gi;
            p.value[i] = p.value[i] * decay - lr * gi / std::sqrt(v[i] + config_.eps);
        }
    }
}

}  // namespace enfc::ad
