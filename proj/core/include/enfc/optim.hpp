#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "enfc/autograd.hpp"

namespace enfc::ad {

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    /// When false, rank-1 tensors (biases, normalization gains) are not decayed.
    bool decay_vectors = true;
    /// Per parameter-group learning rates; groups not listed use `lr`.
    std::map<std::string, double> group_lr;
};

/// Adam with decoupled weight decay:
///   θ ← θ − lr·wd·θ;  θ ← θ − lr·m̂ / (√v̂ + ε)
class AdamW {
public:
    explicit AdamW(AdamWConfig config = {});

    void step(ParameterStore& params, const Gradients& grads);

    std::size_t steps() const { return steps_; }
    const AdamWConfig& config() const { return config_; }
    double lr_for(const std::string& group) const;

private:
    AdamWConfig config_;
    std::size_t steps_ = 0;
    std::map<std::string, Tensor> m_;
    std::map<std::string, Tensor> v_;
};

struct RmsPropConfig {
    double lr = 0.01;
    double decay = 0.9;
    double eps = 1e-8;
    double weight_decay = 0.0;
    std::map<std::string, double> group_lr;
};

/// RMSprop: v ← ρ v + (1−ρ) g²;  θ ← θ − lr·g / √(v + ε)
class RmsProp {
public:
    explicit RmsProp(RmsPropConfig config = {});

    void step(ParameterStore& params, const Gradients& grads);

    std::size_t steps() const { return steps_; }
    RmsPropConfig& config() { return config_; }
    const RmsPropConfig& config() const { return config_; }
    double lr_for(const std::string& group) const;
    const Tensor& second_moment(const std::string& name) const { return v_.at(name); }

private:
    RmsPropConfig config_;
    std::size_t steps_ = 0;
    std::map<std::string, Tensor> v_;
};

}  // namespace enfc::ad
