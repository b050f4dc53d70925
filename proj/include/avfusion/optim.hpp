#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "avfusion/tensor.hpp"

namespace avf {

// Ordered collection of named parameter tensors. Iteration order is
// registration order and defines the checkpoint layout.
class ModelParams {
public:
    ModelParams() = default;

    // Registers a tensor under a unique name and returns it.
    Tensor& add(const std::string& name, Tensor t);

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;

    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

    // Total number of scalar parameters.
    std::int64_t count() const;

    void zero_grad();
    void set_requires_grad(bool flag);

    // Deep copy: fresh tensors, same order, same frozen flag.
    ModelParams clone() const;

    bool frozen() const { return frozen_; }
    void set_frozen(bool flag) { frozen_ = flag; }

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    bool frozen_ = false;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are keyed by entry order, so
// one optimizer instance must stay paired with one parameter collection.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    // One update from the gradients currently held in params. Throws
    // StateError if the collection is frozen.
    void step(ModelParams& params);

    std::int64_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace avf
