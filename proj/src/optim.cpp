#include "avfusion/optim.hpp"

#include <cmath>

#include "avfusion/errors.hpp"

namespace avf {

Tensor& ModelParams::add(const std::string& name, Tensor t) {
    if (has(name)) throw ValueError("ModelParams: duplicate parameter name '" + name + "'");
    if (!t.defined()) throw ValueError("ModelParams: undefined tensor for '" + name + "'");
    entries_.emplace_back(name, std::move(t));
    return entries_.back().second;
}

Tensor& ModelParams::at(const std::string& name) {
    for (auto& [k, v] : entries_)
        if (k == name) return v;
    throw ValueError("ModelParams: no parameter named '" + name + "'");
}

const Tensor& ModelParams::at(const std::string& name) const {
    for (const auto& [k, v] : entries_)
        if (k == name) return v;
    throw ValueError("ModelParams: no parameter named '" + name + "'");
}

bool ModelParams::has(const std::string& name) const {
    for (const auto& [k, v] : entries_) {
        (void)v;
        if (k == name) return true;
    }
    return false;
}

std::int64_t ModelParams::count() const {
    std::int64_t n = 0;
    for (const auto& [k, v] : entries_) {
        (void)k;
        n += v.numel();
    }
    return n;
}

void ModelParams::zero_grad() {
    for (auto& [k, v] : entries_) {
        (void)k;
        v.zero_grad();
    }
}

void ModelParams::set_requires_grad(bool flag) {
    for (auto& [k, v] : entries_) {
        (void)k;
        v.set_requires_grad(flag);
    }
}

ModelParams ModelParams::clone() const {
    ModelParams out;
    for (const auto& [k, v] : entries_) out.add(k, v.clone());
    out.frozen_ = frozen_;
    return out;
}

void Adam::step(ModelParams& params) {
    if (params.frozen()) throw StateError("Adam::step: parameter collection is frozen");
    auto& entries = params.entries();
    if (m_.empty()) {
        m_.resize(entries.size());
        v_.resize(entries.size());
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const std::size_t n = static_cast<std::size_t>(entries[i].second.numel());
            m_[i].assign(n, 0.0);
            v_[i].assign(n, 0.0);
        }
    }
    if (m_.size() != entries.size()) {
        throw StateError("Adam::step: parameter collection changed size");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < entries.size(); ++i) {
        Tensor& p = entries[i].second;
        auto& vals = p.values();
        if (m_[i].size() != vals.size()) {
            throw StateError("Adam::step: parameter '" + entries[i].first + "' changed shape");
        }
        const auto& g = p.node()->grad;
        for (std::size_t j = 0; j < vals.size(); ++j) {
            const double gj = g.empty() ? 0.0 : g[j];
            m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * gj;
            v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * gj * gj;
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            vals[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace avf
