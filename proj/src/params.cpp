#include "planevol/params.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace planevol {

const char* to_string(ParamGroup g) {
    switch (g) {
        case ParamGroup::coarse: return "coarse";
        case ParamGroup::fine: return "fine";
        case ParamGroup::frozen: return "frozen";
    }
    return "?";
}

ParamGroup param_group_from_string(const std::string& s) {
    if (s == "coarse") return ParamGroup::coarse;
    if (s == "fine") return ParamGroup::fine;
    if (s == "frozen") return ParamGroup::frozen;
    throw DomainError("unknown parameter group '" + s + "'");
}

std::size_t ParameterStore::add(std::string name, std::vector<std::size_t> shape, ParamGroup group, double fill) {
    if (contains(name)) throw DomainError("ParameterStore: duplicate block '" + name + "'");
    const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    blocks_.push_back(ParamBlock{std::move(name), std::move(shape), group, std::vector<double>(n, fill)});
    return blocks_.size() - 1;
}

std::size_t ParameterStore::find(const std::string& name) const {
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (blocks_[i].name == name) return i;
    }
    throw DomainError("ParameterStore: no block named '" + name + "'");
}

bool ParameterStore::contains(const std::string& name) const {
    return std::any_of(blocks_.begin(), blocks_.end(), [&](const ParamBlock& b) { return b.name == name; });
}

std::size_t ParameterStore::total_size() const {
    std::size_t n = 0;
    for (const auto& b : blocks_) n += b.size();
    return n;
}

bool ParameterStore::same_layout(const ParameterStore& other) const {
    if (blocks_.size() != other.blocks_.size()) return false;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& a = blocks_[i];
        const auto& b = other.blocks_[i];
        if (a.name != b.name || a.shape != b.shape || a.group != b.group) return false;
    }
    return true;
}

Gradients::Gradients(const ParameterStore& store) {
    grads_.reserve(store.block_count());
    for (const auto& b : store.blocks()) grads_.emplace_back(b.size(), 0.0);
}

void Gradients::zero() {
    for (auto& g : grads_) std::fill(g.begin(), g.end(), 0.0);
}

Gradients& Gradients::operator+=(const Gradients& other) {
    if (other.grads_.size() != grads_.size()) throw DomainError("Gradients: layout mismatch");
    for (std::size_t i = 0; i < grads_.size(); ++i) {
        if (other.grads_[i].size() != grads_[i].size()) throw DomainError("Gradients: layout mismatch");
        for (std::size_t j = 0; j < grads_[i].size(); ++j) grads_[i][j] += other.grads_[i][j];
    }
    return *this;
}

double Gradients::max_abs() const {
    double m = 0.0;
    for (const auto& g : grads_) {
        for (double v : g) m = std::max(m, std::abs(v));
    }
    return m;
}

bool Gradients::all_finite() const {
    for (const auto& g : grads_) {
        for (double v : g) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

}  // namespace planevol
