#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "planevol/common.hpp"

namespace planevol {

/// Learning-rate group a block belongs to. `frozen` blocks are never updated.
enum class ParamGroup { coarse, fine, frozen };

const char* to_string(ParamGroup g);
ParamGroup param_group_from_string(const std::string& s);

struct ParamBlock {
    std::string name;
    std::vector<std::size_t> shape;
    ParamGroup group;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

/// Named, fixed-shape parameter blocks with 64-bit values. Blocks are addressed
/// by the index returned from add(); names are unique.
class ParameterStore {
public:
    std::size_t add(std::string name, std::vector<std::size_t> shape, ParamGroup group, double fill = 0.0);

    std::size_t block_count() const { return blocks_.size(); }
    const ParamBlock& block(std::size_t id) const { return blocks_.at(id); }
    ParamBlock& block(std::size_t id) { return blocks_.at(id); }
    std::span<const double> values(std::size_t id) const { return blocks_.at(id).values; }
    std::span<double> values(std::size_t id) { return blocks_.at(id).values; }

    /// Index of `name`; throws DomainError if missing.
    std::size_t find(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t total_size() const;
    const std::vector<ParamBlock>& blocks() const { return blocks_; }

    /// True when block names, shapes and groups match (values may differ).
    bool same_layout(const ParameterStore& other) const;

    friend bool operator==(const ParameterStore&, const ParameterStore&) = default;

private:
    std::vector<ParamBlock> blocks_;
};

/// Gradient buffers laid out like a ParameterStore.
class Gradients {
public:
    Gradients() = default;
    explicit Gradients(const ParameterStore& store);

    std::size_t block_count() const { return grads_.size(); }
    std::span<double> block(std::size_t id) { return grads_.at(id); }
    std::span<const double> block(std::size_t id) const { return grads_.at(id); }

    void zero();
    Gradients& operator+=(const Gradients& other);
    double max_abs() const;
    bool all_finite() const;

private:
    std::vector<std::vector<double>> grads_;
};

}  // namespace planevol
