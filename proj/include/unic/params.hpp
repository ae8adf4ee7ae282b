#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "unic/errors.hpp"
#include "unic/tensor.hpp"

namespace unic {

// Named tensors in a fixed insertion order. The order defines the global
// flat index space used by the optimizer, checkpoints and pruning, so it
// must be deterministic.
class ParamSet {
public:
    void insert(const std::string& name, Tensor t) {
        if (map_.count(name)) throw ContractError("ParamSet: duplicate name " + name);
        order_.push_back(name);
        map_.emplace(name, std::move(t));
    }

    bool contains(const std::string& name) const { return map_.count(name) != 0; }

    const Tensor& at(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw ContractError("ParamSet: missing name " + name);
        return it->second;
    }

    // Replaces an existing entry (optimizer steps build new tensors).
    void set(const std::string& name, Tensor t) {
        auto it = map_.find(name);
        if (it == map_.end()) throw ContractError("ParamSet: missing name " + name);
        it->second = std::move(t);
    }

    const std::vector<std::string>& names() const { return order_; }
    std::size_t count() const { return order_.size(); }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& name : order_) n += at(name).size();
        return n;
    }

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor> map_;
};

}  // namespace unic
