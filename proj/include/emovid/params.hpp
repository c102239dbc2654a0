#pragma once

#include "emovid/tensor.hpp"

#include <string>
#include <utility>
#include <vector>

namespace emovid {

// Ordered registry of named learnable tensors. Order is insertion order and
// is the canonical iteration order for the optimizer, checkpoints, and
// gradient checks, so results stay reproducible.
class ParamStore {
public:
    Tensor add(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

    long total_count() const;
    void zero_grads();

    // Value-only copies in registry order, for best-epoch retention and
    // checkpointing. restore() requires matching sizes.
    std::vector<std::vector<double>> snapshot() const;
    void restore(const std::vector<std::vector<double>>& snap);

private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

} // namespace emovid
