#include "emovid/params.hpp"

#include "emovid/error.hpp"

namespace emovid {

Tensor ParamStore::add(const std::string& name, Tensor t) {
    if (contains(name))
        throw UsageError("ParamStore: duplicate parameter '" + name + "'");
    t.set_requires_grad(true);
    items_.emplace_back(name, t);
    return t;
}

Tensor& ParamStore::at(const std::string& name) {
    for (auto& [n, t] : items_)
        if (n == name)
            return t;
    throw UsageError("ParamStore: unknown parameter '" + name + "'");
}

const Tensor& ParamStore::at(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name)
            return t;
    throw UsageError("ParamStore: unknown parameter '" + name + "'");
}

bool ParamStore::contains(const std::string& name) const {
    for (const auto& [n, t] : items_)
        if (n == name)
            return true;
    return false;
}

long ParamStore::total_count() const {
    long n = 0;
    for (const auto& [name, t] : items_)
        n += t.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : items_)
        t.zero_grad();
}

std::vector<std::vector<double>> ParamStore::snapshot() const {
    std::vector<std::vector<double>> out;
    out.reserve(items_.size());
    for (const auto& [name, t] : items_)
        out.push_back(t.value());
    return out;
}

void ParamStore::restore(const std::vector<std::vector<double>>& snap) {
    if (snap.size() != items_.size())
        throw UsageError("ParamStore: snapshot has " + std::to_string(snap.size()) +
                         " tensors, store has " + std::to_string(items_.size()));
    for (size_t i = 0; i < items_.size(); ++i) {
        if (snap[i].size() != items_[i].second.value().size())
            throw UsageError("ParamStore: size mismatch restoring '" + items_[i].first + "'");
        items_[i].second.value_mut() = snap[i];
    }
}

} // namespace emovid
