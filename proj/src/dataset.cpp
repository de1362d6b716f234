#include "proxbo/dataset.hpp"

#include "proxbo/errors.hpp"

#include <algorithm>
#include <cmath>

namespace proxbo {

bool Dataset::add(const Sequence& s, double y) {
    if (!std::isfinite(y)) throw InputError("dataset: non-finite score");
    const auto [it, inserted] = index_.emplace(s, sequences_.size());
    if (!inserted) {
        if (targets_[it->second] != y) throw DataError("dataset: conflicting score for a measured sequence");
        return false;
    }
    sequences_.push_back(s);
    targets_.push_back(y);
    return true;
}

std::optional<double> Dataset::score(const Sequence& s) const {
    const auto it = index_.find(s);
    if (it == index_.end()) return std::nullopt;
    return targets_[it->second];
}

double Dataset::max_target() const {
    if (targets_.empty()) throw StateError("dataset is empty");
    return *std::max_element(targets_.begin(), targets_.end());
}

}  // namespace proxbo
