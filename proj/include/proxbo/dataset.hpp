#pragma once

#include "proxbo/sequence.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

namespace proxbo {

/// Observed (sequence, fitness) pairs, insertion ordered and append-only.
class Dataset {
public:
    Dataset() = default;

    /// Appends a measurement (finite scores only). Re-adding a sequence with the same score is a
    /// no-op and returns false; a different score raises DataError.
    bool add(const Sequence& s, double y);

    std::size_t size() const noexcept { return sequences_.size(); }
    bool empty() const noexcept { return sequences_.empty(); }
    bool contains(const Sequence& s) const { return index_.count(s) > 0; }
    std::optional<double> score(const Sequence& s) const;

    const std::vector<Sequence>& sequences() const noexcept { return sequences_; }
    const std::vector<double>& targets() const noexcept { return targets_; }
    std::span<const Sequence> sequence_span() const noexcept { return sequences_; }

    /// Largest measured score; throws StateError when empty.
    double max_target() const;

private:
    std::vector<Sequence> sequences_;
    std::vector<double> targets_;
    std::unordered_map<Sequence, std::size_t, SequenceHash> index_;
};

}  // namespace proxbo
