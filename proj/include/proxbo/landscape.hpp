#pragma once

#include "proxbo/sequence.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace proxbo {

/// Black-box fitness oracle. Higher is better. Evaluation is deterministic and
/// safe to call concurrently.
class FitnessLandscape {
public:
    virtual ~FitnessLandscape() = default;

    virtual const Alphabet& alphabet() const = 0;
    virtual std::size_t length() const = 0;

    /// Throws InputError on length/alphabet mismatch, DomainError when the
    /// sequence lies outside the landscape's domain.
    virtual double evaluate(const Sequence& s) const = 0;

    /// Domain membership. Sequences of the wrong shape are never members.
    virtual bool contains(const Sequence& s) const = 0;

    /// Full domain listing when it has at most `limit` members, else nullopt.
    virtual std::optional<std::vector<Sequence>> enumerate(std::size_t limit) const = 0;

    /// Starting sequence used when a campaign does not override it.
    virtual Sequence default_wild_type() const = 0;

    std::vector<double> evaluate_batch(std::span<const Sequence> batch) const;

protected:
    void check_shape(const Sequence& s) const;
};

struct LookupOptions {
    Alphabet alphabet = Alphabet::protein();
    /// Multiply scores by -1 on load (energy-valued, lower-is-better data).
    bool negate = false;
    /// Text form of the wild type; empty selects the first data row.
    std::string wild_type;
};

/// Table-backed landscape; only sequences present in the table can be queried.
class LookupLandscape final : public FitnessLandscape {
public:
    LookupLandscape(Alphabet alphabet, std::vector<std::pair<Sequence, double>> entries, Sequence wild_type);

    const Alphabet& alphabet() const override { return alphabet_; }
    std::size_t length() const override { return length_; }
    double evaluate(const Sequence& s) const override;
    bool contains(const Sequence& s) const override;
    std::optional<std::vector<Sequence>> enumerate(std::size_t limit) const override;
    Sequence default_wild_type() const override { return wild_type_; }

    std::size_t size() const noexcept { return order_.size(); }
    /// Keys in first-seen file order.
    const std::vector<Sequence>& keys() const noexcept { return order_; }

private:
    Alphabet alphabet_;
    std::size_t length_ = 0;
    std::unordered_map<Sequence, double, SequenceHash> table_;
    std::vector<Sequence> order_;
    Sequence wild_type_;
};

/// Parses `SEQUENCE<TAB>SCORE` records. `# ` comment lines and blank lines are
/// skipped. Malformed rows raise ParseError with the line number; a sequence
/// repeated with a different score raises DataError.
LookupLandscape parse_lookup(std::string_view text, const LookupOptions& options = {});
LookupLandscape load_lookup(const std::filesystem::path& path, const LookupOptions& options = {});

/// Kauffman NK model over an arbitrary alphabet.
/// fitness(s) = (1/N) * sum_i table[i][key(s_i, s_neighbours(i))], in [0, 1).
class NKLandscape final : public FitnessLandscape {
public:
    /// Neighbour sets are drawn uniformly without replacement from the other
    /// sites, then each site's table gets V^(K+1) uniform [0,1) values, all from
    /// one generator seeded with `seed`.
    static NKLandscape generate(std::size_t n, std::size_t k, Alphabet alphabet, std::uint64_t seed);

    /// Builds from explicit parts; validates sizes.
    NKLandscape(Alphabet alphabet, std::size_t k, std::vector<std::vector<std::size_t>> neighbors,
                std::vector<std::vector<double>> tables, std::uint64_t seed = 0);

    const Alphabet& alphabet() const override { return alphabet_; }
    std::size_t length() const override { return neighbors_.size(); }
    double evaluate(const Sequence& s) const override;
    bool contains(const Sequence& s) const override;
    std::optional<std::vector<Sequence>> enumerate(std::size_t limit) const override;
    /// All-first-symbol sequence, which is also the first row of the
    /// enumerated table.
    Sequence default_wild_type() const override;

    std::size_t n() const noexcept { return neighbors_.size(); }
    std::size_t k() const noexcept { return k_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const std::vector<std::vector<std::size_t>>& neighbors() const noexcept { return neighbors_; }
    const std::vector<std::vector<double>>& tables() const noexcept { return tables_; }

    /// V^N, or nullopt on overflow past 2^63.
    std::optional<std::uint64_t> state_count() const;

    /// Text spec: `key=value` lines holding the parameters, neighbour map and
    /// tables at 17 significant digits.
    std::string to_spec() const;
    static NKLandscape from_spec(std::string_view text);

private:
    Alphabet alphabet_;
    std::size_t k_ = 0;
    std::vector<std::vector<std::size_t>> neighbors_;
    std::vector<std::vector<double>> tables_;
    std::uint64_t seed_ = 0;
};

/// Direct evaluation; identical to NKLandscape::evaluate.
double nk_fitness(const NKLandscape& landscape, const Sequence& s);

/// All V^L sequences in lexicographic ordinal order (last position fastest).
std::vector<Sequence> enumerate_all(std::size_t length, std::size_t alphabet_size);

struct QueryRecord {
    std::size_t round = 0;
    Sequence sequence;
    double score = 0.0;
};

/// Budget wrapper around a landscape: T rounds of at most M sequences. One call
/// to query_batch consumes one round regardless of how full the batch is. A
/// single reference measurement (the wild type) may be taken outside the round
/// budget. Calls must be externally serialized.
class BudgetedOracle {
public:
    BudgetedOracle(const FitnessLandscape& inner, std::size_t rounds, std::size_t batch_size);

    /// Scores in input order. Validation happens before any budget is spent.
    std::vector<double> query_batch(std::span<const Sequence> batch);

    /// Measures `s` without consuming a round. Allowed once.
    double measure_reference(const Sequence& s);

    std::size_t rounds_remaining() const noexcept { return rounds_total_ - rounds_used_; }
    std::size_t rounds_used() const noexcept { return rounds_used_; }
    std::size_t rounds_total() const noexcept { return rounds_total_; }
    std::size_t batch_size() const noexcept { return batch_size_; }
    std::size_t queries_made() const noexcept { return log_.size(); }
    bool reference_measured() const noexcept { return reference_taken_; }
    const std::vector<QueryRecord>& log() const noexcept { return log_; }
    const FitnessLandscape& landscape() const noexcept { return inner_; }

private:
    const FitnessLandscape& inner_;
    std::size_t rounds_total_;
    std::size_t batch_size_;
    std::size_t rounds_used_ = 0;
    bool reference_taken_ = false;
    std::vector<QueryRecord> log_;
};

}  // namespace proxbo
