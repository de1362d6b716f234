#pragma once

#include "proxbo/acquisition.hpp"
#include "proxbo/dataset.hpp"
#include "proxbo/landscape.hpp"
#include "proxbo/rng.hpp"
#include "proxbo/sequence.hpp"
#include "proxbo/surrogate.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace proxbo {

/// fitness - lambda * distance. Throws InputError for negative or non-finite lambda.
double regularized_score(double fitness, std::size_t distance, double lambda);

struct FrontierPoint {
    Sequence sequence;
    std::size_t distance = 0;
    double fitness = 0.0;
};

/// Non-dominated subset of `current` plus `added` under (minimize distance,
/// maximize fitness), sorted by distance. Points tied on both coordinates keep
/// only the lexicographically smallest sequence, so distances and fitnesses
/// are both strictly increasing along the result. Throws InputError when a
/// point's distance disagrees with its Hamming distance to `wild_type`.
std::vector<FrontierPoint> update_frontier(std::span<const FrontierPoint> current, std::span<const FrontierPoint> added,
                                           const Sequence& wild_type);

enum class LambdaPolicy {
    fixed,  ///< use ProximalConfig::lambda throughout
    iqr,    ///< iqr_scale * IQR of the cold-start measurements, then frozen
};

struct ProximalConfig {
    LambdaPolicy policy = LambdaPolicy::iqr;
    double lambda = 0.0;
    double iqr_scale = 0.1;
    std::size_t pool_size = 512;
    /// Mutation radius for pool proposals; widened up to L when underfull.
    std::size_t radius = 2;
};

struct ExplorerState {
    explicit ExplorerState(Sequence wild) : wild_type(std::move(wild)) {}

    Sequence wild_type;
    Dataset data;
    std::vector<FrontierPoint> frontier;
    /// Rounds completed so far; the next round gets this index.
    std::size_t round_index = 0;
    double lambda = 0.0;
};

struct PoolResult {
    std::vector<Sequence> sequences;
    /// Fewer than the requested number of unmeasured in-domain candidates exist.
    bool short_pool = false;
};

/// Candidate pool around the frontier and the wild type. Each candidate is a
/// random mutant (distance 1..radius) of a uniformly chosen anchor; measured
/// sequences, duplicates and sequences outside the landscape's domain are
/// dropped. The radius widens up to L while the pool is underfull, after which
/// an enumerable domain is scanned for the remaining unmeasured members
/// (closest to the wild type first).
PoolResult propose_pool(const ExplorerState& state, const FitnessLandscape& landscape, std::size_t pool_size,
                        std::size_t radius, Rng& rng);

struct RoundRecord {
    std::size_t round = 0;
    /// Measured this round, in query order. The round that measures the wild
    /// type lists it first.
    std::vector<Sequence> sequences;
    std::vector<double> scores;
    /// Selection scores (empty for the cold start and the random baseline).
    std::vector<double> acquisition;
    double cumulative_max = 0.0;
    double lambda = 0.0;
    std::size_t pool_size = 0;
    bool short_pool = false;
    double wall_time = 0.0;
};

/// Lower quartile to upper quartile distance with linear interpolation between
/// order statistics. Throws InputError on empty input.
double interquartile_range(std::span<const double> values);

/// One round of the model-guided loop. With no data yet it runs the cold
/// start instead: the wild type is measured outside the round budget and the
/// round queries up to M random in-domain mutants within distance 2 of it.
/// Otherwise: propose a pool, select with `acq` on the lambda-shifted
/// posterior, query, record and update the frontier. The ensemble is refitted
/// whenever budget remains afterwards.
RoundRecord run_round(ExplorerState& state, Ensemble& ensemble, BudgetedOracle& oracle, const AcquisitionParams& acq,
                      const ProximalConfig& prox, const TrainConfig& train, Rng& rng);

/// Each proposal is a single point mutation of a uniformly chosen measured
/// sequence. Measures the wild type first when nothing has been measured.
RoundRecord random_search_round(ExplorerState& state, BudgetedOracle& oracle, std::size_t m, Rng& rng);

/// Scores a frontier pool by posterior mean alone and fills the batch by
/// sweeping distance classes in increasing order, one best candidate per class
/// per sweep. Falls back to the cold start when nothing has been measured.
RoundRecord pex_greedy_round(ExplorerState& state, Ensemble& ensemble, BudgetedOracle& oracle, std::size_t m,
                             const ProximalConfig& prox, const TrainConfig& train, Rng& rng);

/// Round-robin over distance classes; exposed for testing. Returns indices
/// into `seqs`.
std::vector<std::size_t> distance_round_robin(std::span<const Sequence> seqs, std::span<const double> means,
                                              const Sequence& wild_type, std::size_t m);

}  // namespace proxbo
