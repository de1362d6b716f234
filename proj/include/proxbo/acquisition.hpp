#pragma once

#include "proxbo/dataset.hpp"
#include "proxbo/posterior.hpp"
#include "proxbo/rng.hpp"
#include "proxbo/sequence.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace proxbo {

double normal_pdf(double z);
double normal_cdf(double z);

/// Throws InputError unless mean and std are finite and std >= 0.
void check_posterior(const Posterior& p);

/// mean + beta * std.
double ucb(const Posterior& p, double beta);

/// Closed-form expected improvement over `best`; max(mean - best, 0) at std 0.
double ei(const Posterior& p, double best);

void validate(const KGConfig& cfg);

/// One-shot knowledge gradient of `batch` against a prepared fantasy base.
/// Fantasy outcomes are drawn from the current posterior in antithetic pairs
/// (z, -z) using a generator seeded with `seed`; two calls with the same seed
/// see the same normal draws, which is what makes greedy slot comparisons
/// low-variance. `pool_penalty` (empty or one entry per inner-pool element)
/// is subtracted from every pool mean before the max.
double kg_from_base(const FantasyBase& base, std::span<const Sequence> batch, const KGConfig& cfg,
                    std::uint64_t seed, std::span<const double> pool_penalty = {});

/// E[max_{s' in inner_pool} mean(s' | D + fantasies)] - max_{s' in inner_pool} mean(s' | D).
double kg_oneshot(const PosteriorModel& model, std::span<const Sequence> batch, std::span<const Sequence> inner_pool,
                  const Dataset& data, const KGConfig& cfg, Rng& rng);

enum class AcquisitionKind { ucb, ei, kg };

std::string_view to_string(AcquisitionKind kind);
/// Throws ConfigError for anything but "ucb", "ei" or "kg".
AcquisitionKind parse_acquisition_kind(std::string_view text);

struct AcquisitionParams {
    AcquisitionKind kind = AcquisitionKind::ucb;
    double beta = 2.0;
    KGConfig kg;
    /// KG only: candidates per greedy slot, pre-ranked by UCB.
    std::size_t inner_eval_size = 64;
    /// Proximal penalty per mutation away from `wild_type`; shifts the
    /// posterior mean used for scoring, never the measurements.
    double lambda = 0.0;
    /// Reference for distance penalties and tie-breaking. Without it every
    /// distance counts as 0.
    std::optional<Sequence> wild_type;
    /// EI incumbent override. Defaults to the best regularized measured score.
    std::optional<double> incumbent;
};

struct Selection {
    std::vector<Sequence> batch;
    /// Acquisition score for each selected sequence: the plain score for
    /// ucb/ei, the batch KG after adding that element for kg.
    std::vector<double> scores;
};

/// Picks `m` distinct pool elements. ucb/ei rank the whole pool; kg grows the
/// batch greedily, one slot at a time, by the joint one-shot KG of the batch
/// so far plus each candidate. Ties: higher score, then smaller distance to
/// the wild type, then lexicographic order.
Selection select_batch(const PosteriorModel& model, std::span<const Sequence> pool, const Dataset& data,
                       std::size_t m, const AcquisitionParams& params, Rng& rng);

/// Indices of `scores` in selection order under the tie rule above.
std::vector<std::size_t> rank_by_score(std::span<const double> scores, std::span<const Sequence> seqs,
                                       const std::optional<Sequence>& wild_type);

}  // namespace proxbo
