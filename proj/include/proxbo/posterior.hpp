#pragma once

#include "proxbo/dataset.hpp"
#include "proxbo/sequence.hpp"

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace proxbo {

/// Predictive mean and standard deviation at one sequence.
struct Posterior {
    double mean = 0.0;
    double std = 0.0;
};

struct KGConfig {
    std::size_t n_fantasies = 16;
    std::size_t inner_pool_size = 256;
    /// Gradient steps applied per member during a fantasy posterior update.
    std::size_t update_steps = 20;
    double update_lr = 1e-3;
};

/// Posterior means over a fixed inner pool after conditioning on one batch of
/// fantasy outcomes.
class FantasyBatch {
public:
    virtual ~FantasyBatch() = default;
    /// `outcomes[j]` is the fantasized measurement for batch element j.
    virtual std::vector<double> pool_means(std::span<const double> outcomes) const = 0;
};

/// State shared by all fantasy evaluations against one (data, inner pool) pair.
class FantasyBase {
public:
    virtual ~FantasyBase() = default;
    /// Posterior means over the inner pool before any fantasy.
    virtual const std::vector<double>& current_pool_means() const = 0;
    virtual std::vector<Posterior> posterior(std::span<const Sequence> batch) const = 0;
    virtual std::unique_ptr<FantasyBatch> with_batch(std::span<const Sequence> batch) const = 0;
};

/// Anything that yields a predictive distribution and can be conditioned on
/// hypothetical measurements. The deep ensemble is the production model; the
/// knowledge-gradient tests plug in an exact conjugate model here.
class PosteriorModel {
public:
    virtual ~PosteriorModel() = default;
    virtual std::vector<Posterior> posterior(std::span<const Sequence> batch) const = 0;
    virtual std::unique_ptr<FantasyBase> fantasy_base(const Dataset& data, std::span<const Sequence> inner_pool,
                                                      const KGConfig& cfg) const = 0;
};

}  // namespace proxbo
