#include "proxbo/acquisition.hpp"

#include "proxbo/errors.hpp"
#include "proxbo/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <unordered_set>

namespace proxbo {

double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

void check_posterior(const Posterior& p) {
    if (!std::isfinite(p.mean) || !std::isfinite(p.std) || p.std < 0.0)
        throw InputError("posterior needs finite mean and finite std >= 0");
}

double ucb(const Posterior& p, double beta) {
    check_posterior(p);
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw InputError("ucb beta must be finite and >= 0");
    return p.mean + beta * p.std;
}

double ei(const Posterior& p, double best) {
    check_posterior(p);
    if (!std::isfinite(best)) throw InputError("ei incumbent must be finite");
    const double gap = p.mean - best;
    if (p.std == 0.0) return std::max(gap, 0.0);
    const double z = gap / p.std;
    return std::max(gap * normal_cdf(z) + p.std * normal_pdf(z), 0.0);
}

void validate(const KGConfig& cfg) {
    if (cfg.n_fantasies < 1 || cfg.inner_pool_size < 1 || cfg.update_steps < 1 || !(cfg.update_lr > 0.0))
        throw InputError("kg config values must all be positive");
}

double kg_from_base(const FantasyBase& base, std::span<const Sequence> batch, const KGConfig& cfg,
                    std::uint64_t seed, std::span<const double> pool_penalty) {
    if (batch.empty()) throw InputError("kg: empty batch");
    const auto& current = base.current_pool_means();
    if (!pool_penalty.empty() && pool_penalty.size() != current.size())
        throw InputError("kg: pool penalty size does not match the inner pool");
    auto penalized_max = [&](const std::vector<double>& means) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < means.size(); ++i)
            best = std::max(best, means[i] - (pool_penalty.empty() ? 0.0 : pool_penalty[i]));
        return best;
    };
    const double mu = penalized_max(current);

    const auto post = base.posterior(batch);
    const auto fantasy = base.with_batch(batch);
    Rng rng(seed);
    std::vector<double> z(batch.size()), y(batch.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < cfg.n_fantasies; ++k) {
        const bool mirror = k % 2 == 1;
        if (!mirror)
            for (double& v : z) v = rng.normal();
        for (std::size_t j = 0; j < batch.size(); ++j) y[j] = post[j].mean + (mirror ? -z[j] : z[j]) * post[j].std;
        const double best = penalized_max(fantasy->pool_means(y));
        if (!std::isfinite(best)) throw NumericError("kg: non-finite fantasy posterior");
        acc += best;
    }
    return acc / static_cast<double>(cfg.n_fantasies) - mu;
}

double kg_oneshot(const PosteriorModel& model, std::span<const Sequence> batch, std::span<const Sequence> inner_pool,
                  const Dataset& data, const KGConfig& cfg, Rng& rng) {
    if (batch.empty() || inner_pool.empty()) throw InputError("kg: batch and inner pool must be non-empty");
    validate(cfg);
    const auto base = model.fantasy_base(data, inner_pool, cfg);
    return kg_from_base(*base, batch, cfg, rng.next_u64());
}

std::string_view to_string(AcquisitionKind kind) {
    switch (kind) {
        case AcquisitionKind::ucb: return "ucb";
        case AcquisitionKind::ei: return "ei";
        case AcquisitionKind::kg: return "kg";
    }
    return "?";
}

AcquisitionKind parse_acquisition_kind(std::string_view text) {
    if (text == "ucb") return AcquisitionKind::ucb;
    if (text == "ei") return AcquisitionKind::ei;
    if (text == "kg") return AcquisitionKind::kg;
    throw ConfigError("unknown acquisition kind '" + std::string(text) + "'");
}

std::vector<std::size_t> rank_by_score(std::span<const double> scores, std::span<const Sequence> seqs,
                                       const std::optional<Sequence>& wild_type) {
    std::vector<std::size_t> dist(seqs.size(), 0);
    if (wild_type)
        for (std::size_t i = 0; i < seqs.size(); ++i) dist[i] = hamming_distance(seqs[i], *wild_type);
    std::vector<std::size_t> order(seqs.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        if (dist[a] != dist[b]) return dist[a] < dist[b];
        return seqs[a] < seqs[b];
    });
    return order;
}

namespace {

std::vector<double> penalties(std::span<const Sequence> seqs, const AcquisitionParams& params) {
    std::vector<double> out(seqs.size(), 0.0);
    if (params.lambda > 0.0 && params.wild_type)
        for (std::size_t i = 0; i < seqs.size(); ++i)
            out[i] = params.lambda * static_cast<double>(hamming_distance(seqs[i], *params.wild_type));
    return out;
}

double regularized_incumbent(const Dataset& data, const AcquisitionParams& params) {
    if (params.incumbent) return *params.incumbent;
    if (data.empty()) throw InputError("ei needs at least one measurement for its incumbent");
    const auto pen = penalties(data.sequence_span(), params);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < data.size(); ++i) best = std::max(best, data.targets()[i] - pen[i]);
    return best;
}

Selection take_top(std::span<const Sequence> pool, const std::vector<double>& scores, std::size_t m,
                   const AcquisitionParams& params) {
    const auto order = rank_by_score(scores, pool, params.wild_type);
    Selection sel;
    for (std::size_t i = 0; i < m; ++i) {
        sel.batch.push_back(pool[order[i]]);
        sel.scores.push_back(scores[order[i]]);
    }
    return sel;
}

Selection select_kg(const PosteriorModel& model, std::span<const Sequence> pool, const Dataset& data,
                    std::size_t m, const AcquisitionParams& params, const std::vector<Posterior>& post,
                    const std::vector<double>& pen, Rng& rng) {
    validate(params.kg);
    std::vector<double> ucb_scores(pool.size()), mean_scores(pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        ucb_scores[i] = ucb({post[i].mean - pen[i], post[i].std}, params.beta);
        mean_scores[i] = post[i].mean - pen[i];
    }
    const std::size_t n_cand = std::min(pool.size(), std::max(params.inner_eval_size, m));
    const auto by_ucb = rank_by_score(ucb_scores, pool, params.wild_type);
    const std::vector<std::size_t> cand(by_ucb.begin(), by_ucb.begin() + static_cast<std::ptrdiff_t>(n_cand));

    // Inner pool: best regularized means plus every candidate, in pool order.
    std::vector<char> in_inner(pool.size(), 0);
    const auto by_mean = rank_by_score(mean_scores, pool, params.wild_type);
    for (std::size_t i = 0; i < std::min(pool.size(), params.kg.inner_pool_size); ++i) in_inner[by_mean[i]] = 1;
    for (auto c : cand) in_inner[c] = 1;
    std::vector<Sequence> inner;
    std::vector<double> inner_pen;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (in_inner[i]) {
            inner.push_back(pool[i]);
            inner_pen.push_back(pen[i]);
        }
    const auto base = model.fantasy_base(data, inner, params.kg);

    Selection sel;
    std::vector<char> taken(pool.size(), 0);
    std::vector<Sequence> partial;
    for (std::size_t slot = 0; slot < m; ++slot) {
        const std::uint64_t seed = rng.next_u64();
        std::vector<std::size_t> open;
        for (auto c : cand)
            if (!taken[c]) open.push_back(c);
        if (open.empty())  // m > n_cand cannot happen, but stay total
            throw InputError("kg: ran out of candidates");
        std::vector<double> values(open.size());
        parallel_for(open.size(), [&](std::size_t k) {
            std::vector<Sequence> trial = partial;
            trial.push_back(pool[open[k]]);
            values[k] = kg_from_base(*base, trial, params.kg, seed, inner_pen);
        });
        std::vector<Sequence> open_seqs;
        for (auto c : open) open_seqs.push_back(pool[c]);
        const std::size_t pick = rank_by_score(values, open_seqs, params.wild_type).front();
        taken[open[pick]] = 1;
        partial.push_back(pool[open[pick]]);
        sel.batch.push_back(pool[open[pick]]);
        sel.scores.push_back(values[pick]);
    }
    return sel;
}

}  // namespace

Selection select_batch(const PosteriorModel& model, std::span<const Sequence> pool, const Dataset& data,
                       std::size_t m, const AcquisitionParams& params, Rng& rng) {
    if (m == 0) throw InputError("select_batch: batch size must be >= 1");
    if (pool.size() < m)
        throw InputError("select_batch: pool has " + std::to_string(pool.size()) + " candidates, need " +
                         std::to_string(m));
    if (!(params.lambda >= 0.0)) throw InputError("lambda must be >= 0");
    std::unordered_set<Sequence, SequenceHash> seen;
    for (const auto& s : pool) {
        if (data.contains(s)) throw InputError("select_batch: pool contains a measured sequence");
        if (!seen.insert(s).second) throw InputError("select_batch: pool contains duplicates");
    }
    const auto post = model.posterior(pool);
    for (const auto& p : post) check_posterior(p);
    const auto pen = penalties(pool, params);

    switch (params.kind) {
        case AcquisitionKind::ucb: {
            std::vector<double> scores(pool.size());
            for (std::size_t i = 0; i < pool.size(); ++i)
                scores[i] = ucb({post[i].mean - pen[i], post[i].std}, params.beta);
            return take_top(pool, scores, m, params);
        }
        case AcquisitionKind::ei: {
            const double best = regularized_incumbent(data, params);
            std::vector<double> scores(pool.size());
            for (std::size_t i = 0; i < pool.size(); ++i)
                scores[i] = ei({post[i].mean - pen[i], post[i].std}, best);
            return take_top(pool, scores, m, params);
        }
        case AcquisitionKind::kg:
            return select_kg(model, pool, data, m, params, post, pen, rng);
    }
    throw InputError("unknown acquisition kind");
}

}  // namespace proxbo
