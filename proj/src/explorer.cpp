#include "proxbo/explorer.hpp"

#include "proxbo/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <optional>
#include <unordered_set>

namespace proxbo {

double regularized_score(double fitness, std::size_t distance, double lambda) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be finite and >= 0");
    return fitness - lambda * static_cast<double>(distance);
}

std::vector<FrontierPoint> update_frontier(std::span<const FrontierPoint> current, std::span<const FrontierPoint> added,
                                           const Sequence& wild_type) {
    std::vector<FrontierPoint> all(current.begin(), current.end());
    all.insert(all.end(), added.begin(), added.end());
    for (const auto& p : all)
        if (p.distance != hamming_distance(p.sequence, wild_type))
            throw InputError("frontier point distance " + std::to_string(p.distance) +
                             " does not match its Hamming distance to the wild type");
    std::sort(all.begin(), all.end(), [](const FrontierPoint& a, const FrontierPoint& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (a.fitness != b.fitness) return a.fitness > b.fitness;
        return a.sequence < b.sequence;
    });
    std::vector<FrontierPoint> out;
    for (auto& p : all)
        if (out.empty() || p.fitness > out.back().fitness) out.push_back(std::move(p));
    return out;
}

double interquartile_range(std::span<const double> values) {
    if (values.empty()) throw InputError("interquartile range of an empty set");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    return quantile(0.75) - quantile(0.25);
}

namespace {

using SeqSet = std::unordered_set<Sequence, SequenceHash>;

PoolResult build_pool(std::span<const Sequence> anchors, const Dataset& data, const Sequence& wild_type,
                      const FitnessLandscape& landscape, std::size_t pool_size, std::size_t radius, Rng& rng) {
    const std::size_t length = wild_type.size();
    PoolResult out;
    SeqSet taken;
    auto offer = [&](const Sequence& s) {
        if (data.contains(s) || taken.count(s) || !landscape.contains(s)) return;
        taken.insert(s);
        out.sequences.push_back(s);
    };
    for (std::size_t r = std::max<std::size_t>(1, std::min(radius, length));
         r <= length && out.sequences.size() < pool_size; ++r) {
        const std::size_t attempts = 16 * pool_size + 256;
        for (std::size_t a = 0; a < attempts && out.sequences.size() < pool_size; ++a) {
            const auto& anchor = anchors[rng.uniform_index(anchors.size())];
            offer(random_mutant(anchor, r, landscape.alphabet(), rng));
        }
    }
    if (out.sequences.size() < pool_size) {
        if (auto domain = landscape.enumerate(std::size_t{1} << 20)) {
            std::vector<std::pair<std::size_t, Sequence>> rest;
            for (auto& s : *domain)
                if (!data.contains(s) && !taken.count(s)) rest.emplace_back(hamming_distance(s, wild_type), std::move(s));
            std::sort(rest.begin(), rest.end());
            for (auto& [d, s] : rest) {
                if (out.sequences.size() >= pool_size) break;
                offer(s);
            }
        }
    }
    out.short_pool = out.sequences.size() < pool_size;
    return out;
}

std::vector<Sequence> anchors_of(const ExplorerState& state) {
    std::vector<Sequence> anchors;
    for (const auto& p : state.frontier) anchors.push_back(p.sequence);
    if (std::find(anchors.begin(), anchors.end(), state.wild_type) == anchors.end())
        anchors.push_back(state.wild_type);
    return anchors;
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void record_measurements(ExplorerState& state, RoundRecord& rec, std::vector<Sequence> batch,
                         std::vector<double> scores) {
    std::vector<FrontierPoint> pts;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        state.data.add(batch[i], scores[i]);
        pts.push_back({batch[i], hamming_distance(batch[i], state.wild_type), scores[i]});
    }
    state.frontier = update_frontier(state.frontier, pts, state.wild_type);
    rec.round = state.round_index++;
    rec.sequences = std::move(batch);
    rec.scores = std::move(scores);
    rec.cumulative_max = state.data.max_target();
    rec.lambda = state.lambda;
}

double measure_wild_type(ExplorerState& state, BudgetedOracle& oracle) {
    const double y = oracle.measure_reference(state.wild_type);
    state.data.add(state.wild_type, y);
    state.frontier = update_frontier(state.frontier, std::vector<FrontierPoint>{{state.wild_type, 0, y}},
                                     state.wild_type);
    return y;
}

// The reference measurement is reported as the first row of round 0.
void prepend_reference(RoundRecord& rec, const Sequence& wild_type, double y) {
    rec.sequences.insert(rec.sequences.begin(), wild_type);
    rec.scores.insert(rec.scores.begin(), y);
}

RoundRecord cold_start(ExplorerState& state, BudgetedOracle& oracle, const ProximalConfig& prox, Rng& rng) {
    const auto start = Clock::now();
    const double y0 = measure_wild_type(state, oracle);
    const std::size_t m = oracle.batch_size();
    const std::vector<Sequence> anchors{state.wild_type};
    auto pool = build_pool(anchors, state.data, state.wild_type, oracle.landscape(), m, 2, rng);
    if (pool.sequences.empty()) throw RoundError("cold start: no unmeasured sequence near the wild type");
    auto scores = oracle.query_batch(pool.sequences);
    RoundRecord rec;
    rec.pool_size = pool.sequences.size();
    rec.short_pool = pool.short_pool;
    record_measurements(state, rec, std::move(pool.sequences), std::move(scores));
    prepend_reference(rec, state.wild_type, y0);
    state.lambda = prox.policy == LambdaPolicy::iqr ? prox.iqr_scale * interquartile_range(state.data.targets())
                                                    : prox.lambda;
    rec.lambda = state.lambda;
    rec.wall_time = seconds_since(start);
    return rec;
}

void refit_if_budget(Ensemble& ensemble, const ExplorerState& state, const BudgetedOracle& oracle,
                     const TrainConfig& train, Rng& rng, RoundRecord& rec, Clock::time_point start) {
    if (oracle.rounds_remaining() > 0) ensemble.fit(state.data, train, rng);
    rec.wall_time = seconds_since(start);
}

void check_prox(const ProximalConfig& prox) {
    if (prox.pool_size < 1 || prox.radius < 1) throw InputError("pool_size and radius must be >= 1");
    if (!(prox.lambda >= 0.0) || !(prox.iqr_scale >= 0.0)) throw InputError("lambda settings must be >= 0");
}

}  // namespace

PoolResult propose_pool(const ExplorerState& state, const FitnessLandscape& landscape, std::size_t pool_size,
                        std::size_t radius, Rng& rng) {
    if (pool_size < 1) throw InputError("pool_size must be >= 1");
    const auto anchors = anchors_of(state);
    return build_pool(anchors, state.data, state.wild_type, landscape, pool_size, radius, rng);
}

RoundRecord run_round(ExplorerState& state, Ensemble& ensemble, BudgetedOracle& oracle, const AcquisitionParams& acq,
                      const ProximalConfig& prox, const TrainConfig& train, Rng& rng) {
    check_prox(prox);
    const auto start = Clock::now();
    if (state.data.empty()) {
        auto rec = cold_start(state, oracle, prox, rng);
        refit_if_budget(ensemble, state, oracle, train, rng, rec, start);
        return rec;
    }
    if (oracle.rounds_remaining() == 0) throw BudgetError("no rounds remaining");
    auto pool = propose_pool(state, oracle.landscape(), prox.pool_size, prox.radius, rng);
    if (pool.sequences.empty()) throw RoundError("round " + std::to_string(state.round_index) + ": empty pool");
    const std::size_t m = std::min(oracle.batch_size(), pool.sequences.size());
    AcquisitionParams params = acq;
    params.lambda = state.lambda;
    params.wild_type = state.wild_type;
    auto sel = select_batch(ensemble, pool.sequences, state.data, m, params, rng);
    auto scores = oracle.query_batch(sel.batch);
    RoundRecord rec;
    rec.pool_size = pool.sequences.size();
    rec.short_pool = pool.short_pool;
    rec.acquisition = std::move(sel.scores);
    record_measurements(state, rec, std::move(sel.batch), std::move(scores));
    refit_if_budget(ensemble, state, oracle, train, rng, rec, start);
    return rec;
}

RoundRecord random_search_round(ExplorerState& state, BudgetedOracle& oracle, std::size_t m, Rng& rng) {
    const auto start = Clock::now();
    if (m < 1) throw InputError("batch size must be >= 1");
    std::optional<double> y0;
    if (state.data.empty()) y0 = measure_wild_type(state, oracle);
    if (oracle.rounds_remaining() == 0) throw BudgetError("no rounds remaining");
    const auto& landscape = oracle.landscape();
    const auto& alphabet = landscape.alphabet();
    const auto& parents = state.data.sequences();
    const std::size_t length = state.wild_type.size();

    std::vector<Sequence> batch;
    SeqSet in_batch;
    auto offer = [&](Sequence s) {
        if (state.data.contains(s) || in_batch.count(s) || !landscape.contains(s)) return;
        in_batch.insert(s);
        batch.push_back(std::move(s));
    };
    const std::size_t attempts = 64 * m + 1024;
    for (std::size_t a = 0; a < attempts && batch.size() < m; ++a) {
        const auto& parent = parents[rng.uniform_index(parents.size())];
        const std::size_t pos = rng.uniform_index(length);
        auto sym = static_cast<Residue>(rng.uniform_index(alphabet.size() - 1));
        if (sym >= parent[pos]) ++sym;
        offer(point_mutate(parent, pos, sym, alphabet));
    }
    if (batch.size() < m) {
        // Sparse neighbourhood: list every remaining single mutant and draw from those.
        std::vector<Sequence> rest;
        SeqSet seen;
        for (const auto& parent : parents)
            for (std::size_t pos = 0; pos < length; ++pos)
                for (std::size_t v = 0; v < alphabet.size(); ++v) {
                    if (v == parent[pos]) continue;
                    auto s = point_mutate(parent, pos, static_cast<Residue>(v), alphabet);
                    if (!state.data.contains(s) && !in_batch.count(s) && landscape.contains(s) && seen.insert(s).second)
                        rest.push_back(std::move(s));
                }
        rng.shuffle(rest.begin(), rest.end());
        for (auto& s : rest) {
            if (batch.size() >= m) break;
            offer(std::move(s));
        }
    }
    if (batch.empty()) throw RoundError("random search: no unmeasured single mutants remain");
    auto scores = oracle.query_batch(batch);
    RoundRecord rec;
    rec.pool_size = batch.size();
    rec.short_pool = batch.size() < m;
    record_measurements(state, rec, std::move(batch), std::move(scores));
    if (y0) prepend_reference(rec, state.wild_type, *y0);
    rec.wall_time = seconds_since(start);
    return rec;
}

std::vector<std::size_t> distance_round_robin(std::span<const Sequence> seqs, std::span<const double> means,
                                              const Sequence& wild_type, std::size_t m) {
    std::map<std::size_t, std::vector<std::size_t>> classes;
    for (std::size_t i = 0; i < seqs.size(); ++i) classes[hamming_distance(seqs[i], wild_type)].push_back(i);
    for (auto& [d, idx] : classes)
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            if (means[a] != means[b]) return means[a] > means[b];
            return seqs[a] < seqs[b];
        });
    std::vector<std::size_t> out;
    const std::size_t target = std::min(m, seqs.size());
    for (std::size_t depth = 0; out.size() < target; ++depth)
        for (auto& [d, idx] : classes) {
            if (out.size() >= target) break;
            if (depth < idx.size()) out.push_back(idx[depth]);
        }
    return out;
}

RoundRecord pex_greedy_round(ExplorerState& state, Ensemble& ensemble, BudgetedOracle& oracle, std::size_t m,
                             const ProximalConfig& prox, const TrainConfig& train, Rng& rng) {
    check_prox(prox);
    const auto start = Clock::now();
    if (state.data.empty()) {
        auto rec = cold_start(state, oracle, prox, rng);
        refit_if_budget(ensemble, state, oracle, train, rng, rec, start);
        return rec;
    }
    if (oracle.rounds_remaining() == 0) throw BudgetError("no rounds remaining");
    auto pool = propose_pool(state, oracle.landscape(), prox.pool_size, prox.radius, rng);
    if (pool.sequences.empty()) throw RoundError("round " + std::to_string(state.round_index) + ": empty pool");
    const auto post = ensemble.posterior(pool.sequences);
    std::vector<double> means(post.size());
    for (std::size_t i = 0; i < post.size(); ++i) means[i] = post[i].mean;
    const auto pick = distance_round_robin(pool.sequences, means, state.wild_type, m);
    std::vector<Sequence> batch;
    RoundRecord rec;
    for (auto i : pick) {
        batch.push_back(pool.sequences[i]);
        rec.acquisition.push_back(means[i]);
    }
    auto scores = oracle.query_batch(batch);
    rec.pool_size = pool.sequences.size();
    rec.short_pool = pool.short_pool;
    record_measurements(state, rec, std::move(batch), std::move(scores));
    refit_if_budget(ensemble, state, oracle, train, rng, rec, start);
    return rec;
}

}  // namespace proxbo
