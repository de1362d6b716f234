#include "proxbo/errors.hpp"
#include "proxbo/explorer.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace proxbo;

namespace {

ConvRegressorConfig tiny_conv() {
    ConvRegressorConfig c;
    c.channels = {8};
    c.kernel_size = 3;
    c.hidden_dense = 8;
    return c;
}

TrainConfig quick_train() {
    TrainConfig t;
    t.epochs = 20;
    t.batch_size = 32;
    t.learning_rate = 3e-3;
    return t;
}

// Type-7 quantile written from the definition: h = (n-1)p, interpolate.
double quantile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Non-dominated set by pairwise comparison, ties on both coordinates resolved
// to the smallest sequence.
std::vector<FrontierPoint> brute_frontier(const std::vector<FrontierPoint>& pts) {
    std::vector<FrontierPoint> out;
    for (const auto& p : pts) {
        bool dominated = false;
        for (const auto& q : pts) {
            const bool weakly = q.distance <= p.distance && q.fitness >= p.fitness;
            const bool strictly = q.distance < p.distance || q.fitness > p.fitness;
            const bool tie_wins = q.distance == p.distance && q.fitness == p.fitness && q.sequence < p.sequence;
            if ((weakly && strictly) || tie_wins) dominated = true;
        }
        if (!dominated) out.push_back(p);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.distance < b.distance; });
    return out;
}

FrontierPoint point(const Sequence& wt, Sequence s, double f) {
    const auto d = hamming_distance(wt, s);
    return {std::move(s), d, f};
}

// argmax of fitness - lambda * distance; ties go to the smaller distance.
std::size_t best_distance(const std::vector<FrontierPoint>& pts, double lambda) {
    double best = -1e300;
    std::size_t dist = 0;
    for (const auto& p : pts) {
        const double v = regularized_score(p.fitness, p.distance, lambda);
        if (v > best || (v == best && p.distance < dist)) best = v, dist = p.distance;
    }
    return dist;
}

}  // namespace

TEST_CASE("regularized score") {
    CHECK(regularized_score(1.0, 2, 0.1) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(regularized_score(1.5, 7, 0.0) == 1.5);
    CHECK(regularized_score(0.0, 0, 3.0) == 0.0);
    CHECK_THROWS_AS(regularized_score(1.0, 1, -0.5), InputError);
    CHECK_THROWS_AS(regularized_score(1.0, 1, std::nan("")), InputError);

    Rng rng(4);
    const auto wt = testing::constant_sequence(10);
    const auto all = enumerate_all(10, 2);
    std::vector<double> f(all.size());
    for (double& v : f) v = rng.uniform01();
    const double lambda = 0.05;
    std::size_t arg = 0;
    for (std::size_t i = 1; i < all.size(); ++i)
        if (regularized_score(f[i], hamming_distance(all[i], wt), lambda) >
            regularized_score(f[arg], hamming_distance(all[arg], wt), lambda))
            arg = i;
    double brute = -1e300;
    std::size_t barg = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        std::size_t d = 0;
        for (std::size_t p = 0; p < 10; ++p) d += all[i][p] != 0;
        const double v = f[i] - lambda * static_cast<double>(d);
        if (v > brute) brute = v, barg = i;
    }
    CHECK(arg == barg);
}

TEST_CASE("frontier examples") {
    const auto wt = testing::constant_sequence(4);
    const Sequence a(std::vector<Residue>{1, 0, 0, 0}), b(std::vector<Residue>{1, 1, 0, 0}),
        c(std::vector<Residue>{0, 1, 1, 0}), e(std::vector<Residue>{1, 1, 1, 0});
    const std::vector<FrontierPoint> pts{point(wt, wt, 0.1), point(wt, a, 0.5), point(wt, b, 0.3), point(wt, c, 0.7),
                                         point(wt, e, 0.6)};
    const auto fr = update_frontier({}, pts, wt);
    REQUIRE(fr.size() == 3);
    CHECK(fr[0].sequence == wt);
    CHECK(fr[1].sequence == a);
    CHECK(fr[2].sequence == c);

    const std::vector<FrontierPoint> tied{point(wt, c, 0.7)};
    const std::vector<FrontierPoint> tie2{point(wt, b, 0.7)};
    const auto t = update_frontier(tied, tie2, wt);
    REQUIRE(t.size() == 1);
    CHECK(t[0].sequence == std::min(b, c));

    const std::vector<FrontierPoint> bad{{a, 3, 1.0}};
    CHECK_THROWS_AS(update_frontier({}, bad, wt), InputError);
}

TEST_CASE("frontier matches pairwise brute force") {
    Rng rng(10);
    const auto wt = testing::constant_sequence(8);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<FrontierPoint> pts;
        std::set<Sequence> used;
        while (pts.size() < 200) {
            auto s = testing::random_sequence(8, 3, rng);
            if (!used.insert(s).second) continue;
            // Coarse fitness values force ties.
            pts.push_back(point(wt, s, std::round(rng.uniform(0, 10)) / 2));
        }
        const std::size_t split = rng.uniform_index(200);
        const std::vector<FrontierPoint> first(pts.begin(), pts.begin() + static_cast<long>(split));
        const std::vector<FrontierPoint> second(pts.begin() + static_cast<long>(split), pts.end());
        const auto fr = update_frontier(update_frontier({}, first, wt), second, wt);
        const auto expected = brute_frontier(pts);
        REQUIRE(fr.size() == expected.size());
        for (std::size_t i = 0; i < fr.size(); ++i) {
            CHECK(fr[i].sequence == expected[i].sequence);
            if (i > 0) {
                CHECK(fr[i].distance > fr[i - 1].distance);
                CHECK(fr[i].fitness > fr[i - 1].fitness);
            }
        }
    }
}

TEST_CASE("larger lambda never moves the optimum further from the wild type") {
    Rng rng(12);
    const auto wt = testing::constant_sequence(10);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<FrontierPoint> pts;
        for (int i = 0; i < 20; ++i) pts.push_back(point(wt, testing::random_sequence(10, 2, rng), rng.uniform01()));
        const auto fr = update_frontier({}, pts, wt);
        double lambda = 0.0;
        std::size_t prev = best_distance(pts, 0.0);
        for (int step = 0; step < 10; ++step) {
            lambda += rng.uniform(0.0, 0.1);
            const auto d = best_distance(pts, lambda);
            CHECK(d <= prev);
            prev = d;
            // The penalized optimum always sits on the frontier.
            CHECK(std::any_of(fr.begin(), fr.end(), [&](const auto& p) { return p.distance == d; }));
        }
    }
}

TEST_CASE("interquartile range") {
    CHECK(interquartile_range(std::vector<double>{1, 2, 3, 4}) == doctest::Approx(1.5));
    CHECK(interquartile_range(std::vector<double>{5}) == 0.0);
    CHECK_THROWS_AS(interquartile_range(std::vector<double>{}), InputError);
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        std::vector<double> v(1 + rng.uniform_index(40));
        for (double& x : v) x = rng.uniform(-5, 5);
        CHECK(interquartile_range(v) == doctest::Approx(quantile(v, 0.75) - quantile(v, 0.25)).epsilon(1e-12));
    }
}

TEST_CASE("propose_pool") {
    const auto nk = NKLandscape::generate(10, 2, Alphabet::synthetic(2), 1);
    const auto wt = nk.default_wild_type();
    Rng rng(2);

    SUBCASE("fresh state stays within the radius") {
        ExplorerState st(wt);
        st.data.add(wt, nk.evaluate(wt));
        const auto pool = propose_pool(st, nk, 50, 2, rng);
        CHECK(pool.sequences.size() == 50);
        CHECK_FALSE(pool.short_pool);
        CHECK(std::set<Sequence>(pool.sequences.begin(), pool.sequences.end()).size() == 50);
        for (const auto& s : pool.sequences) {
            const auto d = hamming_distance(s, wt);
            CHECK(d >= 1);
            CHECK(d <= 2);
            CHECK_FALSE(st.data.contains(s));
        }
    }
    SUBCASE("nearly exhausted domain returns the remainder, flagged short") {
        ExplorerState st(wt);
        const auto all = enumerate_all(10, 2);
        std::set<Sequence> left;
        for (std::size_t i = all.size() - 4; i < all.size(); ++i) left.insert(all[i]);
        for (const auto& s : all)
            if (!left.count(s)) st.data.add(s, nk.evaluate(s));
        REQUIRE(st.data.size() == 1020);
        const auto pool = propose_pool(st, nk, 512, 2, rng);
        CHECK(pool.short_pool);
        CHECK(std::set<Sequence>(pool.sequences.begin(), pool.sequences.end()) == left);
        CHECK(pool.sequences.size() == 4);
    }
    SUBCASE("anchors on the frontier, never measured") {
        ExplorerState st(wt);
        for (int i = 0; i < 40; ++i) {
            const auto s = random_mutant(wt, 3, nk.alphabet(), rng);
            if (st.data.add(s, nk.evaluate(s))) st.frontier = update_frontier(st.frontier, std::vector{point(wt, s, nk.evaluate(s))}, wt);
        }
        const auto pool = propose_pool(st, nk, 30, 2, rng);
        CHECK_FALSE(pool.short_pool);
        for (const auto& s : pool.sequences) {
            CHECK_FALSE(st.data.contains(s));
            std::size_t near = hamming_distance(s, wt);
            for (const auto& f : st.frontier) near = std::min(near, hamming_distance(s, f.sequence));
            CHECK(near <= 2);
        }
    }
}

TEST_CASE("cold start, lambda policy and cumulative max") {
    const auto nk = NKLandscape::generate(10, 2, Alphabet::synthetic(2), 5);
    const auto wt = nk.default_wild_type();
    BudgetedOracle oracle(nk, 4, 8);
    ExplorerState st(wt);
    Ensemble ens(tiny_conv(), 10, nk.alphabet(), Ensemble::derive_seeds(1, 3));
    AcquisitionParams acq;
    ProximalConfig prox;
    prox.pool_size = 64;
    Rng rng(6);

    const auto r0 = run_round(st, ens, oracle, acq, prox, quick_train(), rng);
    CHECK(r0.round == 0);
    REQUIRE(r0.sequences.size() == 9);
    CHECK(r0.sequences[0] == wt);
    CHECK(oracle.rounds_used() == 1);
    CHECK(oracle.queries_made() == 8 + 1);
    CHECK(oracle.reference_measured());
    for (std::size_t i = 1; i < r0.sequences.size(); ++i) {
        CHECK(hamming_distance(r0.sequences[i], wt) >= 1);
        CHECK(hamming_distance(r0.sequences[i], wt) <= 2);
    }
    CHECK(st.lambda == doctest::Approx(0.1 * (quantile(r0.scores, 0.75) - quantile(r0.scores, 0.25))).epsilon(1e-12));
    CHECK(r0.cumulative_max == *std::max_element(r0.scores.begin(), r0.scores.end()));
    CHECK(ens.trained());

    const double frozen = st.lambda;
    double prev = r0.cumulative_max;
    for (int r = 1; r < 4; ++r) {
        const auto rec = run_round(st, ens, oracle, acq, prox, quick_train(), rng);
        CHECK(rec.round == static_cast<std::size_t>(r));
        CHECK(rec.sequences.size() == 8);
        CHECK(rec.cumulative_max >= prev);
        CHECK(rec.cumulative_max == st.data.max_target());
        CHECK(st.lambda == frozen);
        for (const auto& s : rec.sequences) CHECK(nk.evaluate(s) == st.data.score(s).value());
        prev = rec.cumulative_max;
    }
    CHECK(oracle.queries_made() <= 4 * 8 + 1);
    CHECK_THROWS_AS(run_round(st, ens, oracle, acq, prox, quick_train(), rng), BudgetError);
}

TEST_CASE("budget covering the whole domain finds the optimum") {
    const auto nk = NKLandscape::generate(6, 2, Alphabet::synthetic(2), 9);
    const auto all = *nk.enumerate(64);
    double best = 0.0;
    for (const auto& s : all) best = std::max(best, nk.evaluate(s));
    BudgetedOracle oracle(nk, 5, 16);
    ExplorerState st(nk.default_wild_type());
    Ensemble ens(tiny_conv(), 6, nk.alphabet(), Ensemble::derive_seeds(2, 3));
    AcquisitionParams acq;
    ProximalConfig prox;
    Rng rng(1);
    for (int r = 0; r < 4; ++r) run_round(st, ens, oracle, acq, prox, quick_train(), rng);
    CHECK(st.data.size() == 64);
    CHECK(st.data.max_target() == best);
    CHECK_THROWS_AS(run_round(st, ens, oracle, acq, prox, quick_train(), rng), RoundError);
}

TEST_CASE("random search") {
    const auto nk = NKLandscape::generate(30, 0, Alphabet::synthetic(2), 3);
    const auto wt = nk.default_wild_type();

    SUBCASE("first round measures the wild type and single mutants") {
        BudgetedOracle oracle(nk, 3, 10);
        ExplorerState st(wt);
        Rng rng(1);
        const auto r0 = random_search_round(st, oracle, 10, rng);
        REQUIRE(r0.sequences.size() == 11);
        CHECK(r0.sequences[0] == wt);
        for (std::size_t i = 1; i < 11; ++i) CHECK(hamming_distance(r0.sequences[i], wt) == 1);
        const auto r1 = random_search_round(st, oracle, 10, rng);
        for (const auto& s : r1.sequences) {
            std::size_t near = 100;
            for (const auto& p : r0.sequences) near = std::min(near, hamming_distance(s, p));
            CHECK(near == 1);
            CHECK(std::count(r0.sequences.begin(), r0.sequences.end(), s) == 0);
        }
        CHECK(st.data.size() == 21);
    }
    SUBCASE("parents are chosen uniformly") {
        std::vector<Residue> half(30, 0);
        for (std::size_t i = 0; i < 15; ++i) half[i] = 1;
        const std::vector<Sequence> parents{wt, Sequence(std::vector<Residue>(30, 1)), Sequence(half)};
        ExplorerState base(wt);
        for (const auto& p : parents) base.data.add(p, nk.evaluate(p));
        std::vector<int> counts(3, 0);
        Rng rng(2);
        const int n = 10000;
        for (int t = 0; t < n; ++t) {
            ExplorerState st = base;
            BudgetedOracle oracle(nk, 1, 1);
            const auto rec = random_search_round(st, oracle, 1, rng);
            for (std::size_t k = 0; k < 3; ++k)
                if (hamming_distance(rec.sequences[0], parents[k]) == 1) ++counts[k];
        }
        const double sigma = std::sqrt(n * (1.0 / 3) * (2.0 / 3));
        for (int c : counts) CHECK(std::abs(c - n / 3.0) <= 4 * sigma);
        CHECK(counts[0] + counts[1] + counts[2] == n);
    }
}

TEST_CASE("distance round robin") {
    const auto wt = testing::constant_sequence(6);
    Rng rng(5);
    for (int t = 0; t < 200; ++t) {
        std::vector<Sequence> seqs;
        std::set<Sequence> used;
        while (seqs.size() < 30) {
            auto s = testing::random_sequence(6, 2, rng);
            if (s != wt && used.insert(s).second) seqs.push_back(s);
        }
        std::vector<double> means(30);
        for (double& m : means) m = rng.uniform01();
        const std::size_t m = 1 + rng.uniform_index(30);
        const auto pick = distance_round_robin(seqs, means, wt, m);
        CHECK(pick.size() == m);
        CHECK(std::set<std::size_t>(pick.begin(), pick.end()).size() == m);
        std::set<std::size_t> classes;
        for (const auto& s : seqs) classes.insert(hamming_distance(s, wt));
        // First sweep: the best of each class, in increasing distance.
        const std::vector<std::size_t> order(classes.begin(), classes.end());
        for (std::size_t i = 0; i < std::min(m, order.size()); ++i) {
            double best = -1.0;
            for (std::size_t j = 0; j < 30; ++j)
                if (hamming_distance(seqs[j], wt) == order[i]) best = std::max(best, means[j]);
            CHECK(hamming_distance(seqs[pick[i]], wt) == order[i]);
            CHECK(means[pick[i]] == best);
        }
    }
}

TEST_CASE("pex greedy extends the frontier on an additive landscape") {
    // Every site prefers the non-wild-type residue, so the optimum is the
    // all-mutant sequence and progress means moving away from the wild type.
    Rng gen(4);
    std::vector<std::vector<double>> tables(12);
    for (auto& t : tables) {
        const double base = gen.uniform(0.0, 0.5);
        t = {base, base + gen.uniform(0.1, 0.5)};
    }
    const NKLandscape nk(Alphabet::synthetic(2), 0, std::vector<std::vector<std::size_t>>(12), tables);
    const auto wt = nk.default_wild_type();
    BudgetedOracle oracle(nk, 4, 12);
    ExplorerState st(wt);
    Ensemble ens(tiny_conv(), 12, nk.alphabet(), Ensemble::derive_seeds(3, 3));
    ProximalConfig prox;
    prox.pool_size = 128;
    Rng rng(7);
    std::size_t reach = 0;
    for (int r = 0; r < 4; ++r) {
        const auto rec = pex_greedy_round(st, ens, oracle, 12, prox, quick_train(), rng);
        CHECK(rec.cumulative_max == st.data.max_target());
        std::size_t far = 0;
        for (const auto& f : st.frontier) far = std::max(far, f.distance);
        reach = far;
    }
    CHECK(reach >= 3);
    CHECK(st.frontier.back().fitness == st.data.max_target());
}
