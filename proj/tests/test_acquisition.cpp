#include "proxbo/acquisition.hpp"
#include "proxbo/errors.hpp"
#include "proxbo/landscape.hpp"
#include "proxbo/surrogate.hpp"
#include "conjugate.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <set>
#include <unordered_map>

using namespace proxbo;
using testing::BayesianLinearModel;
using testing::Vec;
using testing::make_toy;
using testing::quadrature_kg;
using testing::toy_model;

namespace {

// EI by direct numerical integration of E[max(Y - best, 0)], Y ~ N(mean, std^2).
// Simpson's rule over the smooth part only: z from the kink at (best - mean) / std up to 12.
double integrated_ei(const Posterior& p, double best) {
    if (p.std == 0.0) return std::max(p.mean - best, 0.0);
    const int n = 4000;
    const double lo = std::max((best - p.mean) / p.std, -12.0), hi = 12.0, h = (hi - lo) / n;
    if (lo >= hi) return 0.0;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double z = lo + i * h;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        acc += w * (p.mean + p.std * z - best) * std::exp(-z * z / 2) / std::sqrt(2 * std::numbers::pi);
    }
    return acc * h / 3.0;
}

// One-hot linear model over short binary sequences, used for selection tests.
BayesianLinearModel onehot_model(std::size_t length) {
    return BayesianLinearModel(
        [length](const Sequence& s) {
            Vec f(2 * length, 0.0);
            for (std::size_t i = 0; i < length; ++i) f[2 * i + s[i]] = 1.0;
            return f;
        },
        2 * length, 0.05);
}

}  // namespace

TEST_CASE("ucb examples and properties") {
    CHECK(ucb({1.0, 2.0}, 2.0) == 5.0);
    CHECK(ucb({1.0, 0.0}, 7.0) == 1.0);
    CHECK(ucb({-3.0, 1.5}, 0.0) == -3.0);
    CHECK_THROWS_AS(ucb({0.0, 1.0}, -0.1), InputError);
    CHECK_THROWS_AS(ucb({0.0, -1.0}, 1.0), InputError);
    CHECK_THROWS_AS(ucb({std::nan(""), 1.0}, 1.0), InputError);
    Rng rng(1);
    for (int i = 0; i < 500; ++i) {
        const Posterior p{rng.uniform(-5, 5), rng.uniform(0, 3)};
        const double b1 = rng.uniform(0, 3), b2 = b1 + rng.uniform(0, 3);
        CHECK(ucb(p, b1) <= ucb(p, b2));
        CHECK(ucb(p, b1) >= p.mean);
    }
}

TEST_CASE("ei examples and properties") {
    CHECK(ei({0.0, 1.0}, 0.0) == doctest::Approx(1.0 / std::sqrt(2 * std::numbers::pi)).epsilon(1e-14));
    CHECK(ei({2.0, 0.0}, 1.0) == 1.0);
    CHECK(ei({0.5, 0.0}, 1.0) == 0.0);
    CHECK(ei({-40.0, 1.0}, 0.0) >= 0.0);
    CHECK_THROWS_AS(ei({0.0, -1.0}, 0.0), InputError);
    Rng rng(2);
    for (int i = 0; i < 300; ++i) {
        const Posterior p{rng.uniform(-3, 3), rng.uniform(0.01, 2)};
        const double best = rng.uniform(-3, 3);
        const double v = ei(p, best);
        CHECK(v >= 0.0);
        CHECK(v >= p.mean - best - 1e-12);
        CHECK(v == doctest::Approx(integrated_ei(p, best)).epsilon(1e-7));
        CHECK(ei({p.mean + 0.1, p.std}, best) >= v);
        CHECK(ei({p.mean, p.std + 0.1}, best) >= v);
    }
}

TEST_CASE("normal helpers") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
    CHECK(normal_pdf(0.0) == doctest::Approx(0.3989422804014327).epsilon(1e-15));
}

TEST_CASE("kg matches Gauss-Hermite brute force on the conjugate toy problem") {
    const auto t = make_toy();
    auto model = toy_model(t);
    model.set_data(t.data);
    // Probabilists' Gauss-Hermite, 3 nodes.
    const std::vector<double> gh_nodes{-std::sqrt(3.0), 0.0, std::sqrt(3.0)};
    const std::vector<double> gh_weights{1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
    const double gh = quadrature_kg(model, t, gh_nodes, gh_weights);
    // Dense Simpson rule over the same outcome as a second, finer oracle.
    std::vector<double> nodes, weights;
    const int n = 8000;
    for (int i = 0; i <= n; ++i) {
        const double z = -10.0 + 20.0 * i / n;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
        nodes.push_back(z);
        weights.push_back(w * (20.0 / n) / 3.0 * std::exp(-z * z / 2) / std::sqrt(2 * std::numbers::pi));
    }
    const double dense = quadrature_kg(model, t, nodes, weights);

    KGConfig cfg;
    cfg.n_fantasies = 20000;
    Rng rng(3);
    const std::vector<Sequence> batch{t.candidate};
    const double kg = kg_oneshot(model, batch, t.pool, t.data, cfg, rng);
    MESSAGE("kg=" << kg << " gauss-hermite=" << gh << " dense=" << dense);
    CHECK(gh > 0.4);
    CHECK(std::abs(kg - gh) <= 0.05 * gh);
    CHECK(std::abs(kg - dense) <= 0.05 * dense);
}

TEST_CASE("kg of a repeated noiseless observation is zero") {
    const auto t = make_toy();
    auto model = toy_model(t);
    model.set_data(t.data);
    KGConfig cfg;
    cfg.n_fantasies = 2000;
    Rng rng(4);
    const std::vector<Sequence> batch{t.measured};
    CHECK(std::abs(kg_oneshot(model, batch, t.pool, t.data, cfg, rng)) <= 1e-3);
}

TEST_CASE("kg of a zero-variance ensemble is zero") {
    const auto nk = NKLandscape::generate(8, 1, Alphabet::synthetic(2), 3);
    Rng rng(5);
    Dataset d;
    while (d.size() < 60) {
        const auto s = testing::random_sequence(8, 2, rng);
        d.add(s, nk.evaluate(s));
    }
    ConvRegressorConfig conv;
    conv.channels = {8};
    conv.kernel_size = 3;
    conv.hidden_dense = 8;
    Ensemble ens(conv, 8, nk.alphabet(), {11, 11, 11, 11, 11});
    TrainConfig tc;
    tc.bootstrap = false;
    tc.epochs = 300;
    ens.fit(d, tc, rng);
    std::vector<Sequence> pool;
    while (pool.size() < 40) {
        auto s = testing::random_sequence(8, 2, rng);
        if (!d.contains(s) && std::find(pool.begin(), pool.end(), s) == pool.end()) pool.push_back(s);
    }
    for (const auto& p : ens.posterior(pool)) REQUIRE(p.std == 0.0);
    KGConfig cfg;
    const std::vector<Sequence> batch{pool[0], pool[1], pool[2]};
    const double kg = kg_oneshot(ens, batch, pool, d, cfg, rng);
    MESSAGE("zero-variance kg=" << kg);
    CHECK(std::abs(kg) <= 1e-3);
}

TEST_CASE("kg input errors") {
    const auto t = make_toy();
    auto model = toy_model(t);
    model.set_data(t.data);
    Rng rng(1);
    KGConfig cfg;
    const std::vector<Sequence> none;
    const std::vector<Sequence> batch{t.candidate};
    CHECK_THROWS_AS(kg_oneshot(model, none, t.pool, t.data, cfg, rng), InputError);
    CHECK_THROWS_AS(kg_oneshot(model, batch, none, t.data, cfg, rng), InputError);
}

TEST_CASE("acquisition kind parsing") {
    CHECK(parse_acquisition_kind("kg") == AcquisitionKind::kg);
    CHECK(to_string(parse_acquisition_kind("ei")) == "ei");
    CHECK_THROWS_AS(parse_acquisition_kind("pi"), ConfigError);
}

TEST_CASE("rank_by_score tie rule") {
    const auto wt = testing::constant_sequence(3);
    const std::vector<Sequence> seqs{Sequence(std::vector<Residue>{1, 1, 0}), Sequence(std::vector<Residue>{0, 1, 0}),
                                     Sequence(std::vector<Residue>{1, 0, 0}), Sequence(std::vector<Residue>{0, 0, 1})};
    const std::vector<double> scores{1.0, 1.0, 1.0, 2.0};
    CHECK(rank_by_score(scores, seqs, wt) == std::vector<std::size_t>{3, 1, 2, 0});
    CHECK(rank_by_score(scores, seqs, std::nullopt) == std::vector<std::size_t>{3, 1, 2, 0});
}

TEST_CASE("select_batch") {
    const std::size_t L = 10;
    auto model = onehot_model(L);
    Rng rng(7);
    const auto wt = testing::constant_sequence(L);
    Dataset d;
    d.add(wt, 0.0);
    while (d.size() < 12) d.add(testing::random_sequence(L, 2, rng), rng.uniform(-1, 1));
    model.set_data(d);
    std::vector<Sequence> pool;
    for (const auto& s : enumerate_all(L, 2))
        if (!d.contains(s)) pool.push_back(s);
    REQUIRE(pool.size() == 1024 - 12);
    const auto post = model.posterior(pool);

    SUBCASE("beta 0 ranks by mean") {
        AcquisitionParams p;
        p.beta = 0.0;
        const auto sel = select_batch(model, pool, d, 10, p, rng);
        std::vector<double> means;
        for (const auto& q : post) means.push_back(q.mean);
        const auto order = rank_by_score(means, pool, std::nullopt);
        for (std::size_t i = 0; i < 10; ++i) CHECK(sel.batch[i] == pool[order[i]]);
    }
    SUBCASE("ei top-1 matches integrated EI argmax") {
        AcquisitionParams p;
        p.kind = AcquisitionKind::ei;
        const auto sel = select_batch(model, pool, d, 1, p, rng);
        double best = -1.0;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            const double v = integrated_ei(post[i], d.max_target());
            if (v > best) best = v, arg = i;
        }
        CHECK(ei(model.posterior(std::vector<Sequence>{sel.batch[0]})[0], d.max_target()) ==
              doctest::Approx(best).epsilon(1e-6));
        CHECK(integrated_ei(post[arg], d.max_target()) == doctest::Approx(sel.scores[0]).epsilon(1e-6));
    }
    SUBCASE("lambda penalizes distance") {
        AcquisitionParams p;
        p.beta = 0.0;
        p.lambda = 1e3;
        p.wild_type = wt;
        const auto sel = select_batch(model, pool, d, 5, p, rng);
        for (const auto& s : sel.batch) CHECK(hamming_distance(s, wt) == 1);
    }
    SUBCASE("whole pool, distinctness and determinism for every kind") {
        const std::vector<Sequence> small(pool.begin(), pool.begin() + 6);
        for (auto kind : {AcquisitionKind::ucb, AcquisitionKind::ei, AcquisitionKind::kg}) {
            AcquisitionParams p;
            p.kind = kind;
            p.kg.n_fantasies = 8;
            p.kg.inner_pool_size = 16;
            p.inner_eval_size = 8;
            auto all = select_batch(model, small, d, 6, p, rng).batch;
            std::sort(all.begin(), all.end());
            auto expected = small;
            std::sort(expected.begin(), expected.end());
            CHECK(all == expected);

            Rng a(99), b(99);
            const auto x = select_batch(model, pool, d, 8, p, a);
            const auto y = select_batch(model, pool, d, 8, p, b);
            CHECK(x.batch == y.batch);
            CHECK(std::set<Sequence>(x.batch.begin(), x.batch.end()).size() == 8);
            for (const auto& s : x.batch) CHECK_FALSE(d.contains(s));
        }
    }
    SUBCASE("errors") {
        AcquisitionParams p;
        CHECK_THROWS_AS(select_batch(model, pool, d, 0, p, rng), InputError);
        const std::vector<Sequence> two(pool.begin(), pool.begin() + 2);
        CHECK_THROWS_AS(select_batch(model, two, d, 3, p, rng), InputError);
        auto dup = two;
        dup.push_back(two[0]);
        CHECK_THROWS_AS(select_batch(model, dup, d, 1, p, rng), InputError);
        auto measured = two;
        measured.push_back(wt);
        CHECK_THROWS_AS(select_batch(model, measured, d, 1, p, rng), InputError);
        p.lambda = -1.0;
        CHECK_THROWS_AS(select_batch(model, two, d, 1, p, rng), InputError);
    }
}
