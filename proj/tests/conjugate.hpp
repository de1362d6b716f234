#pragma once

// Exact conjugate Bayesian linear model and the 2-feature toy problem used as
// knowledge-gradient oracles.

#include "proxbo/dataset.hpp"
#include "proxbo/posterior.hpp"
#include "proxbo/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

namespace testing {

using namespace proxbo;

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;

// Solves A x = b by Gaussian elimination with partial pivoting.
inline Vec solve(Mat a, Vec b) {
    const std::size_t n = b.size();
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
        std::swap(a[c], a[piv]);
        std::swap(b[c], b[piv]);
        for (std::size_t r = c + 1; r < n; ++r) {
            const double f = a[r][c] / a[c][c];
            for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
            b[r] -= f * b[c];
        }
    }
    Vec x(n);
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a[i][k] * x[k];
        x[i] = s / a[i][i];
    }
    return x;
}

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Conjugate Bayesian linear regression: w ~ N(0, I), y = phi(s)^T w + N(0, noise).
// Posterior means and stds are exact; fantasy updates condition exactly.
class BayesianLinearModel final : public PosteriorModel {
public:
    using Features = std::function<Vec(const Sequence&)>;

    BayesianLinearModel(Features phi, std::size_t dim, double noise) : phi_(std::move(phi)), dim_(dim), noise_(noise) {}

    struct State {
        Mat precision;
        Vec xty;
    };

    State condition(const State& prior, std::span<const Sequence> xs, std::span<const double> ys) const {
        State s = prior;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const auto f = phi_(xs[i]);
            for (std::size_t a = 0; a < dim_; ++a) {
                for (std::size_t b = 0; b < dim_; ++b) s.precision[a][b] += f[a] * f[b] / noise_;
                s.xty[a] += f[a] * ys[i] / noise_;
            }
        }
        return s;
    }

    State prior() const {
        State s{Mat(dim_, Vec(dim_, 0.0)), Vec(dim_, 0.0)};
        for (std::size_t a = 0; a < dim_; ++a) s.precision[a][a] = 1.0;
        return s;
    }

    State fit(const Dataset& d) const { return condition(prior(), d.sequences(), d.targets()); }

    Posterior predict(const State& s, const Sequence& x) const {
        const auto f = phi_(x);
        return {dot(f, solve(s.precision, s.xty)), std::sqrt(std::max(0.0, dot(f, solve(s.precision, f))))};
    }

    void set_data(const Dataset& d) { state_ = fit(d); }

    std::vector<Posterior> posterior(std::span<const Sequence> batch) const override {
        std::vector<Posterior> out;
        for (const auto& s : batch) out.push_back(predict(state_, s));
        return out;
    }

    std::unique_ptr<FantasyBase> fantasy_base(const Dataset& data, std::span<const Sequence> inner_pool,
                                              const KGConfig&) const override {
        return std::make_unique<Base>(*this, fit(data), std::vector<Sequence>(inner_pool.begin(), inner_pool.end()));
    }

    Vec features(const Sequence& s) const { return phi_(s); }

private:
    struct Batch final : FantasyBatch {
        const BayesianLinearModel& model;
        State state;
        std::vector<Sequence> batch, pool;
        Batch(const BayesianLinearModel& m, State s, std::vector<Sequence> b, std::vector<Sequence> p)
            : model(m), state(std::move(s)), batch(std::move(b)), pool(std::move(p)) {}
        std::vector<double> pool_means(std::span<const double> y) const override {
            const auto post = model.condition(state, batch, y);
            const auto w = solve(post.precision, post.xty);
            std::vector<double> out;
            for (const auto& s : pool) out.push_back(dot(model.phi_(s), w));
            return out;
        }
    };

    struct Base final : FantasyBase {
        const BayesianLinearModel& model;
        State state;
        std::vector<Sequence> pool;
        std::vector<double> current;
        Base(const BayesianLinearModel& m, State s, std::vector<Sequence> p)
            : model(m), state(std::move(s)), pool(std::move(p)) {
            for (const auto& x : pool) current.push_back(model.predict(state, x).mean);
        }
        const std::vector<double>& current_pool_means() const override { return current; }
        std::vector<Posterior> posterior(std::span<const Sequence> batch) const override {
            std::vector<Posterior> out;
            for (const auto& s : batch) out.push_back(model.predict(state, s));
            return out;
        }
        std::unique_ptr<FantasyBatch> with_batch(std::span<const Sequence> batch) const override {
            return std::make_unique<Batch>(model, state, std::vector<Sequence>(batch.begin(), batch.end()), pool);
        }
    };

    Features phi_;
    std::size_t dim_;
    double noise_;
    State state_;
};

// Toy problem: sequences are just labels for hand-picked 2-d feature vectors.
struct Toy {
    std::unordered_map<Sequence, Vec, SequenceHash> table;
    std::vector<Sequence> pool;
    Sequence measured, candidate;
    Dataset data;
};

inline Sequence label(std::size_t i) {
    std::vector<Residue> r(8);
    for (std::size_t p = 0; p < 8; ++p) r[p] = static_cast<Residue>((i >> (7 - p)) & 1);
    return Sequence(r);
}

inline Toy make_toy() {
    Toy t;
    std::size_t next = 0;
    t.measured = label(next++);
    t.table[t.measured] = {1.0, 0.0};
    t.candidate = label(next++);
    t.table[t.candidate] = {0.0, 1.0};
    for (int k = -16; k <= 16; ++k) {
        const double x = 0.25 * k;
        const auto s = label(next++);
        t.table[s] = {x * x / 2.0, x};
        t.pool.push_back(s);
    }
    t.data.add(t.measured, -1.0);
    return t;
}

inline BayesianLinearModel toy_model(const Toy& t) {
    return BayesianLinearModel([&t](const Sequence& s) { return t.table.at(s); }, 2, 1e-8);
}

// Brute-force KG by quadrature over the single fantasy outcome: condition the
// model exactly at each node and take the pool max.
inline double quadrature_kg(const BayesianLinearModel& model, const Toy& t, std::span<const double> nodes,
                     std::span<const double> weights) {
    const auto state = model.fit(t.data);
    const auto post = model.predict(state, t.candidate);
    auto pool_max = [&](const BayesianLinearModel::State& s) {
        const auto w = solve(s.precision, s.xty);
        double best = -1e300;
        for (const auto& x : t.pool) best = std::max(best, dot(model.features(x), w));
        return best;
    };
    const double mu = pool_max(state);
    const std::vector<Sequence> batch{t.candidate};
    double acc = 0.0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const std::vector<double> y{post.mean + post.std * nodes[i]};
        acc += weights[i] * pool_max(model.condition(state, batch, y));
    }
    return acc - mu;
}

}  // namespace testing
