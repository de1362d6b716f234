#include "proxbo/surrogate.hpp"

#include "proxbo/errors.hpp"
#include "proxbo/parallel.hpp"
#include "proxbo/text.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace proxbo {

using nn::Parameter;
using nn::Tape;
using nn::Var;

void validate(const RegressorConfig& cfg) {
    if (const auto* c = std::get_if<ConvRegressorConfig>(&cfg)) {
        if (c->channels.empty()) throw InputError("conv regressor needs at least one conv layer");
        for (auto w : c->channels)
            if (w < 1) throw InputError("conv channel widths must be >= 1");
        if (c->kernel_size < 1 || c->kernel_size % 2 == 0) throw InputError("conv kernel_size must be odd");
        if (c->hidden_dense < 1) throw InputError("conv hidden_dense must be >= 1");
    } else {
        if (std::get<RecurrentRegressorConfig>(cfg).hidden_size < 1)
            throw InputError("recurrent hidden_size must be >= 1");
    }
}

void validate(const TrainConfig& cfg) {
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0))
        throw InputError("train config: epochs, batch_size and learning_rate must be positive");
}

Tensor encode_batch(std::span<const Sequence> batch, std::size_t alphabet_size) {
    const std::size_t L = batch.empty() ? 0 : batch.front().size();
    Tensor x({batch.size(), L, alphabet_size});
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch[b].size() != L) throw InputError("encode_batch: mixed sequence lengths");
        for (std::size_t l = 0; l < L; ++l) {
            const Residue r = batch[b][l];
            if (r >= alphabet_size) throw InputError("encode_batch: residue outside alphabet");
            x.data[(b * L + l) * alphabet_size + r] = 1.0;
        }
    }
    return x;
}

// ---------------------------------------------------------------------------
// Regressor

Regressor::Regressor(RegressorConfig cfg, std::size_t length, std::size_t alphabet_size)
    : cfg_(std::move(cfg)), length_(length), alphabet_size_(alphabet_size) {
    validate(cfg_);
    if (length_ < 1 || alphabet_size_ < 2) throw InputError("regressor needs length >= 1 and alphabet >= 2");
    auto add = [&](std::string name, std::vector<std::size_t> shape, std::size_t fan_in) {
        params_.emplace_back(std::move(shape));
        names_.push_back(std::move(name));
        fan_in_.push_back(fan_in);
    };
    if (const auto* c = std::get_if<ConvRegressorConfig>(&cfg_)) {
        std::size_t cin = alphabet_size_;
        for (std::size_t i = 0; i < c->channels.size(); ++i) {
            const std::size_t cout = c->channels[i];
            add("conv" + std::to_string(i) + ".w", {c->kernel_size, cin, cout}, c->kernel_size * cin);
            add("conv" + std::to_string(i) + ".b", {cout}, 0);
            cin = cout;
        }
        const std::size_t flat = c->pooling == Pooling::flatten ? length_ * cin : cin;
        add("dense.w", {flat, c->hidden_dense}, flat);
        add("dense.b", {c->hidden_dense}, 0);
        feature_size_ = c->hidden_dense;
    } else {
        const std::size_t h = std::get<RecurrentRegressorConfig>(cfg_).hidden_size;
        add("rnn.wx", {alphabet_size_, h}, alphabet_size_);
        add("rnn.wh", {h, h}, h);
        add("rnn.b", {h}, 0);
        feature_size_ = h;
    }
    add("head.w", {feature_size_, 1}, feature_size_);
    add("head.b", {1}, 0);
}

void Regressor::initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        p.zero_grad();
        if (fan_in_[i] == 0) {
            p.value.fill(0.0);
            continue;
        }
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in_[i]));
        for (double& v : p.value.data) v = rng.uniform(-bound, bound);
    }
}

std::size_t Regressor::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

std::string Regressor::parameter_name(std::size_t index) const { return names_.at(index); }

namespace {

// Shared by recording (mutable params) and inference (const params) paths;
// Tape::param overloads pick the right leaf kind.
template <class Params>
Var build_features(const RegressorConfig& cfg, Params& params, std::size_t length, Tape& tape, Var x) {
    if (const auto* c = std::get_if<ConvRegressorConfig>(&cfg)) {
        Var h = x;
        std::size_t p = 0;
        for (std::size_t i = 0; i < c->channels.size(); ++i, p += 2)
            h = tape.relu(tape.conv1d(h, tape.param(params[p]), tape.param(params[p + 1])));
        h = c->pooling == Pooling::mean ? tape.mean_pool(h) : tape.flatten(h);
        return tape.relu(tape.dense(h, tape.param(params[p]), tape.param(params[p + 1])));
    }
    const std::size_t hsize = std::get<RecurrentRegressorConfig>(cfg).hidden_size;
    const Var wx = tape.param(params[0]);
    const Var wh = tape.param(params[1]);
    const Var b = tape.param(params[2]);
    Var h = tape.input(Tensor({tape.value(x).dim(0), hsize}));
    for (std::size_t t = 0; t < length; ++t)
        h = tape.tanh(tape.add(tape.matmul(tape.position(x, t), wx), tape.dense(h, wh, b)));
    return h;
}

template <class Params>
Var build_forward(const RegressorConfig& cfg, Params& params, std::size_t length, Tape& tape, Var x) {
    const Var f = build_features(cfg, params, length, tape, x);
    const std::size_t n = params.size();
    return tape.dense(f, tape.param(params[n - 2]), tape.param(params[n - 1]));
}

}  // namespace

Var Regressor::features(Tape& tape, Var x) { return build_features(cfg_, params_, length_, tape, x); }

Var Regressor::forward(Tape& tape, Var x) { return build_forward(cfg_, params_, length_, tape, x); }

std::vector<double> Regressor::predict(const Tensor& x) const {
    Tape tape(false);
    const auto& params = params_;
    const Var out = build_forward(cfg_, params, length_, tape, tape.input(x));
    return tape.value(out).data;
}

Tensor Regressor::features(const Tensor& x) const {
    Tape tape(false);
    const auto& params = params_;
    const Var out = build_features(cfg_, params, length_, tape, tape.input(x));
    return tape.value(out);
}

// ---------------------------------------------------------------------------
// Ensemble

namespace {

constexpr std::size_t kPredictChunk = 512;

struct Adam {
    std::vector<Tensor> m, v;
    std::size_t step = 0;
    static constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    explicit Adam(const std::vector<Parameter>& params) {
        for (const auto& p : params) {
            m.emplace_back(p.value.shape);
            v.emplace_back(p.value.shape);
        }
    }

    void update(std::vector<Parameter>& params, double lr) {
        ++step;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i];
            for (std::size_t j = 0; j < p.value.size(); ++j) {
                const double g = p.grad.data[j];
                m[i].data[j] = beta1 * m[i].data[j] + (1.0 - beta1) * g;
                v[i].data[j] = beta2 * v[i].data[j] + (1.0 - beta2) * g * g;
                p.value.data[j] -= lr * (m[i].data[j] / c1) / (std::sqrt(v[i].data[j] / c2) + eps);
            }
        }
    }
};

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
    const std::size_t w = x.size() / x.dim(0);
    std::vector<std::size_t> shape = x.shape;
    shape[0] = rows.size();
    Tensor out(shape);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(x.data.begin() + static_cast<std::ptrdiff_t>(rows[i] * w), w,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i * w));
    return out;
}

double sample_loss(const Regressor& r, const Tensor& x, std::span<const std::size_t> rows,
                   std::span<const double> targets) {
    double acc = 0.0;
    for (std::size_t start = 0; start < rows.size(); start += kPredictChunk) {
        const auto chunk = rows.subspan(start, std::min(kPredictChunk, rows.size() - start));
        const auto pred = r.predict(gather_rows(x, chunk));
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            const double d = pred[i] - targets[chunk[i]];
            acc += d * d;
        }
    }
    return acc / static_cast<double>(rows.size());
}

}  // namespace

Ensemble::Ensemble(RegressorConfig cfg, std::size_t length, Alphabet alphabet, std::vector<std::uint64_t> member_seeds)
    : cfg_(std::move(cfg)), length_(length), alphabet_(std::move(alphabet)), seeds_(std::move(member_seeds)) {
    if (seeds_.empty()) throw InputError("ensemble needs at least one member");
    validate(cfg_);
    members_.reserve(seeds_.size());
    for (auto s : seeds_) {
        members_.emplace_back(cfg_, length_, alphabet_.size());
        members_.back().initialize(s);
    }
}

std::vector<std::uint64_t> Ensemble::derive_seeds(std::uint64_t base, std::size_t count) {
    std::vector<std::uint64_t> out(count);
    for (std::size_t i = 0; i < count; ++i) out[i] = mix_seed(base, i + 1);
    return out;
}

void Ensemble::check_sequences(std::span<const Sequence> batch) const {
    for (const auto& s : batch)
        if (s.size() != length_ || !s.valid_for(alphabet_))
            throw InputError("sequence does not match the ensemble's length/alphabet");
}

void Ensemble::require_trained() const {
    if (!trained_) throw StateError("ensemble has not been trained");
}

void Ensemble::set_target_scaling(double mean, double scale) {
    if (!std::isfinite(mean) || !(scale > 0.0) || !std::isfinite(scale))
        throw InputError("target scaling must be finite with positive scale");
    target_mean_ = mean;
    target_scale_ = scale;
    trained_ = true;
}

TrainReport Ensemble::fit(const Dataset& data, const TrainConfig& cfg, Rng& rng) {
    if (data.empty()) throw InputError("fit: empty dataset");
    validate(cfg);
    check_sequences(data.sequence_span());

    const auto& y = data.targets();
    const std::size_t n = y.size();
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : y) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double scale = var > 0.0 ? std::sqrt(var) : 1.0;
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = (y[i] - mean) / scale;

    const Tensor x = encode_batch(data.sequence_span(), alphabet_.size());
    const std::uint64_t fit_seed = rng.next_u64();
    const bool warm = cfg.warm_start && trained_;

    TrainReport report;
    report.final_loss.assign(members_.size(), 0.0);
    report.epoch_loss.assign(cfg.record_epoch_loss ? members_.size() : 0, {});

    parallel_for(members_.size(), [&](std::size_t m) {
        Regressor& member = members_[m];
        Rng member_rng(mix_seed(seeds_[m], fit_seed));
        if (!warm) member.initialize(seeds_[m]);

        std::vector<std::size_t> sample(n);
        for (std::size_t i = 0; i < n; ++i) sample[i] = cfg.bootstrap ? member_rng.uniform_index(n) : i;

        Adam adam(member.parameters());
        std::vector<std::size_t> order = sample;
        std::vector<double> batch_t;
        for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
            member_rng.shuffle(order.begin(), order.end());
            for (std::size_t start = 0; start < n; start += cfg.batch_size) {
                const std::span<const std::size_t> rows(order.data() + start, std::min(cfg.batch_size, n - start));
                batch_t.resize(rows.size());
                for (std::size_t i = 0; i < rows.size(); ++i) batch_t[i] = t[rows[i]];
                for (auto& p : member.parameters()) p.zero_grad();
                Tape tape;
                const Var loss = tape.mse(member.forward(tape, tape.input(gather_rows(x, rows))), batch_t);
                if (!std::isfinite(tape.value(loss)[0]))
                    throw TrainingError("member " + std::to_string(m) + " diverged (non-finite loss) in epoch " +
                                        std::to_string(epoch));
                tape.backward(loss);
                adam.update(member.parameters(), cfg.learning_rate);
            }
            if (cfg.record_epoch_loss) report.epoch_loss[m].push_back(sample_loss(member, x, sample, t));
        }
        const double final_loss = sample_loss(member, x, sample, t);
        if (!std::isfinite(final_loss))
            throw TrainingError("member " + std::to_string(m) + " diverged (non-finite final loss)");
        report.final_loss[m] = final_loss;
    });

    target_mean_ = mean;
    target_scale_ = scale;
    trained_ = true;
    return report;
}

std::vector<std::vector<double>> Ensemble::member_predictions(std::span<const Sequence> batch) const {
    require_trained();
    check_sequences(batch);
    std::vector<std::vector<double>> out(members_.size(), std::vector<double>(batch.size()));
    for (std::size_t start = 0; start < batch.size(); start += kPredictChunk) {
        const auto chunk = batch.subspan(start, std::min(kPredictChunk, batch.size() - start));
        const Tensor x = encode_batch(chunk, alphabet_.size());
        for (std::size_t m = 0; m < members_.size(); ++m) {
            const auto pred = members_[m].predict(x);
            for (std::size_t i = 0; i < chunk.size(); ++i) out[m][start + i] = destandardize(pred[i]);
        }
    }
    return out;
}

std::vector<MeanVar> Ensemble::predict_batch(std::span<const Sequence> batch) const {
    const auto preds = member_predictions(batch);
    const double inv = 1.0 / static_cast<double>(members_.size());
    std::vector<MeanVar> out(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double first = preds[0][i];
        bool agree = true;
        double sum = 0.0;
        for (const auto& p : preds) {
            sum += p[i];
            agree = agree && p[i] == first;
        }
        if (agree) {
            out[i] = {first, 0.0};
            continue;
        }
        const double mean = sum * inv;
        double var = 0.0;
        for (const auto& p : preds) var += (p[i] - mean) * (p[i] - mean);
        out[i] = {mean, var * inv};
    }
    return out;
}

MeanVar Ensemble::predict_mean_var(const Sequence& s) const {
    return predict_batch(std::span<const Sequence>(&s, 1)).front();
}

std::vector<Posterior> Ensemble::posterior(std::span<const Sequence> batch) const {
    const auto mv = predict_batch(batch);
    std::vector<Posterior> out(mv.size());
    for (std::size_t i = 0; i < mv.size(); ++i) out[i] = {mv[i].mean, std::sqrt(mv[i].variance)};
    return out;
}

// ---------------------------------------------------------------------------
// Fantasy updates

namespace {

/// Row-major [rows, H+1] matrix of features with a trailing bias column.
struct Design {
    std::size_t rows = 0, cols = 0;
    std::vector<double> a;
    double at(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

Design design_matrix(const Regressor& r, std::span<const Sequence> seqs, std::size_t alphabet_size) {
    const std::size_t h = r.feature_size();
    Design d{seqs.size(), h + 1, std::vector<double>(seqs.size() * (h + 1))};
    for (std::size_t start = 0; start < seqs.size(); start += kPredictChunk) {
        const auto chunk = seqs.subspan(start, std::min(kPredictChunk, seqs.size() - start));
        const Tensor f = r.features(encode_batch(chunk, alphabet_size));
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            std::copy_n(f.data.begin() + static_cast<std::ptrdiff_t>(i * h), h,
                        d.a.begin() + static_cast<std::ptrdiff_t>((start + i) * (h + 1)));
            d.a[(start + i) * (h + 1) + h] = 1.0;
        }
    }
    return d;
}

struct MemberFantasyState {
    Design pool;                  // P x (H+1)
    std::vector<double> gram;     // (H+1)^2, Phi_D^T Phi_D
    std::vector<double> rhs;      // H+1, Phi_D^T t_D
    std::vector<double> head;     // H+1, trained head (weights then bias)
};

class EnsembleFantasyBatch final : public FantasyBatch {
public:
    EnsembleFantasyBatch(std::vector<double> base, std::vector<double> gain, std::size_t b, double center)
        : base_(std::move(base)), gain_(std::move(gain)), b_(b), center_(center) {}

    std::vector<double> pool_means(std::span<const double> outcomes) const override {
        if (outcomes.size() != b_) throw InputError("fantasy outcomes do not match the batch size");
        std::vector<double> out = base_;
        for (std::size_t p = 0; p < out.size(); ++p) {
            const double* g = &gain_[p * b_];
            for (std::size_t j = 0; j < b_; ++j) out[p] += g[j] * (outcomes[j] - center_);
        }
        return out;
    }

private:
    std::vector<double> base_;  // P, de-standardized ensemble mean at t_s = 0
    std::vector<double> gain_;  // P x b, d(mean)/d(y_s)
    std::size_t b_;
    double center_;
};

class EnsembleFantasyBase final : public FantasyBase {
public:
    EnsembleFantasyBase(const Ensemble& ens, const Dataset& data, std::span<const Sequence> pool, const KGConfig& cfg)
        : ens_(ens), cfg_(cfg), n_data_(data.size()) {
        const std::size_t h1 = ens.member(0).feature_size() + 1;
        std::vector<double> t(data.size());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = ens.standardize(data.targets()[i]);
        members_.resize(ens.size());
        parallel_for(ens.size(), [&](std::size_t m) {
            const Regressor& r = ens.member(m);
            auto& st = members_[m];
            st.pool = design_matrix(r, pool, ens.alphabet().size());
            const Design d = design_matrix(r, data.sequence_span(), ens.alphabet().size());
            st.gram.assign(h1 * h1, 0.0);
            st.rhs.assign(h1, 0.0);
            for (std::size_t i = 0; i < d.rows; ++i) {
                const double* row = &d.a[i * h1];
                for (std::size_t a = 0; a < h1; ++a) {
                    st.rhs[a] += row[a] * t[i];
                    const double ra = row[a];
                    if (ra == 0.0) continue;
                    for (std::size_t b = 0; b < h1; ++b) st.gram[a * h1 + b] += ra * row[b];
                }
            }
            st.head.assign(h1, 0.0);
            const auto& hw = r.head_weight().value.data;
            std::copy(hw.begin(), hw.end(), st.head.begin());
            st.head[h1 - 1] = r.head_bias().value.data[0];
        });
        current_.assign(pool.size(), 0.0);
        for (const auto& st : members_)
            for (std::size_t p = 0; p < pool.size(); ++p) {
                double z = 0.0;
                for (std::size_t a = 0; a < h1; ++a) z += st.pool.at(p, a) * st.head[a];
                current_[p] += ens.destandardize(z);
            }
        for (double& v : current_) v /= static_cast<double>(members_.size());
    }

    const std::vector<double>& current_pool_means() const override { return current_; }

    std::vector<Posterior> posterior(std::span<const Sequence> batch) const override { return ens_.posterior(batch); }

    std::unique_ptr<FantasyBatch> with_batch(std::span<const Sequence> batch) const override {
        if (batch.empty()) throw InputError("fantasy batch is empty");
        const std::size_t b = batch.size();
        const std::size_t h1 = ens_.member(0).feature_size() + 1;
        const std::size_t P = current_.size();
        const double step = 2.0 * cfg_.update_lr / static_cast<double>(n_data_ + b);
        const double inv_m = 1.0 / static_cast<double>(members_.size());

        std::vector<std::vector<double>> base_m(members_.size()), gain_m(members_.size());
        parallel_for(members_.size(), [&](std::size_t m) {
            const auto& st = members_[m];
            const Design s = design_matrix(ens_.member(m), batch, ens_.alphabet().size());
            std::vector<double> gram = st.gram;
            for (std::size_t i = 0; i < b; ++i)
                for (std::size_t a = 0; a < h1; ++a)
                    for (std::size_t c = 0; c < h1; ++c) gram[a * h1 + c] += s.at(i, a) * s.at(i, c);

            // w_t = coef[:,0] + coef[:,1:] t_s, stored row-major [(H+1), 1+b].
            // Each step: coef <- coef - step * (gram coef - rhs), with
            // rhs[:,0] = Phi_D^T t_D and rhs[:,1+j] = phi_j.
            const std::size_t w = 1 + b;
            std::vector<double> coef(h1 * w, 0.0), rhs(h1 * w, 0.0), next(h1 * w);
            for (std::size_t a = 0; a < h1; ++a) {
                coef[a * w] = st.head[a];
                rhs[a * w] = st.rhs[a];
                for (std::size_t j = 0; j < b; ++j) rhs[a * w + 1 + j] = s.at(j, a);
            }
            for (std::size_t it = 0; it < cfg_.update_steps; ++it) {
                for (std::size_t a = 0; a < h1; ++a) {
                    double* out = &next[a * w];
                    for (std::size_t c = 0; c < w; ++c) out[c] = -rhs[a * w + c];
                    for (std::size_t k = 0; k < h1; ++k) {
                        const double g = gram[a * h1 + k];
                        if (g == 0.0) continue;
                        const double* ck = &coef[k * w];
                        for (std::size_t c = 0; c < w; ++c) out[c] += g * ck[c];
                    }
                }
                for (std::size_t i = 0; i < coef.size(); ++i) coef[i] -= step * next[i];
            }
            for (double v : coef)
                if (!std::isfinite(v)) throw NumericError("fantasy update diverged in member " + std::to_string(m));

            auto& base = base_m[m];
            auto& gain = gain_m[m];
            base.assign(P, 0.0);
            gain.assign(P * b, 0.0);
            for (std::size_t p = 0; p < P; ++p) {
                const double* row = &st.pool.a[p * h1];
                for (std::size_t a = 0; a < h1; ++a) {
                    const double f = row[a];
                    if (f == 0.0) continue;
                    base[p] += f * coef[a * w];
                    for (std::size_t j = 0; j < b; ++j) gain[p * b + j] += f * coef[a * w + 1 + j];
                }
            }
        });
        // Ensemble mean in fitness units. t_s = (y - mean) / scale, so the
        // de-standardized gain on (y - mean) is the standardized gain itself.
        std::vector<double> base(P, 0.0), gain(P * b, 0.0);
        for (std::size_t m = 0; m < members_.size(); ++m) {
            for (std::size_t p = 0; p < P; ++p) base[p] += ens_.destandardize(base_m[m][p]) * inv_m;
            for (std::size_t i = 0; i < P * b; ++i) gain[i] += gain_m[m][i] * inv_m;
        }
        return std::make_unique<EnsembleFantasyBatch>(std::move(base), std::move(gain), b, ens_.target_mean());
    }

private:
    const Ensemble& ens_;
    KGConfig cfg_;
    std::size_t n_data_;
    std::vector<MemberFantasyState> members_;
    std::vector<double> current_;
};

}  // namespace

std::unique_ptr<FantasyBase> Ensemble::fantasy_base(const Dataset& data, std::span<const Sequence> inner_pool,
                                                    const KGConfig& cfg) const {
    require_trained();
    if (inner_pool.empty()) throw InputError("fantasy_base: empty inner pool");
    check_sequences(inner_pool);
    check_sequences(data.sequence_span());
    return std::make_unique<EnsembleFantasyBase>(*this, data, inner_pool, cfg);
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::string_view kMagic = "proxbo-ensemble 1";

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

}  // namespace

std::string Ensemble::serialize() const {
    std::ostringstream os;
    os << kMagic << "\n";
    if (const auto* c = std::get_if<ConvRegressorConfig>(&cfg_)) {
        os << "kind=conv\n";
        os << "conv.channels=" << join_sizes(c->channels) << "\n";
        os << "conv.kernel_size=" << c->kernel_size << "\n";
        os << "conv.hidden_dense=" << c->hidden_dense << "\n";
        os << "conv.pooling=" << (c->pooling == Pooling::mean ? "mean" : "flatten") << "\n";
    } else {
        os << "kind=recurrent\n";
        os << "recurrent.hidden_size=" << std::get<RecurrentRegressorConfig>(cfg_).hidden_size << "\n";
    }
    os << "length=" << length_ << "\n";
    os << "alphabet=" << alphabet_.symbols() << "\n";
    os << "members=" << members_.size() << "\n";
    os << "trained=" << (trained_ ? 1 : 0) << "\n";
    os << "target_mean=" << format_double(target_mean_) << "\n";
    os << "target_scale=" << format_double(target_scale_) << "\n";
    for (std::size_t m = 0; m < members_.size(); ++m) {
        os << "member." << m << ".seed=" << seeds_[m] << "\n";
        os << "member." << m << ".params=";
        bool first = true;
        for (const auto& p : members_[m].parameters())
            for (double v : p.value.data) {
                os << (first ? "" : " ") << format_double(v);
                first = false;
            }
        os << "\n";
    }
    return os.str();
}

Ensemble Ensemble::deserialize(std::string_view text) {
    const auto lines = split(text, '\n');
    if (lines.empty() || trim(lines[0]) != kMagic) throw ParseError("not an ensemble checkpoint", 1);
    std::map<std::string, std::string, std::less<>> kv;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto line = trim(lines[i]);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key=value", i + 1);
        kv.emplace(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
    }
    auto get = [&](const std::string& k) -> const std::string& {
        const auto it = kv.find(k);
        if (it == kv.end()) throw ParseError("checkpoint missing key '" + k + "'", 0);
        return it->second;
    };
    auto get_u = [&](const std::string& k) {
        const auto v = parse_u64(get(k));
        if (!v) throw ParseError("checkpoint key '" + k + "' is not an integer", 0);
        return static_cast<std::size_t>(*v);
    };
    auto get_d = [&](const std::string& k) {
        const auto v = parse_double(get(k));
        if (!v) throw ParseError("checkpoint key '" + k + "' is not a number", 0);
        return *v;
    };
    RegressorConfig cfg;
    if (get("kind") == "conv") {
        ConvRegressorConfig c;
        c.channels.clear();
        for (auto tok : split(get("conv.channels"), ',')) {
            const auto v = parse_u64(tok);
            if (!v) throw ParseError("bad conv.channels", 0);
            c.channels.push_back(*v);
        }
        c.kernel_size = get_u("conv.kernel_size");
        c.hidden_dense = get_u("conv.hidden_dense");
        c.pooling = get("conv.pooling") == "mean" ? Pooling::mean : Pooling::flatten;
        cfg = c;
    } else if (get("kind") == "recurrent") {
        cfg = RecurrentRegressorConfig{get_u("recurrent.hidden_size")};
    } else {
        throw ParseError("unknown regressor kind '" + get("kind") + "'", 0);
    }
    const std::size_t n_members = get_u("members");
    std::vector<std::uint64_t> seeds(n_members);
    for (std::size_t m = 0; m < n_members; ++m) seeds[m] = get_u("member." + std::to_string(m) + ".seed");
    Ensemble ens(cfg, get_u("length"), Alphabet(get("alphabet")), seeds);
    for (std::size_t m = 0; m < n_members; ++m) {
        const auto toks = split(get("member." + std::to_string(m) + ".params"), ' ');
        if (toks.size() != ens.members_[m].parameter_count())
            throw ParseError("member " + std::to_string(m) + " parameter count mismatch", 0);
        std::size_t k = 0;
        for (auto& p : ens.members_[m].parameters())
            for (double& v : p.value.data) {
                const auto x = parse_double(toks[k++]);
                if (!x) throw ParseError("bad parameter value in member " + std::to_string(m), 0);
                v = *x;
            }
    }
    ens.target_mean_ = get_d("target_mean");
    ens.target_scale_ = get_d("target_scale");
    ens.trained_ = get_u("trained") != 0;
    return ens;
}

void Ensemble::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Ensemble Ensemble::load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

// ---------------------------------------------------------------------------
// Gradient check

double gradient_rel_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
    return std::abs(analytic - numeric) / denom;
}

GradientCheckReport gradient_check(const RegressorConfig& cfg, double tolerance, const GradientCheckOptions& opts) {
    Regressor net(cfg, opts.length, opts.alphabet_size);
    net.initialize(opts.seed);
    Rng rng(mix_seed(opts.seed, 0xC0FFEE));
    if (opts.zero_weights)
        for (auto& p : net.parameters()) p.value.fill(0.0);

    std::vector<Sequence> batch;
    for (std::size_t b = 0; b < opts.batch; ++b) {
        std::vector<Residue> r(opts.length);
        for (auto& v : r) v = static_cast<Residue>(rng.uniform_index(opts.alphabet_size));
        batch.emplace_back(std::move(r));
    }
    const Tensor x = encode_batch(batch, opts.alphabet_size);
    std::vector<double> targets(opts.batch, 0.0);
    if (!opts.zero_weights)
        for (double& t : targets) t = rng.normal();

    for (auto& p : net.parameters()) p.zero_grad();
    {
        Tape tape(true, opts.fault);
        const Var loss = tape.mse(net.forward(tape, tape.input(x)), targets);
        tape.backward(loss);
    }
    auto loss_at = [&] {
        const auto pred = net.predict(x);
        double acc = 0.0;
        for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - targets[i]) * (pred[i] - targets[i]);
        return acc / static_cast<double>(pred.size());
    };

    GradientCheckReport report;
    report.passed = true;
    for (std::size_t pi = 0; pi < net.parameters().size(); ++pi) {
        auto& p = net.parameters()[pi];
        for (std::size_t j = 0; j < p.value.size(); ++j) {
            const double orig = p.value.data[j];
            p.value.data[j] = orig + opts.step;
            const double up = loss_at();
            p.value.data[j] = orig - opts.step;
            const double down = loss_at();
            p.value.data[j] = orig;
            GradientEntry e{net.parameter_name(pi), j, p.grad.data[j], (up - down) / (2.0 * opts.step), 0.0};
            e.rel_error = gradient_rel_error(e.analytic, e.numeric);
            if (e.rel_error > report.max_rel_error || report.entries.empty()) {
                report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
                report.worst = e;
            }
            report.entries.push_back(std::move(e));
        }
    }
    report.passed = report.max_rel_error <= tolerance;
    return report;
}

}  // namespace proxbo
