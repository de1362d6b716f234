#pragma once

#include "proxbo/autodiff.hpp"
#include "proxbo/dataset.hpp"
#include "proxbo/posterior.hpp"
#include "proxbo/rng.hpp"
#include "proxbo/sequence.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace proxbo {

/// How the last conv feature map reaches the dense layer.
enum class Pooling {
    flatten,  ///< keep per-position features (position-aware)
    mean,     ///< average over positions
};

struct ConvRegressorConfig {
    std::vector<std::size_t> channels{32, 32};
    std::size_t kernel_size = 5;
    std::size_t hidden_dense = 64;
    Pooling pooling = Pooling::flatten;
};

/// Plain tanh recurrence scanned left to right; the final hidden state feeds
/// the output head.
struct RecurrentRegressorConfig {
    std::size_t hidden_size = 64;
};

using RegressorConfig = std::variant<ConvRegressorConfig, RecurrentRegressorConfig>;

/// Throws InputError for even kernels or zero widths.
void validate(const RegressorConfig& cfg);

/// [B, L, V] one-hot batch.
Tensor encode_batch(std::span<const Sequence> batch, std::size_t alphabet_size);

/// One ensemble member: a feature extractor followed by a linear head
/// (features -> scalar). Parameters are ordered extractor first, then
/// head weight [H,1] and head bias [1].
class Regressor {
public:
    Regressor(RegressorConfig cfg, std::size_t length, std::size_t alphabet_size);

    /// He-style scaled uniform weights, zero biases.
    void initialize(std::uint64_t seed);

    nn::Var features(nn::Tape& tape, nn::Var x);
    nn::Var forward(nn::Tape& tape, nn::Var x);

    /// Inference helpers on an encoded [B,L,V] batch.
    std::vector<double> predict(const Tensor& x) const;
    Tensor features(const Tensor& x) const;

    std::vector<nn::Parameter>& parameters() noexcept { return params_; }
    const std::vector<nn::Parameter>& parameters() const noexcept { return params_; }
    nn::Parameter& head_weight() { return params_[params_.size() - 2]; }
    nn::Parameter& head_bias() { return params_.back(); }
    const nn::Parameter& head_weight() const { return params_[params_.size() - 2]; }
    const nn::Parameter& head_bias() const { return params_.back(); }

    std::size_t feature_size() const noexcept { return feature_size_; }
    std::size_t parameter_count() const noexcept;
    std::string parameter_name(std::size_t index) const;
    const RegressorConfig& config() const noexcept { return cfg_; }
    std::size_t length() const noexcept { return length_; }
    std::size_t alphabet_size() const noexcept { return alphabet_size_; }

private:
    RegressorConfig cfg_;
    std::size_t length_;
    std::size_t alphabet_size_;
    std::size_t feature_size_ = 0;
    std::vector<nn::Parameter> params_;
    std::vector<std::string> names_;
    std::vector<std::size_t> fan_in_;
};

struct TrainConfig {
    std::size_t epochs = 200;
    std::size_t batch_size = 64;
    double learning_rate = 1e-3;
    /// Each member trains on a with-replacement resample of the data.
    bool bootstrap = true;
    /// Continue from current parameters instead of re-initializing.
    bool warm_start = false;
    /// Record the full-sample loss after every epoch (costs one extra pass).
    bool record_epoch_loss = false;
};

void validate(const TrainConfig& cfg);

struct TrainReport {
    /// Per-member MSE (standardized units) on the member's own sample.
    std::vector<double> final_loss;
    /// Per-member loss after each epoch; empty unless requested.
    std::vector<std::vector<double>> epoch_loss;
};

struct MeanVar {
    double mean = 0.0;
    double variance = 0.0;
};

/// Deep ensemble of independently initialized, independently trained
/// regressors. Predictive mean and population variance across members stand
/// in for a Gaussian-process posterior. Immutable between fits, so concurrent
/// prediction is safe.
class Ensemble final : public PosteriorModel {
public:
    Ensemble(RegressorConfig cfg, std::size_t length, Alphabet alphabet, std::vector<std::uint64_t> member_seeds);

    /// `count` member seeds derived from `base`.
    static std::vector<std::uint64_t> derive_seeds(std::uint64_t base, std::size_t count);

    /// Minibatch Adam on MSE against standardized targets. Members train in
    /// parallel; each member's randomness comes only from its own seed and one
    /// draw from `rng`, so identical seeds give identical members.
    TrainReport fit(const Dataset& data, const TrainConfig& cfg, Rng& rng);

    MeanVar predict_mean_var(const Sequence& s) const;
    std::vector<MeanVar> predict_batch(std::span<const Sequence> batch) const;
    /// De-standardized outputs, indexed [member][sequence].
    std::vector<std::vector<double>> member_predictions(std::span<const Sequence> batch) const;

    std::vector<Posterior> posterior(std::span<const Sequence> batch) const override;

    /// Fantasy updates run `update_steps` full-batch gradient steps of size
    /// `update_lr` on the MSE over D plus the fantasy batch, warm-started from
    /// each member's trained output head with its feature extractor frozen.
    /// With frozen features the steps are affine in the fantasy outcomes, so
    /// they are computed once per batch in that form and reused across samples.
    std::unique_ptr<FantasyBase> fantasy_base(const Dataset& data, std::span<const Sequence> inner_pool,
                                              const KGConfig& cfg) const override;

    bool trained() const noexcept { return trained_; }
    std::size_t size() const noexcept { return members_.size(); }
    Regressor& member(std::size_t i) { return members_.at(i); }
    const Regressor& member(std::size_t i) const { return members_.at(i); }
    const std::vector<std::uint64_t>& member_seeds() const noexcept { return seeds_; }
    const RegressorConfig& config() const noexcept { return cfg_; }
    const Alphabet& alphabet() const noexcept { return alphabet_; }
    std::size_t length() const noexcept { return length_; }

    double target_mean() const noexcept { return target_mean_; }
    double target_scale() const noexcept { return target_scale_; }
    double standardize(double y) const noexcept { return (y - target_mean_) / target_scale_; }
    double destandardize(double z) const noexcept { return z * target_scale_ + target_mean_; }
    /// Sets the target scaling and marks the ensemble trained (for hand-built
    /// members and tests).
    void set_target_scaling(double mean, double scale);

    std::string serialize() const;
    static Ensemble deserialize(std::string_view text);
    void save(const std::filesystem::path& path) const;
    static Ensemble load(const std::filesystem::path& path);

private:
    void require_trained() const;
    void check_sequences(std::span<const Sequence> batch) const;

    RegressorConfig cfg_;
    std::size_t length_;
    Alphabet alphabet_;
    std::vector<std::uint64_t> seeds_;
    std::vector<Regressor> members_;
    double target_mean_ = 0.0;
    double target_scale_ = 1.0;
    bool trained_ = false;
};

struct GradientCheckOptions {
    std::uint64_t seed = 1234;
    std::size_t batch = 16;
    std::size_t length = 6;
    std::size_t alphabet_size = 4;
    double step = 1e-4;
    /// Set every weight and bias to zero and use zero targets.
    bool zero_weights = false;
    nn::BackwardFault fault = nn::BackwardFault::none;
};

struct GradientEntry {
    std::string parameter;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradientCheckReport {
    bool passed = false;
    double max_rel_error = 0.0;
    GradientEntry worst;
    std::vector<GradientEntry> entries;
};

/// Relative error used by gradient_check: |a - n| / max(|a|, |n|, 1e-6).
double gradient_rel_error(double analytic, double numeric);

/// Compares every parameter's analytic gradient of the MSE loss on a random
/// one-hot batch against a central finite difference.
GradientCheckReport gradient_check(const RegressorConfig& cfg, double tolerance = 1e-4,
                                   const GradientCheckOptions& opts = {});

}  // namespace proxbo
