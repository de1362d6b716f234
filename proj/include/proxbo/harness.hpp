#pragma once

#include "proxbo/acquisition.hpp"
#include "proxbo/explorer.hpp"
#include "proxbo/landscape.hpp"
#include "proxbo/surrogate.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace proxbo {

inline constexpr std::string_view kArtifactVersion = "0.1.0";

enum class Method { batch_bo, random, pex_greedy };
enum class LandscapeKind { nk, nk_file, lookup };

struct CampaignConfig {
    LandscapeKind landscape = LandscapeKind::nk;
    std::string landscape_path;
    bool negate = false;
    /// Text form; empty means the landscape's default.
    std::string wild_type;
    /// Lookup tables only.
    std::string alphabet = Alphabet::protein().symbols();

    std::size_t nk_n = 10;
    std::size_t nk_k = 2;
    std::size_t nk_alphabet_size = 2;
    std::uint64_t nk_seed = 1;

    Method method = Method::batch_bo;
    RegressorConfig surrogate = ConvRegressorConfig{};
    std::size_t ensemble_size = 5;
    TrainConfig train;
    /// Ignored by the baselines; "none" is accepted for them.
    std::optional<AcquisitionKind> acquisition = AcquisitionKind::kg;
    double beta = 2.0;
    KGConfig kg;
    std::size_t inner_eval_size = 64;

    std::size_t rounds = 10;
    std::size_t batch_size = 16;
    ProximalConfig proximal;

    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path output_dir = "runs";
};

/// Flat `key=value` text, one per line, `#` comments. Unknown keys, duplicate
/// keys and malformed values raise ConfigError naming the key.
CampaignConfig parse_config(std::string_view text);
CampaignConfig load_config(const std::filesystem::path& path);

/// Every key in canonical order. Round-trips through parse_config.
std::string config_to_text(const CampaignConfig& cfg);

/// FNV-1a over the canonical text minus run seeds and output directory, so
/// runs of the same experiment under different seeds share a hash.
std::uint64_t config_hash(const CampaignConfig& cfg);

/// Range checks; ConfigError names the offending key.
void validate(const CampaignConfig& cfg);

std::unique_ptr<FitnessLandscape> make_landscape(const CampaignConfig& cfg);
Sequence campaign_wild_type(const CampaignConfig& cfg, const FitnessLandscape& landscape);

struct RunResult {
    std::uint64_t seed = 0;
    std::vector<RoundRecord> rounds;
    /// Stopped early because no unmeasured candidate was left.
    bool exhausted = false;
};

/// One seed of the configured method on `landscape`; writes nothing.
RunResult run_single(const CampaignConfig& cfg, const FitnessLandscape& landscape, std::uint64_t seed);

/// `round,query_index,sequence,fitness,cumulative_max`, 17 significant digits.
std::string run_csv(const RunResult& run, const Alphabet& alphabet);
/// Per-round metadata: lambda, pool size, short-pool flag, wall time.
std::string rounds_csv(const RunResult& run);

std::filesystem::path run_csv_path(const std::filesystem::path& dir, std::uint64_t seed);

/// Runs every seed and writes run CSVs, round metadata and manifest.txt into
/// cfg.output_dir.
std::vector<RunResult> run_campaign(const CampaignConfig& cfg, std::ostream* log = nullptr);

struct AggregateCurve {
    std::vector<double> mean;
    std::vector<double> std;  ///< population
    std::vector<double> min;
    std::vector<double> max;
    std::size_t seeds = 0;
};

/// Per-round statistics of cumulative-max curves. Throws AggregationError on
/// empty input or curves of different length.
AggregateCurve aggregate_curves(const std::vector<std::vector<double>>& curves);

/// Cumulative max at the end of each round, read back from a run CSV.
std::vector<double> read_run_curve(std::string_view csv_text);

struct AggregateSummary {
    AggregateCurve curve;
    double max_fitness = 0.0;
    std::optional<double> optimum;
    /// Fraction of seeds whose final cumulative max reaches the optimum.
    std::optional<double> success_rate;
    std::uint64_t config_hash = 0;
};

/// Reads manifests and run CSVs from `dirs` (hashes must agree), writes
/// aggregate.csv, summary.txt and plot.gp into `out`.
AggregateSummary aggregate_dirs(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& out);

struct GenNkOptions {
    std::size_t n = 10;
    std::size_t k = 2;
    std::size_t alphabet_size = 2;
    std::uint64_t seed = 1;
    std::filesystem::path out = ".";
    /// Demand the TSV; without it the TSV is written only when small enough.
    bool enumerate = false;
};

struct GenNkResult {
    std::filesystem::path spec_path;
    std::optional<std::filesystem::path> table_path;
    std::optional<Sequence> optimum;
    double optimum_value = 0.0;
};

inline constexpr std::uint64_t kEnumerationLimit = std::uint64_t{1} << 20;

/// Writes nk.spec and, for at most 2^20 states, nk.tsv in lexicographic order
/// with a `# optimum <sequence> <value>` header. SizeError when `enumerate` is
/// set and the domain is larger.
GenNkResult gen_nk(const GenNkOptions& opts);

/// Built-in self tests (gradients, EI against Monte Carlo, frontier against
/// brute force). Writes one line per test; true when all pass.
bool self_check(std::ostream& out);

}  // namespace proxbo
