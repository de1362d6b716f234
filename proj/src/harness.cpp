#include "proxbo/harness.hpp"

#include "proxbo/errors.hpp"
#include "proxbo/parallel.hpp"
#include "proxbo/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

namespace proxbo {

namespace {

// ---------------------------------------------------------------------------
// Config keys

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
    throw ConfigError(std::string(key) + ": expected " + std::string(expected) + ", got '" + std::string(value) + "'");
}

std::size_t as_size(std::string_view key, std::string_view v) {
    const auto x = parse_u64(v);
    if (!x) bad_value(key, v, "a non-negative integer");
    return static_cast<std::size_t>(*x);
}

std::uint64_t as_u64(std::string_view key, std::string_view v) {
    const auto x = parse_u64(v);
    if (!x) bad_value(key, v, "a non-negative integer");
    return *x;
}

double as_double(std::string_view key, std::string_view v) {
    const auto x = parse_double(v);
    if (!x || !std::isfinite(*x)) bad_value(key, v, "a finite number");
    return *x;
}

bool as_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, v, "true or false");
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

template <class T>
std::string list_text(const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

// The surrogate variant only holds one architecture; the other's keys are
// parked here so the text form always lists both.
struct SurrogateKnobs {
    ConvRegressorConfig conv;
    RecurrentRegressorConfig recurrent;
    bool use_recurrent = false;
};

SurrogateKnobs knobs_of(const CampaignConfig& c) {
    SurrogateKnobs k;
    if (const auto* cc = std::get_if<ConvRegressorConfig>(&c.surrogate)) {
        k.conv = *cc;
    } else {
        k.recurrent = std::get<RecurrentRegressorConfig>(c.surrogate);
        k.use_recurrent = true;
    }
    return k;
}

struct Key {
    std::string name;
    std::function<void(CampaignConfig&, SurrogateKnobs&, std::string_view)> set;
    std::function<std::string(const CampaignConfig&, const SurrogateKnobs&)> get;
};

const std::vector<Key>& keys() {
    static const std::vector<Key> table = [] {
        std::vector<Key> k;
        auto add = [&](std::string name, auto set, auto get) { k.push_back({std::move(name), set, get}); };
        using C = CampaignConfig;
        using S = SurrogateKnobs;
        using V = std::string_view;

        add("landscape.kind",
            [](C& c, S&, V v) {
                if (v == "nk") c.landscape = LandscapeKind::nk;
                else if (v == "nk_file") c.landscape = LandscapeKind::nk_file;
                else if (v == "lookup") c.landscape = LandscapeKind::lookup;
                else bad_value("landscape.kind", v, "nk, nk_file or lookup");
            },
            [](const C& c, const S&) -> std::string {
                switch (c.landscape) {
                    case LandscapeKind::nk: return "nk";
                    case LandscapeKind::nk_file: return "nk_file";
                    case LandscapeKind::lookup: return "lookup";
                }
                return "";
            });
        add("landscape.path", [](C& c, S&, V v) { c.landscape_path = std::string(v); },
            [](const C& c, const S&) { return c.landscape_path; });
        add("landscape.negate", [](C& c, S&, V v) { c.negate = as_bool("landscape.negate", v); },
            [](const C& c, const S&) { return bool_text(c.negate); });
        add("landscape.wild_type", [](C& c, S&, V v) { c.wild_type = std::string(v); },
            [](const C& c, const S&) { return c.wild_type; });
        add("landscape.alphabet", [](C& c, S&, V v) { c.alphabet = std::string(v); },
            [](const C& c, const S&) { return c.alphabet; });
        add("nk.n", [](C& c, S&, V v) { c.nk_n = as_size("nk.n", v); },
            [](const C& c, const S&) { return std::to_string(c.nk_n); });
        add("nk.k", [](C& c, S&, V v) { c.nk_k = as_size("nk.k", v); },
            [](const C& c, const S&) { return std::to_string(c.nk_k); });
        add("nk.alphabet_size", [](C& c, S&, V v) { c.nk_alphabet_size = as_size("nk.alphabet_size", v); },
            [](const C& c, const S&) { return std::to_string(c.nk_alphabet_size); });
        add("nk.seed", [](C& c, S&, V v) { c.nk_seed = as_u64("nk.seed", v); },
            [](const C& c, const S&) { return std::to_string(c.nk_seed); });

        add("method",
            [](C& c, S&, V v) {
                if (v == "batch_bo") c.method = Method::batch_bo;
                else if (v == "random") c.method = Method::random;
                else if (v == "pex_greedy") c.method = Method::pex_greedy;
                else bad_value("method", v, "batch_bo, random or pex_greedy");
            },
            [](const C& c, const S&) -> std::string {
                switch (c.method) {
                    case Method::batch_bo: return "batch_bo";
                    case Method::random: return "random";
                    case Method::pex_greedy: return "pex_greedy";
                }
                return "";
            });

        add("surrogate.kind",
            [](C&, S& s, V v) {
                if (v == "conv") s.use_recurrent = false;
                else if (v == "recurrent") s.use_recurrent = true;
                else bad_value("surrogate.kind", v, "conv or recurrent");
            },
            [](const C&, const S& s) -> std::string { return s.use_recurrent ? "recurrent" : "conv"; });
        add("surrogate.ensemble_size", [](C& c, S&, V v) { c.ensemble_size = as_size("surrogate.ensemble_size", v); },
            [](const C& c, const S&) { return std::to_string(c.ensemble_size); });
        add("conv.channels",
            [](C&, S& s, V v) {
                s.conv.channels.clear();
                for (auto tok : split(v, ',')) s.conv.channels.push_back(as_size("conv.channels", trim(tok)));
            },
            [](const C&, const S& s) { return list_text(s.conv.channels); });
        add("conv.kernel_size", [](C&, S& s, V v) { s.conv.kernel_size = as_size("conv.kernel_size", v); },
            [](const C&, const S& s) { return std::to_string(s.conv.kernel_size); });
        add("conv.hidden_dense", [](C&, S& s, V v) { s.conv.hidden_dense = as_size("conv.hidden_dense", v); },
            [](const C&, const S& s) { return std::to_string(s.conv.hidden_dense); });
        add("conv.pooling",
            [](C&, S& s, V v) {
                if (v == "flatten") s.conv.pooling = Pooling::flatten;
                else if (v == "mean") s.conv.pooling = Pooling::mean;
                else bad_value("conv.pooling", v, "flatten or mean");
            },
            [](const C&, const S& s) -> std::string { return s.conv.pooling == Pooling::mean ? "mean" : "flatten"; });
        add("recurrent.hidden_size",
            [](C&, S& s, V v) { s.recurrent.hidden_size = as_size("recurrent.hidden_size", v); },
            [](const C&, const S& s) { return std::to_string(s.recurrent.hidden_size); });

        add("train.epochs", [](C& c, S&, V v) { c.train.epochs = as_size("train.epochs", v); },
            [](const C& c, const S&) { return std::to_string(c.train.epochs); });
        add("train.batch_size", [](C& c, S&, V v) { c.train.batch_size = as_size("train.batch_size", v); },
            [](const C& c, const S&) { return std::to_string(c.train.batch_size); });
        add("train.learning_rate", [](C& c, S&, V v) { c.train.learning_rate = as_double("train.learning_rate", v); },
            [](const C& c, const S&) { return format_double(c.train.learning_rate); });
        add("train.bootstrap", [](C& c, S&, V v) { c.train.bootstrap = as_bool("train.bootstrap", v); },
            [](const C& c, const S&) { return bool_text(c.train.bootstrap); });
        add("train.warm_start", [](C& c, S&, V v) { c.train.warm_start = as_bool("train.warm_start", v); },
            [](const C& c, const S&) { return bool_text(c.train.warm_start); });

        add("acquisition.kind",
            [](C& c, S&, V v) {
                if (v == "none") c.acquisition.reset();
                else if (v == "ucb" || v == "ei" || v == "kg") c.acquisition = parse_acquisition_kind(v);
                else bad_value("acquisition.kind", v, "ucb, ei, kg or none");
            },
            [](const C& c, const S&) {
                return c.acquisition ? std::string(to_string(*c.acquisition)) : std::string("none");
            });
        add("acquisition.beta", [](C& c, S&, V v) { c.beta = as_double("acquisition.beta", v); },
            [](const C& c, const S&) { return format_double(c.beta); });
        add("kg.n_fantasies", [](C& c, S&, V v) { c.kg.n_fantasies = as_size("kg.n_fantasies", v); },
            [](const C& c, const S&) { return std::to_string(c.kg.n_fantasies); });
        add("kg.inner_pool_size", [](C& c, S&, V v) { c.kg.inner_pool_size = as_size("kg.inner_pool_size", v); },
            [](const C& c, const S&) { return std::to_string(c.kg.inner_pool_size); });
        add("kg.update_steps", [](C& c, S&, V v) { c.kg.update_steps = as_size("kg.update_steps", v); },
            [](const C& c, const S&) { return std::to_string(c.kg.update_steps); });
        add("kg.update_lr", [](C& c, S&, V v) { c.kg.update_lr = as_double("kg.update_lr", v); },
            [](const C& c, const S&) { return format_double(c.kg.update_lr); });
        add("kg.inner_eval_size", [](C& c, S&, V v) { c.inner_eval_size = as_size("kg.inner_eval_size", v); },
            [](const C& c, const S&) { return std::to_string(c.inner_eval_size); });

        add("campaign.rounds", [](C& c, S&, V v) { c.rounds = as_size("campaign.rounds", v); },
            [](const C& c, const S&) { return std::to_string(c.rounds); });
        add("campaign.batch_size", [](C& c, S&, V v) { c.batch_size = as_size("campaign.batch_size", v); },
            [](const C& c, const S&) { return std::to_string(c.batch_size); });
        add("campaign.pool_size", [](C& c, S&, V v) { c.proximal.pool_size = as_size("campaign.pool_size", v); },
            [](const C& c, const S&) { return std::to_string(c.proximal.pool_size); });
        add("campaign.radius", [](C& c, S&, V v) { c.proximal.radius = as_size("campaign.radius", v); },
            [](const C& c, const S&) { return std::to_string(c.proximal.radius); });

        add("lambda.policy",
            [](C& c, S&, V v) {
                if (v == "iqr") c.proximal.policy = LambdaPolicy::iqr;
                else if (v == "fixed") c.proximal.policy = LambdaPolicy::fixed;
                else bad_value("lambda.policy", v, "iqr or fixed");
            },
            [](const C& c, const S&) -> std::string {
                return c.proximal.policy == LambdaPolicy::iqr ? "iqr" : "fixed";
            });
        add("lambda.value", [](C& c, S&, V v) { c.proximal.lambda = as_double("lambda.value", v); },
            [](const C& c, const S&) { return format_double(c.proximal.lambda); });
        add("lambda.iqr_scale", [](C& c, S&, V v) { c.proximal.iqr_scale = as_double("lambda.iqr_scale", v); },
            [](const C& c, const S&) { return format_double(c.proximal.iqr_scale); });

        add("run.seeds",
            [](C& c, S&, V v) {
                c.seeds.clear();
                for (auto tok : split(v, ',')) c.seeds.push_back(as_u64("run.seeds", trim(tok)));
            },
            [](const C& c, const S&) { return list_text(c.seeds); });
        add("output.dir", [](C& c, S&, V v) { c.output_dir = std::string(v); },
            [](const C& c, const S&) { return c.output_dir.string(); });
        return k;
    }();
    return table;
}

void apply_knobs(CampaignConfig& c, const SurrogateKnobs& k) {
    if (k.use_recurrent) c.surrogate = k.recurrent;
    else c.surrogate = k.conv;
}

}  // namespace

CampaignConfig parse_config(std::string_view text) {
    CampaignConfig cfg;
    SurrogateKnobs knobs = knobs_of(cfg);
    std::set<std::string, std::less<>> seen;
    const auto lines = split(text, '\n');
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto line = trim(lines[i]);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(i + 1) + ": expected key=value");
        const auto key = trim(line.substr(0, eq));
        const auto value = trim(line.substr(eq + 1));
        const auto& table = keys();
        const auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == key; });
        if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
        if (!seen.insert(std::string(key)).second) throw ConfigError("duplicate config key '" + std::string(key) + "'");
        it->set(cfg, knobs, value);
    }
    apply_knobs(cfg, knobs);
    return cfg;
}

CampaignConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    return parse_config(read_file(path));
}

std::string config_to_text(const CampaignConfig& cfg) {
    const auto knobs = knobs_of(cfg);
    std::string out;
    for (const auto& k : keys()) out += k.name + "=" + k.get(cfg, knobs) + "\n";
    return out;
}

std::uint64_t config_hash(const CampaignConfig& cfg) {
    const auto knobs = knobs_of(cfg);
    std::string out;
    for (const auto& k : keys())
        if (k.name != "run.seeds" && k.name != "output.dir") out += k.name + "=" + k.get(cfg, knobs) + "\n";
    return fnv1a(out);
}

void validate(const CampaignConfig& cfg) {
    auto need = [](bool ok, const std::string& key, const std::string& what) {
        if (!ok) throw ConfigError(key + ": " + what);
    };
    need(cfg.rounds >= 1, "campaign.rounds", "must be >= 1");
    need(cfg.batch_size >= 1, "campaign.batch_size", "must be >= 1");
    need(cfg.proximal.pool_size >= 1, "campaign.pool_size", "must be >= 1");
    need(cfg.proximal.radius >= 1, "campaign.radius", "must be >= 1");
    need(cfg.proximal.lambda >= 0.0, "lambda.value", "must be >= 0");
    need(cfg.proximal.iqr_scale >= 0.0, "lambda.iqr_scale", "must be >= 0");
    need(!cfg.seeds.empty(), "run.seeds", "must list at least one seed");
    need(std::set<std::uint64_t>(cfg.seeds.begin(), cfg.seeds.end()).size() == cfg.seeds.size(), "run.seeds",
         "seeds must be distinct");
    need(cfg.ensemble_size >= 1, "surrogate.ensemble_size", "must be >= 1");
    need(cfg.train.epochs >= 1, "train.epochs", "must be >= 1");
    need(cfg.train.batch_size >= 1, "train.batch_size", "must be >= 1");
    need(cfg.train.learning_rate > 0.0, "train.learning_rate", "must be > 0");
    need(cfg.beta >= 0.0, "acquisition.beta", "must be >= 0");
    need(cfg.kg.n_fantasies >= 1, "kg.n_fantasies", "must be >= 1");
    need(cfg.kg.inner_pool_size >= 1, "kg.inner_pool_size", "must be >= 1");
    need(cfg.kg.update_steps >= 1, "kg.update_steps", "must be >= 1");
    need(cfg.kg.update_lr > 0.0, "kg.update_lr", "must be > 0");
    need(cfg.inner_eval_size >= 1, "kg.inner_eval_size", "must be >= 1");
    need(cfg.method != Method::batch_bo || cfg.acquisition.has_value(), "acquisition.kind",
         "batch_bo needs ucb, ei or kg");
    if (const auto* c = std::get_if<ConvRegressorConfig>(&cfg.surrogate)) {
        need(!c->channels.empty(), "conv.channels", "must list at least one width");
        for (auto w : c->channels) need(w >= 1, "conv.channels", "widths must be >= 1");
        need(c->kernel_size % 2 == 1, "conv.kernel_size", "must be odd");
        need(c->hidden_dense >= 1, "conv.hidden_dense", "must be >= 1");
    } else {
        need(std::get<RecurrentRegressorConfig>(cfg.surrogate).hidden_size >= 1, "recurrent.hidden_size",
             "must be >= 1");
    }
    if (cfg.landscape == LandscapeKind::nk) {
        need(cfg.nk_n >= 1, "nk.n", "must be >= 1");
        need(cfg.nk_k < cfg.nk_n, "nk.k", "must be < nk.n");
        need(cfg.nk_alphabet_size >= 2 && cfg.nk_alphabet_size <= 20, "nk.alphabet_size", "must be in [2, 20]");
    } else {
        need(!cfg.landscape_path.empty(), "landscape.path", "required for this landscape kind");
    }
}

std::unique_ptr<FitnessLandscape> make_landscape(const CampaignConfig& cfg) {
    switch (cfg.landscape) {
        case LandscapeKind::nk:
            return std::make_unique<NKLandscape>(
                NKLandscape::generate(cfg.nk_n, cfg.nk_k, Alphabet::synthetic(cfg.nk_alphabet_size), cfg.nk_seed));
        case LandscapeKind::nk_file:
            if (!std::filesystem::exists(cfg.landscape_path))
                throw Error("landscape file not found: " + cfg.landscape_path);
            return std::make_unique<NKLandscape>(NKLandscape::from_spec(read_file(cfg.landscape_path)));
        case LandscapeKind::lookup: {
            LookupOptions opts;
            opts.alphabet = Alphabet(cfg.alphabet);
            opts.negate = cfg.negate;
            opts.wild_type = cfg.wild_type;
            return std::make_unique<LookupLandscape>(load_lookup(cfg.landscape_path, opts));
        }
    }
    throw ConfigError("landscape.kind: unsupported");
}

Sequence campaign_wild_type(const CampaignConfig& cfg, const FitnessLandscape& landscape) {
    if (cfg.wild_type.empty()) return landscape.default_wild_type();
    Sequence s;
    try {
        s = Sequence::parse(cfg.wild_type, landscape.alphabet());
    } catch (const InputError& e) {
        throw ConfigError(std::string("landscape.wild_type: ") + e.what());
    }
    if (!landscape.contains(s)) throw ConfigError("landscape.wild_type: not in the landscape's domain");
    return s;
}

// ---------------------------------------------------------------------------
// Runs

RunResult run_single(const CampaignConfig& cfg, const FitnessLandscape& landscape, std::uint64_t seed) {
    validate(cfg);
    RunResult result;
    result.seed = seed;
    Rng rng(mix_seed(seed, 0x5EED));
    ExplorerState state(campaign_wild_type(cfg, landscape));
    BudgetedOracle oracle(landscape, cfg.rounds, cfg.batch_size);

    std::unique_ptr<Ensemble> ensemble;
    if (cfg.method != Method::random)
        ensemble = std::make_unique<Ensemble>(cfg.surrogate, landscape.length(), landscape.alphabet(),
                                              Ensemble::derive_seeds(mix_seed(seed, 0xE5E), cfg.ensemble_size));
    AcquisitionParams acq;
    if (cfg.acquisition) acq.kind = *cfg.acquisition;
    acq.beta = cfg.beta;
    acq.kg = cfg.kg;
    acq.inner_eval_size = cfg.inner_eval_size;

    while (oracle.rounds_remaining() > 0) {
        try {
            switch (cfg.method) {
                case Method::batch_bo:
                    result.rounds.push_back(run_round(state, *ensemble, oracle, acq, cfg.proximal, cfg.train, rng));
                    break;
                case Method::random:
                    result.rounds.push_back(random_search_round(state, oracle, cfg.batch_size, rng));
                    break;
                case Method::pex_greedy:
                    result.rounds.push_back(
                        pex_greedy_round(state, *ensemble, oracle, cfg.batch_size, cfg.proximal, cfg.train, rng));
                    break;
            }
        } catch (const RoundError&) {
            result.exhausted = true;
            break;
        }
    }
    return result;
}

std::string run_csv(const RunResult& run, const Alphabet& alphabet) {
    std::string out = "round,query_index,sequence,fitness,cumulative_max\n";
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& rec : run.rounds)
        for (std::size_t i = 0; i < rec.sequences.size(); ++i) {
            best = std::max(best, rec.scores[i]);
            out += std::to_string(rec.round) + "," + std::to_string(i) + "," + rec.sequences[i].to_string(alphabet) +
                   "," + format_double(rec.scores[i]) + "," + format_double(best) +
                   "\n";
        }
    return out;
}

std::string rounds_csv(const RunResult& run) {
    std::string out = "round,lambda,pool_size,short_pool,cumulative_max,wall_time\n";
    for (const auto& rec : run.rounds) {
        char wall[32];
        std::snprintf(wall, sizeof wall, "%.6f", rec.wall_time);
        out += std::to_string(rec.round) + "," + format_double(rec.lambda) + "," + std::to_string(rec.pool_size) +
               "," + (rec.short_pool ? "1" : "0") + "," + format_double(rec.cumulative_max) + "," + wall + "\n";
    }
    return out;
}

std::filesystem::path run_csv_path(const std::filesystem::path& dir, std::uint64_t seed) {
    return dir / ("run_seed" + std::to_string(seed) + ".csv");
}

namespace {

struct Optimum {
    Sequence sequence;
    double value = 0.0;
};

std::optional<Optimum> enumerated_optimum(const FitnessLandscape& landscape) {
    const auto domain = landscape.enumerate(kEnumerationLimit);
    if (!domain || domain->empty()) return std::nullopt;
    Optimum best{(*domain)[0], landscape.evaluate((*domain)[0])};
    for (const auto& s : *domain) {
        const double y = landscape.evaluate(s);
        if (y > best.value) best = {s, y};
    }
    return best;
}

}  // namespace

std::vector<RunResult> run_campaign(const CampaignConfig& cfg, std::ostream* log) {
    validate(cfg);
    const auto landscape = make_landscape(cfg);
    campaign_wild_type(cfg, *landscape);
    std::filesystem::create_directories(cfg.output_dir);

    std::vector<RunResult> runs(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), [&](std::size_t i) {
        runs[i] = run_single(cfg, *landscape, cfg.seeds[i]);
        write_file(run_csv_path(cfg.output_dir, cfg.seeds[i]), run_csv(runs[i], landscape->alphabet()));
        auto meta = run_csv_path(cfg.output_dir, cfg.seeds[i]);
        meta.replace_extension(".rounds.csv");
        write_file(meta, rounds_csv(runs[i]));
    });

    std::string manifest = config_to_text(cfg);
    manifest += "artifact.version=" + std::string(kArtifactVersion) + "\n";
    manifest += "config.hash=" + hex64(config_hash(cfg)) + "\n";
    if (cfg.method == Method::batch_bo && cfg.acquisition == AcquisitionKind::kg)
        manifest += "kg.selection=greedy_sequential\n";
    manifest += "landscape.length=" + std::to_string(landscape->length()) + "\n";
    manifest += "landscape.wild_type_used=" + campaign_wild_type(cfg, *landscape).to_string(landscape->alphabet()) + "\n";
    if (const auto opt = enumerated_optimum(*landscape)) {
        manifest += "landscape.optimum=" + format_double(opt->value) + "\n";
        manifest += "landscape.optimum_sequence=" + opt->sequence.to_string(landscape->alphabet()) + "\n";
    }
    for (const auto& r : runs)
        if (r.exhausted) manifest += "run.exhausted=" + std::to_string(r.seed) + "\n";
    write_file(cfg.output_dir / "manifest.txt", manifest);

    if (log)
        for (const auto& r : runs)
            *log << "seed " << r.seed << ": " << r.rounds.size() << " rounds, cumulative max "
                 << format_double(r.rounds.empty() ? 0.0 : r.rounds.back().cumulative_max)
                 << (r.exhausted ? " (domain exhausted)" : "") << "\n";
    return runs;
}

// ---------------------------------------------------------------------------
// Aggregation

AggregateCurve aggregate_curves(const std::vector<std::vector<double>>& curves) {
    if (curves.empty()) throw AggregationError("no runs to aggregate");
    const std::size_t t = curves.front().size();
    for (const auto& c : curves)
        if (c.size() != t) throw AggregationError("runs have different round counts");
    AggregateCurve out;
    out.seeds = curves.size();
    const double n = static_cast<double>(curves.size());
    for (std::size_t r = 0; r < t; ++r) {
        double sum = 0.0, lo = curves[0][r], hi = curves[0][r];
        for (const auto& c : curves) {
            sum += c[r];
            lo = std::min(lo, c[r]);
            hi = std::max(hi, c[r]);
        }
        const double mean = sum / n;
        double var = 0.0;
        for (const auto& c : curves) var += (c[r] - mean) * (c[r] - mean);
        out.mean.push_back(std::clamp(mean, lo, hi));
        out.std.push_back(std::sqrt(var / n));
        out.min.push_back(lo);
        out.max.push_back(hi);
    }
    return out;
}

std::vector<double> read_run_curve(std::string_view csv_text) {
    const auto lines = split(csv_text, '\n');
    if (lines.empty() || trim(lines[0]) != "round,query_index,sequence,fitness,cumulative_max")
        throw ParseError("not a run CSV (bad header)", 1);
    std::vector<double> curve;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto line = trim(lines[i]);
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != 5) throw ParseError("expected 5 columns", i + 1);
        const auto round = parse_u64(f[0]);
        const auto cm = parse_double(f[4]);
        if (!round || !cm) throw ParseError("bad round or cumulative_max", i + 1);
        if (*round == curve.size()) curve.push_back(*cm);
        else if (*round + 1 == curve.size()) curve.back() = *cm;
        else throw ParseError("rounds out of order", i + 1);
    }
    return curve;
}

namespace {

std::map<std::string, std::string, std::less<>> read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / "manifest.txt";
    if (!std::filesystem::exists(path)) throw AggregationError("missing manifest: " + path.string());
    std::map<std::string, std::string, std::less<>> kv;
    const std::string text = read_file(path);
    for (auto line : split(text, '\n')) {
        line = trim(line);
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) continue;
        kv[std::string(line.substr(0, eq))] = std::string(line.substr(eq + 1));
    }
    return kv;
}

}  // namespace

AggregateSummary aggregate_dirs(const std::vector<std::filesystem::path>& dirs, const std::filesystem::path& out) {
    if (dirs.empty()) throw AggregationError("no run directories given");
    AggregateSummary summary;
    std::optional<std::string> hash;
    std::vector<std::vector<double>> curves;
    std::vector<std::string> labels;
    for (const auto& dir : dirs) {
        const auto manifest = read_manifest(dir);
        const auto h = manifest.find("config.hash");
        if (h == manifest.end()) throw AggregationError("manifest without config.hash in " + dir.string());
        if (hash && *hash != h->second)
            throw AggregationError("config hash mismatch: " + *hash + " vs " + h->second + " in " + dir.string());
        hash = h->second;
        if (const auto o = manifest.find("landscape.optimum"); o != manifest.end())
            summary.optimum = parse_double(o->second);
        std::vector<std::filesystem::path> files;
        for (const auto& e : std::filesystem::directory_iterator(dir)) {
            const auto name = e.path().filename().string();
            if (name.rfind("run_seed", 0) == 0 && name.size() > 4 && name.ends_with(".csv") &&
                !name.ends_with(".rounds.csv"))
                files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            try {
                curves.push_back(read_run_curve(read_file(f)));
            } catch (const ParseError& e) {
                throw AggregationError(f.string() + ": " + e.what());
            }
            labels.push_back(f.string());
        }
    }
    summary.config_hash = std::stoull(*hash, nullptr, 16);
    summary.curve = aggregate_curves(curves);
    summary.max_fitness = *std::max_element(summary.curve.max.begin(), summary.curve.max.end());
    if (summary.optimum) {
        std::size_t hits = 0;
        for (const auto& c : curves)
            if (!c.empty() && c.back() >= *summary.optimum) ++hits;
        summary.success_rate = static_cast<double>(hits) / static_cast<double>(curves.size());
    }

    std::filesystem::create_directories(out);
    std::string csv = "round,mean,std,min,max,seeds\n";
    const auto& cv = summary.curve;
    for (std::size_t r = 0; r < cv.mean.size(); ++r)
        csv += std::to_string(r) + "," + format_double(cv.mean[r]) + "," + format_double(cv.std[r]) + "," +
               format_double(cv.min[r]) + "," + format_double(cv.max[r]) + "," + std::to_string(cv.seeds) + "\n";
    write_file(out / "aggregate.csv", csv);

    std::string text = "config.hash=" + *hash + "\n";
    text += "seeds=" + std::to_string(cv.seeds) + "\n";
    text += "rounds=" + std::to_string(cv.mean.size()) + "\n";
    text += "max_fitness=" + format_double(summary.max_fitness) + "\n";
    if (!cv.mean.empty()) {
        text += "final_mean=" + format_double(cv.mean.back()) + "\n";
        text += "final_std=" + format_double(cv.std.back()) + "\n";
    }
    if (summary.optimum) {
        text += "optimum=" + format_double(*summary.optimum) + "\n";
        text += "success_rate=" + format_double(*summary.success_rate) + "\n";
    }
    write_file(out / "summary.txt", text);

    const std::string plot =
        "# gnuplot -p plot.gp\n"
        "set datafile separator ','\n"
        "set key top left\n"
        "set xlabel 'round'\n"
        "set ylabel 'cumulative max fitness'\n"
        "set style fill transparent solid 0.25 noborder\n"
        "plot 'aggregate.csv' every ::1 using 1:($2-$3):($2+$3) with filledcurves title 'mean +/- std', \\\n"
        "     'aggregate.csv' every ::1 using 1:2 with linespoints lw 2 title 'mean'\n";
    write_file(out / "plot.gp", plot);
    return summary;
}

// ---------------------------------------------------------------------------
// NK generation

GenNkResult gen_nk(const GenNkOptions& opts) {
    if (opts.n < 1) throw InputError("gen-nk: n must be >= 1");
    if (opts.k >= opts.n) throw InputError("gen-nk: k must satisfy 0 <= k <= n-1");
    const auto nk = NKLandscape::generate(opts.n, opts.k, Alphabet::synthetic(opts.alphabet_size), opts.seed);
    const auto states = nk.state_count();
    const bool small = states && *states <= kEnumerationLimit;
    if (opts.enumerate && !small)
        throw SizeError("gen-nk: " + std::to_string(opts.alphabet_size) + "^" + std::to_string(opts.n) +
                        " states exceeds the enumeration limit of 2^20");
    std::filesystem::create_directories(opts.out);
    GenNkResult result;
    result.spec_path = opts.out / "nk.spec";
    write_file(result.spec_path, nk.to_spec());
    if (!small) return result;

    const auto& alphabet = nk.alphabet();
    const auto all = enumerate_all(opts.n, alphabet.size());
    std::vector<double> values(all.size());
    std::size_t best = 0;
    for (std::size_t i = 0; i < all.size(); ++i) {
        values[i] = nk.evaluate(all[i]);
        if (values[i] > values[best]) best = i;
    }
    std::string tsv;
    tsv.reserve(all.size() * (opts.n + 24));
    tsv += "# nk n=" + std::to_string(opts.n) + " k=" + std::to_string(opts.k) + " alphabet=" + alphabet.symbols() +
           " seed=" + std::to_string(opts.seed) + "\n";
    tsv += "# optimum " + all[best].to_string(alphabet) + " " + format_double(values[best]) + "\n";
    for (std::size_t i = 0; i < all.size(); ++i) tsv += all[i].to_string(alphabet) + "\t" + format_double(values[i]) + "\n";
    result.table_path = opts.out / "nk.tsv";
    write_file(*result.table_path, tsv);
    result.optimum = all[best];
    result.optimum_value = values[best];
    return result;
}

// ---------------------------------------------------------------------------
// Self check

bool self_check(std::ostream& out) {
    bool all_ok = true;
    auto report = [&](bool ok, const std::string& name, const std::string& detail) {
        out << (ok ? "PASS " : "FAIL ") << name << " " << detail << "\n";
        all_ok = all_ok && ok;
    };
    auto sci = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.3e", v);
        return std::string(buf);
    };

    ConvRegressorConfig conv;
    conv.channels = {4, 3};
    conv.kernel_size = 3;
    conv.hidden_dense = 5;
    const auto g1 = gradient_check(conv, 1e-4);
    report(g1.passed, "gradient.conv", "max_rel_error=" + sci(g1.max_rel_error));
    const auto g2 = gradient_check(RecurrentRegressorConfig{5}, 1e-4);
    report(g2.passed, "gradient.recurrent", "max_rel_error=" + sci(g2.max_rel_error));

    // EI against a Monte Carlo estimate of E[max(X - best, 0)].
    Rng rng(20240601);
    bool ei_ok = true;
    double worst_z = 0.0;
    const std::size_t samples = 200000;
    for (int t = 0; t < 10; ++t) {
        const double mean = rng.uniform(-2.0, 2.0);
        const double sd = rng.uniform(0.1, 2.0);
        const double best = rng.uniform(-2.0, 2.0);
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < samples; ++i) {
            const double v = std::max(mean + sd * rng.normal() - best, 0.0);
            s1 += v;
            s2 += v * v;
        }
        const double m = s1 / samples;
        const double se = std::sqrt(std::max(s2 / samples - m * m, 0.0) / samples);
        const double z = std::abs(ei({mean, sd}, best) - m) / std::max(se, 1e-12);
        worst_z = std::max(worst_z, z);
        ei_ok = ei_ok && z <= 3.0;
    }
    report(ei_ok, "ei.monte_carlo", "worst_z=" + sci(worst_z));

    // Frontier against pairwise domination.
    const Alphabet alphabet = Alphabet::synthetic(4);
    const Sequence wt(std::vector<Residue>(8, 0));
    std::vector<FrontierPoint> pts;
    for (int i = 0; i < 200; ++i) {
        auto s = random_mutant(wt, 8, alphabet, rng);
        const auto d = hamming_distance(s, wt);
        // Fitness loosely tracks distance so the frontier has several steps.
        pts.push_back({s, d, std::floor(static_cast<double>(d) + rng.uniform(0.0, 6.0))});
    }
    const auto front = update_frontier({}, pts, wt);
    std::set<std::pair<std::size_t, double>> expected, got;
    for (const auto& p : pts) {
        bool dominated = false;
        for (const auto& q : pts)
            if (q.distance <= p.distance && q.fitness >= p.fitness &&
                (q.distance < p.distance || q.fitness > p.fitness))
                dominated = true;
        if (!dominated) expected.insert({p.distance, p.fitness});
    }
    for (const auto& f : front) got.insert({f.distance, f.fitness});
    report(got == expected && front.size() == expected.size() && expected.size() > 1, "frontier.brute_force",
           "size=" + std::to_string(front.size()) + " expected=" + std::to_string(expected.size()));
    return all_ok;
}

}  // namespace proxbo
