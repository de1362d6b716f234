// proxbo command line: run campaigns, aggregate results, generate NK
// landscapes and run the built-in self tests.

#include "proxbo/errors.hpp"
#include "proxbo/harness.hpp"
#include "proxbo/text.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Proximal batch Bayesian optimization over sequence landscapes"};
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run a campaign from a config file");
    std::string config_path;
    std::vector<std::uint64_t> seeds;
    std::string wild_type;
    std::string out_dir;
    run->add_option("config", config_path, "Config file (key=value lines)")->required();
    run->add_option("--seed", seeds, "Run seed(s); replaces run.seeds");
    run->add_option("--wild-type", wild_type, "Starting sequence; replaces landscape.wild_type");
    run->add_option("--out", out_dir, "Output directory; replaces output.dir");

    auto* agg = app.add_subcommand("aggregate", "Aggregate run CSVs from one or more run directories");
    std::vector<std::string> agg_dirs;
    std::string agg_out;
    agg->add_option("dirs", agg_dirs, "Run directories")->required();
    agg->add_option("--out", agg_out, "Output directory (default: the first run directory)");

    auto* gen = app.add_subcommand("gen-nk", "Generate an NK landscape spec and lookup table");
    proxbo::GenNkOptions nk;
    std::string nk_out = ".";
    gen->add_option("--n", nk.n, "Sequence length")->required();
    gen->add_option("--k", nk.k, "Epistatic neighbours per site")->required();
    gen->add_option("--alphabet-size", nk.alphabet_size, "Alphabet size (2..20)")->capture_default_str();
    gen->add_option("--seed", nk.seed, "Generator seed")->capture_default_str();
    gen->add_option("--out", nk_out, "Output directory")->capture_default_str();
    gen->add_flag("--enumerate", nk.enumerate, "Fail unless the lookup table can be written");

    auto* check = app.add_subcommand("check", "Run the built-in self tests");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*run) {
            auto cfg = proxbo::load_config(config_path);
            if (!seeds.empty()) cfg.seeds = seeds;
            if (!wild_type.empty()) cfg.wild_type = wild_type;
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            proxbo::run_campaign(cfg, &std::cout);
            std::cout << "wrote " << cfg.output_dir.string() << "\n";
        } else if (*agg) {
            std::vector<std::filesystem::path> dirs(agg_dirs.begin(), agg_dirs.end());
            const auto out = agg_out.empty() ? dirs.front() : std::filesystem::path(agg_out);
            const auto s = proxbo::aggregate_dirs(dirs, out);
            std::cout << "seeds=" << s.curve.seeds << " max_fitness=" << proxbo::format_double(s.max_fitness);
            if (s.success_rate) std::cout << " success_rate=" << proxbo::format_double(*s.success_rate);
            std::cout << "\n";
        } else if (*gen) {
            nk.out = nk_out;
            const auto r = proxbo::gen_nk(nk);
            std::cout << "wrote " << r.spec_path.string() << "\n";
            if (r.table_path)
                std::cout << "wrote " << r.table_path->string() << " (optimum " << proxbo::format_double(r.optimum_value)
                          << ")\n";
        } else if (*check) {
            return proxbo::self_check(std::cout) ? 0 : 1;
        }
    } catch (const proxbo::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
