#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "mixft/errors.hpp"

using namespace mixft;

int main(int argc, char** argv) {
    CLI::App app{"MixFT: sub-domain mixture fine-tuning for a compact patch forecaster"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    int threads = 0;
    std::string out;
    cli::CommandOptions opts;
    std::string input;
    std::string scores;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run config file (key = value lines)");
        sub->add_option("--set", overrides, "override one key, e.g. --set mixture.K=3 (repeatable)");
        sub->add_option("--seed", seed, "run with this seed instead of run.seeds");
        sub->add_option("--threads", threads, "worker thread cap (default run.threads)");
        sub->add_option("--out", out, "output directory");
    };

    struct Entry {
        const char* name;
        const char* help;
        std::function<void(const cli::RunConfig&, const cli::CommandOptions&)> run;
    };
    const std::vector<Entry> entries{
        {"synth", "generate the two-regime benchmark corpora", cli::cmd_synth},
        {"pretrain", "pretrain the base model on the pretraining corpus", cli::cmd_pretrain},
        {"fit-gmm", "embed fine-tuning windows and fit the router", cli::cmd_fit_gmm},
        {"finetune", "fit the router and train one adapter per sub-domain", cli::cmd_finetune},
        {"forecast", "forecast the last context of a series CSV", cli::cmd_forecast},
        {"evaluate", "MASE, ranks, entropy and timelines for an artifact (or rank a score table)", cli::cmd_evaluate},
        {"select-k", "choose K by average validation rank", cli::cmd_select_k},
        {"ablate", "baselines, routing modes, partitioners and a K sweep over all seeds", cli::cmd_ablate},
        {"timeline", "membership timelines for every series", cli::cmd_timeline},
    };
    std::vector<CLI::App*> subs;
    for (const auto& e : entries) {
        auto* sub = app.add_subcommand(e.name, e.help);
        common(sub);
        if (std::string(e.name) == "forecast" || std::string(e.name) == "timeline") {
            sub->add_option("--input", input, "series CSV");
            sub->add_option("--channel", opts.channel, "channel index (forecast)");
        }
        if (std::string(e.name) == "forecast") {
            sub->add_flag("--all-modes", opts.all_modes, "write one forecast per routing mode");
        }
        if (std::string(e.name) == "evaluate" || std::string(e.name) == "select-k") {
            sub->add_option("--scores", scores, "score table CSV (dataset column, then one column per method or K)");
        }
        subs.push_back(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : static_cast<int>(ErrorKind::Config);
    }

    try {
        auto cfg = config_path.empty() ? cli::parse_config("", overrides) : cli::load_config(config_path, overrides);
        for (std::size_t i = 0; i < subs.size(); ++i) {
            if (!subs[i]->parsed()) {
                continue;
            }
            if (subs[i]->count("--seed") > 0) {
                opts.seed = seed;
            }
            if (!out.empty()) {
                opts.out = out;
            }
            if (!input.empty()) {
                opts.input = input;
            }
            if (!scores.empty()) {
                opts.scores = scores;
            }
            set_thread_count(threads > 0 ? threads : cfg.threads);
            entries[i].run(cfg, opts);
        }
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return static_cast<int>(ErrorKind::Data);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
