#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "commands.hpp"
#include "mixft/errors.hpp"
#include "run_config.hpp"
#include "test_util.hpp"

using namespace mixft;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(const std::string& args) {
    const std::string cmd = std::string(MIXFT_EXE) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("config round-trip is a fixed point for both profiles") {
    for (const char* profile : {"desk", "paper-parity"}) {
        const auto cfg = cli::profile_defaults(profile);
        const auto text = cli::serialize(cfg);
        const auto again = cli::parse_config(text);
        CHECK(again == cfg);
        CHECK(cli::serialize(again) == text);
    }
    auto cfg = cli::parse_config("profile = desk\nmixture.K = 3\n", {"optim.lr=0.25", "run.seeds=4,5"});
    cfg.synth.pretrain_periods = {3.5, 7.25};
    const auto again = cli::parse_config(cli::serialize(cfg));
    CHECK(again == cfg);
    CHECK(again.K == 3);
    CHECK(again.optim.lr == 0.25);
    CHECK(again.seeds == std::vector<std::uint64_t>{4, 5});
}

TEST_CASE("profiles and overrides") {
    const auto paper = cli::parse_config("profile = paper-parity\n");
    CHECK(paper.window.context == 520);
    CHECK(paper.window.horizon == 30);
    CHECK(paper.adapter.rank == 2);
    CHECK(paper.adapter.alpha == 16.0);
    CHECK(paper.adapter.dropout == 0.1);
    CHECK(paper.optim.lr == 5e-5);
    CHECK(paper.optim.batch == 256);

    const auto desk = cli::parse_config("");
    CHECK(desk.window.context == 64);
    CHECK(desk.window.horizon == 8);
    CHECK(desk.model.hidden == 16);

    // the profile is applied first, whatever line it sits on; overrides come last
    const auto cfg = cli::parse_config("mixture.K = 5\nprofile = paper-parity\n", {"mixture.K=4"});
    CHECK(cfg.window.context == 520);
    CHECK(cfg.K == 4);
    CHECK(cli::parse_config("", {"profile=paper-parity"}).window.context == 520);
}

TEST_CASE("bad keys and values are config errors") {
    CHECK_THROWS_AS(cli::parse_config("mixture.KK = 2\n"), ConfigError);
    CHECK_THROWS_AS(cli::parse_config("", {"nope=1"}), ConfigError);
    CHECK_THROWS_AS(cli::parse_config("mixture.K = two\n"), ConfigError);
    CHECK_THROWS_AS(cli::parse_config("mixture.partitioner = spectral\n"), ConfigError);
    CHECK_THROWS_AS(cli::parse_config("profile = laptop\n"), ConfigError);
    CHECK_THROWS_AS(cli::parse_config("", {"mixture.K"}), ConfigError);
    try {
        cli::parse_config("routing.mdoe = hard\n");
        FAIL("expected an error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("routing.mode") != std::string::npos);
    }
    for (const auto& key : cli::valid_keys()) {
        const auto cfg = cli::profile_defaults("desk");
        CHECK_NOTHROW(cli::get_value(cfg, key));
    }
}

TEST_CASE("evaluate on the published score tables writes the published ranks") {
    test::TempDir tmp("cli_eval");
    const auto cfg = cli::profile_defaults("desk");
    cli::CommandOptions opts;
    opts.scores = test::fixture("table1_chronos_bolt.csv").string();
    opts.out = (tmp.path / "chronos").string();
    cli::cmd_evaluate(cfg, opts);
    const auto ranks = test::read_table(tmp.path / "chronos" / "ranks.csv");
    REQUIRE(ranks.rows.back() == "average_rank");
    const std::vector<double> published{2.9, 3.0, 6.3, 5.6, 2.8, 5.3, 2.0};
    for (int m = 0; m < 7; ++m) {
        CHECK(std::abs(ranks.values(10, m) - published[m]) <= 0.05 + 1e-9);
    }
    CHECK(std::filesystem::exists(tmp.path / "chronos" / "run_manifest.json"));

    opts.scores = test::fixture("table5_validation.csv").string();
    opts.out = (tmp.path / "k").string();
    cli::cmd_select_k(cfg, opts);
    CHECK(slurp(tmp.path / "k" / "run_manifest.json").find("\"chosen\": 2") != std::string::npos);
}

TEST_CASE("end-to-end chain through the executable") {
    test::TempDir tmp("cli_chain");
    const auto p = tmp.path.string();
    std::ofstream(tmp.path / "run.cfg") << "profile = desk\n"
                                           "synth.length = 400\n"
                                           "synth.series_per_dataset = 1\n"
                                           "synth.pretrain_series = 4\n"
                                           "pretrain.steps = 50\n"
                                           "optim.steps = 20\n"
                                           "mixture.K = 1\n"
                                           "paths.corpus = "
                                        << p << "/corpus\npaths.model = " << p << "/model\npaths.artifact = " << p
                                        << "/artifact\npaths.report = " << p << "/report\n";
    const std::string cfg = "--config " + p + "/run.cfg --seed 3";
    REQUIRE(run("synth " + cfg) == 0);
    REQUIRE(run("pretrain " + cfg) == 0);
    REQUIRE(run("finetune " + cfg) == 0);
    REQUIRE(run("evaluate " + cfg) == 0);
    for (const char* f : {"mase.csv", "ranks.csv", "entropy.csv", "mase.svg", "README", "run_manifest.json"}) {
        CHECK(std::filesystem::exists(tmp.path / "report" / f));
    }
    const auto first = slurp(tmp.path / "report" / "mase.csv");
    REQUIRE(run("evaluate " + cfg + " --out " + p + "/report2") == 0);
    CHECK(slurp(tmp.path / "report2" / "mase.csv") == first);

    // K = 1: every routing mode returns the same forecast
    const auto input = tmp.path / "corpus" / "evaluation" / "ev_mix" / "ev_mix_s0.csv";
    REQUIRE(std::filesystem::exists(input));
    REQUIRE(run("forecast " + cfg + " --all-modes --input " + input.string() + " --out " + p + "/fc") == 0);
    const auto hard = slurp(tmp.path / "fc" / "forecast_hard.csv");
    CHECK(hard.size() > 10);
    for (const char* m : {"soft", "ensemble", "mu"}) {
        CHECK(slurp(tmp.path / "fc" / ("forecast_" + std::string(m) + ".csv")) == hard);
    }

    // exit codes
    CHECK(run("") == 2);
    CHECK(run("finetune --bogus") == 2);
    CHECK(run("finetune --set mixture.KK=2") == 2);
    CHECK(run("evaluate " + cfg + " --set paths.artifact=" + p + "/missing") == 3);
    CHECK(run("pretrain " + cfg + " --set pretrain.lr=1e12 --out " + p + "/diverged") == 4);
}
