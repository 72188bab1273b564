#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "mixft/evalkit.hpp"
#include "mixft/scenario.hpp"
#include "test_util.hpp"

using namespace mixft;

namespace {

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Router fitted on the standard two-regime corpus with a properly pretrained base.
// Adapters get a token number of steps; only routing matters here.
const pipeline::MixftArtifact& routed() {
    static const pipeline::MixftArtifact art = [] {
        scenario::TwoRegimeConfig sc;
        sc.seed = 0;
        const auto data = scenario::two_regime(sc);
        model::ModelConfig mc;
        const series::WindowSpec ws{mc.context, mc.horizon, 1};
        const auto replay = series::window_corpus(data.pretrain, ws);
        model::OptimizerConfig opt;
        opt.steps = 2000;
        const auto base = model::pretrain(model::init_model(mc), replay, opt, 1).model;
        pipeline::FinetuneConfig cfg;
        cfg.K = 2;
        cfg.window = ws;
        cfg.train.optimizer.steps = 4;
        return pipeline::finetune(data.finetune, base, cfg, replay).artifact;
    }();
    return art;
}

series::TimeSeries alternating(std::uint64_t seed) {
    scenario::TwoRegimeConfig sc;
    series::RegimeSpec spec;
    spec.regimes = {{sc.period_a, 1.0, sc.noise_a, 0.0, 0.0}, {sc.period_b, 1.0, sc.noise_b, 0.0, 0.0}};
    spec.transition = Mat(2, 2);
    spec.transition << 0.0, 1.0, 1.0, 0.0;
    spec.segment_length = 100;
    spec.seasonality = 24;
    return series::synth_corpus(spec, 1, 1000, seed, "alt").series[0];
}

} // namespace

TEST_CASE("timeline covers every context window and switches near each boundary") {
    const auto& art = routed();
    for (std::uint64_t seed = 0; seed < 2; ++seed) {
        const auto ts = alternating(seed);
        const auto tl = eval::membership_timeline(art, ts, 0);
        REQUIRE(tl.time.size() == 1000 - 64 + 1);
        CHECK(tl.time.front() == 63);
        CHECK(tl.time.back() == 999);
        REQUIRE(tl.truth.size() == tl.time.size());
        for (std::size_t i = 0; i < tl.time.size(); ++i) {
            CHECK(tl.truth[i] == ts.regime_labels[static_cast<std::size_t>(tl.time[i])]);
        }
        // a window is pure once its first step is past the boundary, at time b + L - 1
        for (int b = 100; b < 1000; b += 100) {
            bool switched = false;
            for (std::size_t i = 1; i < tl.time.size(); ++i) {
                if (tl.time[i] >= b && tl.time[i] <= b + 64 && tl.component[i] != tl.component[i - 1]) {
                    switched = true;
                }
            }
            INFO("seed " << seed << " boundary " << b);
            CHECK(switched);
        }
        // windows straddling a boundary have no single true regime; score the pure ones
        eval::Timeline pure = tl;
        pure.time.clear();
        pure.component.clear();
        pure.truth.clear();
        for (std::size_t i = 0; i < tl.time.size(); ++i) {
            if (ts.regime_labels[static_cast<std::size_t>(tl.time[i] - 63)] == tl.truth[i]) {
                pure.time.push_back(tl.time[i]);
                pure.component.push_back(tl.component[i]);
                pure.truth.push_back(tl.truth[i]);
            }
        }
        CHECK(pure.time.size() > 300);
        CHECK(eval::timeline_accuracy(pure, 2) > 0.95);
    }
}

TEST_CASE("timeline accuracy uses the best relabelling") {
    eval::Timeline tl;
    tl.time = {0, 1, 2, 3};
    tl.component = {1, 1, 0, 2};
    tl.truth = {0, 0, 1, 2};
    CHECK(eval::timeline_accuracy(tl, 3) == 1.0);
    tl.component = {0, 0, 0, 0};
    CHECK(eval::timeline_accuracy(tl, 3) == 0.5);
}

TEST_CASE("entropy report stays within [0, log2 K]") {
    const auto& art = routed();
    scenario::TwoRegimeConfig sc;
    sc.seed = 1;
    const auto data = scenario::two_regime(sc);
    std::vector<std::vector<series::Window>> by_dataset;
    for (const auto& c : data.evaluation) by_dataset.push_back(series::window_corpus(c, {64, 8, 16}));
    const auto rep = eval::entropy_report(art, by_dataset);
    REQUIRE(rep.mean_bits.size() == 3);
    std::size_t total = 0;
    double weighted = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(rep.mean_bits[i] >= 0.0);
        CHECK(rep.mean_bits[i] <= 1.0);
        CHECK(rep.windows[i] == by_dataset[i].size());
        total += rep.windows[i];
        weighted += rep.mean_bits[i] * rep.windows[i];
    }
    CHECK(rep.overall_bits == doctest::Approx(weighted / total).epsilon(1e-12));
    // pure-regime sets are routed confidently
    CHECK(rep.mean_bits[0] < 0.05);
    CHECK(rep.mean_bits[1] < 0.05);
}

TEST_CASE("csv writers") {
    test::TempDir tmp("evalkit");
    std::vector<eval::EvalRecord> recs{{"ev_a", "base", "0", {1.5, 0.25, 10, 1}},
                                       {"ev,b", "mixft_hard", "all", {0.1, 0.0, 3, 0}}};
    eval::write_mase_csv(recs, tmp.path / "mase.csv");
    CHECK(slurp(tmp.path / "mase.csv") ==
          "dataset,method,seed,mean,stderr,windows,undefined\n"
          "ev_a,base,0,1.5,0.25,10,1\n"
          "\"ev,b\",mixft_hard,all,0.10000000000000001,0,3,0\n");

    Mat scores(2, 2);
    scores << 1.0, 2.0, 3.0, 3.0;
    eval::write_ranks_csv(eval::average_rank({"x", "y"}, {"m1", "m2"}, scores), tmp.path / "ranks.csv");
    CHECK(slurp(tmp.path / "ranks.csv") == "dataset,m1,m2\nx,1,2\ny,1.5,1.5\naverage_rank,1.25,1.75\n");

    eval::EntropyReport rep{{"a", "b"}, {0.5, 0.0}, {2, 6}, 0.125};
    eval::write_entropy_csv(rep, tmp.path / "entropy.csv");
    CHECK(slurp(tmp.path / "entropy.csv") == "dataset,windows,mean_entropy_bits\na,2,0.5\nb,6,0\noverall,8,0.125\n");

    eval::Timeline tl{"s", 0, {5, 6}, {1, 0}, {}};
    eval::write_timeline_csv(tl, tmp.path / "tl.csv");
    CHECK(slurp(tmp.path / "tl.csv") == "time,component\n5,1\n6,0\n");
    CHECK(eval::timeline_file_stem(tl) == "timeline_s_0");

    const auto svg = eval::bar_chart_svg("t <&>", {"a", "b"}, {1.0, 2.0}, {0.1, 0.2});
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("t &lt;&amp;&gt;") != std::string::npos);
    CHECK(eval::line_plot_svg("l", {{"x", {0, 1, 2}, {3, 1, 2}}}).find("</svg>") != std::string::npos);
    eval::write_report_readme(tmp.path);
    CHECK(std::filesystem::exists(tmp.path / "README"));
}
