#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "mixft/errors.hpp"
#include "mixft/pipeline.hpp"
#include "mixft/scenario.hpp"
#include "test_util.hpp"

using namespace mixft;

namespace {

struct Setup {
    scenario::TwoRegime data;
    model::BaseModel base;
    std::vector<series::Window> replay;
    pipeline::FinetuneConfig cfg;
};

const Setup& setup() {
    static const Setup s = [] {
        Setup out;
        scenario::TwoRegimeConfig sc;
        sc.length = 400;
        sc.series_per_dataset = 2;
        sc.pretrain_series = 8;
        sc.seed = 3;
        out.data = scenario::two_regime(sc);
        model::ModelConfig mc;
        mc.seed = 1;
        const series::WindowSpec ws{mc.context, mc.horizon, 4};
        out.replay = series::window_corpus(out.data.pretrain, ws);
        model::OptimizerConfig opt;
        opt.steps = 150;
        opt.batch = 32;
        out.base = model::pretrain(model::init_model(mc), out.replay, opt, 2).model;
        out.cfg.window = ws;
        out.cfg.train.optimizer.steps = 30;
        out.cfg.train.optimizer.batch = 16;
        out.cfg.seed = 5;
        return out;
    }();
    return s;
}

Vec ramp_context(int n, double phase) {
    Vec x(n);
    for (int t = 0; t < n; ++t) x(t) = std::sin(2 * M_PI * t / 8.0 + phase) + 0.01 * t;
    return x;
}

bool same_bits(const Vec& a, const Vec& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

} // namespace

TEST_CASE("K = 1 is the shared adapter and every routing mode agrees") {
    const auto& s = setup();
    auto cfg = s.cfg;
    cfg.K = 1;
    const auto shared = pipeline::finetune(s.data.finetune, s.base, cfg, s.replay);
    REQUIRE(shared.artifact.K() == 1);
    CHECK(shared.artifact.partition_sizes.front() == series::window_corpus(s.data.finetune[0], cfg.window).size() * 4);

    // a single pooled dataset through the per-dataset path trains the same adapter
    series::Corpus pooled{"pooled", {}};
    for (const auto& c : s.data.finetune) pooled.series.insert(pooled.series.end(), c.series.begin(), c.series.end());
    const auto one = pipeline::per_dataset_baseline({pooled}, s.base, cfg, s.replay, true);
    CHECK(lora::bitwise_equal(one.artifact.adapters[0], shared.artifact.adapters[0]));

    for (int trial = 0; trial < 5; ++trial) {
        const Vec x = ramp_context(64, trial);
        const auto hard = pipeline::forecast(shared.artifact, as_span(x), pipeline::RoutingMode::Hard);
        for (auto mode : {pipeline::RoutingMode::Soft, pipeline::RoutingMode::Ensemble, pipeline::RoutingMode::Mu}) {
            CHECK(same_bits(pipeline::forecast(shared.artifact, as_span(x), mode).forecast, hard.forecast));
        }
        CHECK(hard.probabilities(0) == 1.0);
        CHECK(hard.entropy_bits == 0.0);
        CHECK(same_bits(pipeline::forecast(one.artifact, as_span(x), pipeline::RoutingMode::Mu).forecast, hard.forecast));
    }
}

TEST_CASE("two identical datasets with shared seeds average to either adapter exactly") {
    const auto& s = setup();
    auto twin = s.data.finetune[0];
    twin.id = "twin";
    const auto res = pipeline::per_dataset_baseline({s.data.finetune[0], twin}, s.base, s.cfg, s.replay, true);
    REQUIRE(res.artifact.K() == 2);
    const auto& a = res.artifact.adapters;
    CHECK(lora::bitwise_equal(a[0], a[1]));
    CHECK(lora::bitwise_equal(lora::average_loras(a, {0.5, 0.5}), a[0]));

    const auto own = pipeline::per_dataset_baseline({s.data.finetune[0], twin}, s.base, s.cfg, s.replay, false);
    CHECK_FALSE(lora::bitwise_equal(own.artifact.adapters[0], own.artifact.adapters[1]));

    const Vec x = ramp_context(64, 0.3);
    CHECK_THROWS_AS(pipeline::forecast(res.artifact, as_span(x), pipeline::RoutingMode::Hard), ConfigError);
}

TEST_CASE("K = 2 routing: probabilities, evaluation counts, determinism") {
    const auto& s = setup();
    auto cfg = s.cfg;
    cfg.K = 2;
    const auto r1 = pipeline::finetune(s.data.finetune, s.base, cfg, s.replay);
    const auto r2 = pipeline::finetune(s.data.finetune, s.base, cfg, s.replay);
    REQUIRE(r1.artifact.K() == 2);
    CHECK(r1.labels == r2.labels);
    for (int k = 0; k < 2; ++k) CHECK(lora::bitwise_equal(r1.artifact.adapters[k], r2.artifact.adapters[k]));
    CHECK(r1.artifact.adapter_labels == std::vector<std::string>{"subdomain_0", "subdomain_1"});

    // proportional budget: equal epochs per sub-domain
    const auto& sizes = r1.artifact.partition_sizes;
    CHECK(sizes[0] + sizes[1] == r1.labels.size());

    const auto& art = r1.artifact;
    const auto windows = series::window_corpus(s.data.evaluation[2], cfg.window);
    for (std::size_t i = 0; i < windows.size(); i += 17) {
        const auto& ctx = windows[i].context;
        const auto hard = pipeline::forecast(art, as_span(ctx), pipeline::RoutingMode::Hard);
        CHECK(hard.adapter_evaluations == 1);
        CHECK(hard.probabilities.sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(hard.chosen == mixture::argmax_lowest(hard.probabilities));
        CHECK(hard.entropy_bits >= 0.0);
        CHECK(hard.entropy_bits <= 1.0 + 1e-12);
        const auto& chosen = art.adapters[static_cast<std::size_t>(hard.chosen)];
        CHECK(same_bits(hard.forecast, model::forward(art.base, &chosen, as_span(ctx)).forecast));

        const auto ens = pipeline::forecast(art, as_span(ctx), pipeline::RoutingMode::Ensemble);
        const int nonzero = (ens.probabilities.array() > 0.0).count();
        CHECK(ens.adapter_evaluations == nonzero);
        Vec mix = Vec::Zero(hard.forecast.size());
        for (int k = 0; k < 2; ++k) {
            if (ens.probabilities(k) > 0) {
                mix += ens.probabilities(k) * model::forward(art.base, &art.adapters[k], as_span(ctx)).forecast;
            }
        }
        CHECK((ens.forecast - mix).norm() <= 1e-12 * mix.norm());

        const auto soft = pipeline::forecast(art, as_span(ctx), pipeline::RoutingMode::Soft);
        CHECK(soft.adapter_evaluations == 1);
        const auto merged = lora::average_loras(art.adapters, {soft.probabilities(0), soft.probabilities(1)});
        CHECK(same_bits(soft.forecast, model::forward(art.base, &merged, as_span(ctx)).forecast));
    }
}

TEST_CASE("k-means partitioner routes by nearest centroid") {
    const auto& s = setup();
    auto cfg = s.cfg;
    cfg.K = 2;
    cfg.partitioner = pipeline::PartitionerKind::KMeans;
    const auto res = pipeline::finetune(s.data.finetune, s.base, cfg, s.replay);
    CHECK_FALSE(res.artifact.posterior.has_value());
    REQUIRE(res.artifact.centroids.rows() == 2);
    const Vec x = ramp_context(64, 1.0);
    const Vec p = pipeline::routing_probabilities(res.artifact, as_span(x));
    const int nearest = mixture::nearest_centroid(model::embed(s.base, as_span(x)), res.artifact.centroids);
    CHECK(p(nearest) == 1.0);
    CHECK(p.sum() == 1.0);
}

TEST_CASE("too many components is a data error") {
    const auto& s = setup();
    auto cfg = s.cfg;
    cfg.K = 40;
    cfg.partitioner = pipeline::PartitionerKind::VI;
    cfg.vi.max_iters = 50;
    CHECK_THROWS_AS(pipeline::finetune({s.data.finetune[0]}, s.base, cfg, s.replay), DataError);
    cfg.K = 0;
    CHECK_THROWS_AS(pipeline::finetune(s.data.finetune, s.base, cfg, s.replay), ConfigError);
}

TEST_CASE("artifact round-trips and forecasts bit-exactly") {
    const auto& s = setup();
    auto cfg = s.cfg;
    cfg.K = 2;
    auto res = pipeline::finetune(s.data.finetune, s.base, cfg, s.replay);
    test::TempDir tmp("artifact");
    model::save_model(s.base, tmp.path / "base");
    res.artifact.base_model_path = (tmp.path / "base").string();
    res.artifact.base_model_hash = pipeline::checkpoint_hash(tmp.path / "base");
    pipeline::save_artifact(res.artifact, tmp.path / "art");
    const auto back = pipeline::load_artifact(tmp.path / "art");
    CHECK(back.K() == 2);
    CHECK(back.datasets == res.artifact.datasets);
    CHECK(back.partition_sizes == res.artifact.partition_sizes);
    const auto windows = series::window_corpus(s.data.evaluation[2], cfg.window);
    for (auto mode : {pipeline::RoutingMode::Hard, pipeline::RoutingMode::Soft, pipeline::RoutingMode::Ensemble,
                      pipeline::RoutingMode::Mu}) {
        for (std::size_t i = 0; i < windows.size(); i += 23) {
            const auto& ctx = windows[i].context;
            const auto a = pipeline::forecast(res.artifact, as_span(ctx), mode);
            const auto b = pipeline::forecast(back, as_span(ctx), mode);
            CHECK(same_bits(a.forecast, b.forecast));
            CHECK(same_bits(a.probabilities, b.probabilities));
        }
    }

    // k-means artifacts too
    cfg.partitioner = pipeline::PartitionerKind::KMeans;
    auto km = pipeline::finetune(s.data.finetune, s.base, cfg, s.replay);
    km.artifact.base_model_path = res.artifact.base_model_path;
    km.artifact.base_model_hash = res.artifact.base_model_hash;
    pipeline::save_artifact(km.artifact, tmp.path / "km");
    const auto kback = pipeline::load_artifact(tmp.path / "km");
    CHECK(kback.centroids == km.artifact.centroids);

    // a modified base checkpoint is refused
    std::ofstream(tmp.path / "base" / "extra.txt") << "x";
    CHECK_THROWS_AS(pipeline::load_artifact(tmp.path / "art"), DataError);
    CHECK_THROWS_AS(pipeline::load_artifact(tmp.path / "nothing"), DataError);
}

TEST_CASE("K selection arithmetic on the published validation ranks") {
    const auto t = test::read_table(test::fixture("table5_validation.csv"));
    const std::vector<int> ks{2, 3, 4, 5, 10};
    const auto sel = pipeline::select_k_from_scores(ks, t.rows, t.values);
    CHECK(sel.chosen == 2);
    CHECK(sel.table.average(0) == 13.0 / 6.0);
    CHECK(std::round(sel.table.average(0) * 100) / 100 == 2.17);
    const std::vector<double> published{2.17, 3.17, 2.83, 3.33, 3.50};
    for (int i = 0; i < 5; ++i) CHECK(std::abs(sel.table.average(i) - published[i]) < 0.005);

    // ties go to the smaller K; one candidate is chosen trivially
    Mat tie(2, 2);
    tie << 1.0, 2.0, 2.0, 1.0;
    CHECK(pipeline::select_k_from_scores({4, 3}, {"a", "b"}, tie).chosen == 3);
    CHECK(pipeline::select_k_from_scores({7}, {"a", "b"}, Mat::Constant(2, 1, 0.4)).chosen == 7);
}

TEST_CASE("validation split keeps the tail out of training") {
    const auto& s = setup();
    // 400-step series leave a 40-step tail, too short for L + H = 72
    const auto short_split = pipeline::split_for_validation(s.data.finetune, s.cfg.window);
    CHECK(short_split.validation.empty());
    CHECK(short_split.warnings.size() == 4);

    scenario::TwoRegimeConfig sc;
    sc.length = 1000;
    sc.series_per_dataset = 2;
    const auto data = scenario::two_regime(sc);
    const auto split = pipeline::split_for_validation(data.finetune, s.cfg.window);
    REQUIRE(split.train.size() == 4);
    REQUIRE(split.validation.size() == 4);
    const auto& src = data.finetune[0].series[0];
    const auto& head = split.train[0].series[0];
    CHECK(head.length() == 900);
    CHECK(head.regime_labels.size() == 900);
    CHECK(head.values == src.values.topRows(900));
    // stride 4 over 100 steps: starts 0, 4, ..., 28 per series
    CHECK(split.validation[0].size() == 2 * series::training_window_count(100, s.cfg.window));
    const auto& w = split.validation[0].front();
    CHECK(w.context == src.values.col(0).segment(900, 64));
    CHECK(w.target == src.values.col(0).segment(964, 8));
}

TEST_CASE("select_k with a single candidate") {
    const auto& s = setup();
    scenario::TwoRegimeConfig sc;
    sc.length = 1000;
    sc.series_per_dataset = 1;
    sc.seed = 4;
    const auto data = scenario::two_regime(sc);
    const auto res = pipeline::select_k(data.finetune, s.base, {1}, s.cfg, s.replay);
    CHECK(res.chosen == 1);
    CHECK(res.table.scores.cols() == 1);
    CHECK(res.table.scores.rows() == 4);
}
