#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "mixft/basemodel.hpp"
#include "mixft/errors.hpp"
#include "mixft/lowrank.hpp"
#include "test_util.hpp"

using namespace mixft;

namespace {

lora::LoraModule randomized(const model::BaseModel& m, std::uint64_t seed) {
    lora::AdapterConfig cfg;
    cfg.seed = seed;
    auto a = lora::init_lora(m, cfg);
    Rng rng(seed + 1000);
    std::normal_distribution<double> g(0.0, 0.2);
    for (auto& f : a.factors) {
        f.A = f.A.unaryExpr([&](double v) { return v + g(rng); });
        f.B = f.B.unaryExpr([&](double) { return g(rng); });
    }
    return a;
}

Mat delta(const lora::LoraModule& a, std::size_t i) { return a.scaling * a.factors[i].B * a.factors[i].A; }

std::vector<series::Window> regime_windows(double period, double noise, int count, std::uint64_t seed,
                                           const model::ModelConfig& cfg) {
    series::RegimeSpec spec;
    spec.regimes = {{period, 1.0, noise, 0.0, 0.0}};
    spec.transition = Mat::Ones(1, 1);
    return series::window_corpus(series::synth_corpus(spec, count, 300, seed), {cfg.context, cfg.horizon, 2});
}

std::vector<series::Pair> pairs_of(const std::vector<series::Window>& w) {
    std::vector<series::Pair> out;
    for (const auto& x : w) out.push_back({x.context, x.target});
    return out;
}

} // namespace

TEST_CASE("fresh adapter shapes, counts and orthonormal A") {
    model::ModelConfig mc;
    const auto m = model::init_model(mc);
    lora::AdapterConfig cfg; // r = 2, alpha = 16
    const auto a = lora::init_lora(m, cfg);
    CHECK(a.scaling == 8.0);
    REQUIRE(a.factors.size() == 5); // 2 blocks x 2 maps + head
    const auto* f = a.find("block0.first");
    REQUIRE(f != nullptr);
    CHECK(f->A.size() + f->B.size() == 2 * 16 + 16 * 2);
    CHECK(a.parameter_count() == 4 * 64 + (2 * 16 + 8 * 2));
    for (const auto& fac : a.factors) {
        CHECK((fac.A * fac.A.transpose() - Mat::Identity(2, 2)).norm() < 1e-12);
        CHECK(fac.B.isZero(0.0));
    }
    cfg.rank = 17;
    CHECK_THROWS_AS(lora::init_lora(m, cfg), ConfigError);
    cfg.rank = 2;
    cfg.dropout = 1.0;
    CHECK_THROWS_AS(lora::init_lora(m, cfg), ConfigError);
}

TEST_CASE("averaging duplicates or one-hot weights returns the input exactly") {
    const auto m = model::init_model({});
    const auto a = randomized(m, 1);
    const auto b = randomized(m, 2);
    for (auto level : {lora::AveragingLevel::Factor, lora::AveragingLevel::Delta}) {
        CHECK(lora::bitwise_equal(lora::average_loras({a, a, a}, {0.2, 0.3, 0.5}, level), a));
        CHECK(lora::bitwise_equal(lora::average_loras({a, b}, {0.0, 1.0}, level), b));
        CHECK(lora::bitwise_equal(lora::average_loras({a, b, a}, {0.5, 0.0, 0.5}, level), a));
    }
    CHECK_THROWS_AS(lora::average_loras({a, b}, {0.5, 0.6}), DataError);
    CHECK_THROWS_AS(lora::average_loras({a, b}, {1.5, -0.5}), DataError);
    CHECK_THROWS_AS(lora::average_loras({a}, {0.5, 0.5}), DataError);
}

TEST_CASE("factor and delta averaging") {
    const auto m = model::init_model({});
    const auto a = randomized(m, 3);
    const auto b = randomized(m, 4);
    const auto fac = lora::average_loras({a, b}, {0.25, 0.75}, lora::AveragingLevel::Factor);
    const auto del = lora::average_loras({a, b}, {0.25, 0.75}, lora::AveragingLevel::Delta);
    for (std::size_t i = 0; i < a.factors.size(); ++i) {
        CHECK((fac.factors[i].A - (0.25 * a.factors[i].A + 0.75 * b.factors[i].A)).norm() < 1e-14);
        CHECK((fac.factors[i].B - (0.25 * a.factors[i].B + 0.75 * b.factors[i].B)).norm() < 1e-14);
        const Mat want = 0.25 * delta(a, i) + 0.75 * delta(b, i);
        CHECK((delta(del, i) - want).norm() < 1e-12 * std::max(1.0, want.norm()));
        CHECK(del.factors[i].A.rows() == 4);
    }
    // the delta-level average forecasts like the explicitly merged weights
    const std::vector<double> x = [] {
        std::vector<double> v(64);
        for (int t = 0; t < 64; ++t) v[t] = std::sin(0.3 * t);
        return v;
    }();
    auto merged = m;
    for (std::size_t bl = 0; bl < merged.blocks.size(); ++bl) {
        merged.blocks[bl].first.weight += 0.25 * delta(a, 2 * bl) + 0.75 * delta(b, 2 * bl);
        merged.blocks[bl].second.weight += 0.25 * delta(a, 2 * bl + 1) + 0.75 * delta(b, 2 * bl + 1);
    }
    merged.head.weight += 0.25 * delta(a, 4) + 0.75 * delta(b, 4);
    const Vec f1 = model::forward(m, &del, x).forecast;
    const Vec f2 = model::forward(merged, nullptr, x).forecast;
    CHECK((f1 - f2).norm() < 1e-10 * f2.norm());
}

TEST_CASE("training data checks") {
    const auto m = model::init_model({});
    const auto a = lora::init_lora(m, {});
    lora::TrainOptions opts;
    opts.optimizer.steps = 2;
    CHECK_THROWS_AS(lora::train_lora(m, a, {}, {}, opts), DataError);

    const auto few = regime_windows(8.0, 0.1, 1, 2, m.config);
    opts.optimizer.batch = 10000;
    const auto r = lora::train_lora(m, a, few, {}, opts);
    CHECK(r.loss_trace.size() == 2);
    CHECK(r.warnings.size() == 2); // capped batch, no replay
}

TEST_CASE("adapter trained on one regime beats the bare base there") {
    model::ModelConfig mc;
    mc.seed = 1;
    // a base that has seen both regimes, briefly
    auto pre = regime_windows(8.0, 0.1, 6, 1, mc);
    const auto other = regime_windows(24.0, 0.5, 6, 2, mc);
    pre.insert(pre.end(), other.begin(), other.end());
    model::OptimizerConfig popt;
    popt.steps = 300;
    popt.batch = 32;
    const auto base = model::pretrain(model::init_model(mc), pre, popt, 7).model;

    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto train = regime_windows(8.0, 0.1, 6, 100 + seed, mc);
        const auto val = pairs_of(regime_windows(8.0, 0.1, 3, 200 + seed, mc));
        lora::AdapterConfig acfg;
        acfg.seed = seed;
        lora::TrainOptions opts;
        opts.optimizer.steps = 200;
        opts.optimizer.batch = 32;
        opts.seed = seed;
        const auto res = lora::train_lora(base, lora::init_lora(base, acfg), train, pre, opts);
        const double plain = model::loss_only(base, nullptr, val);
        const double adapted = model::loss_only(base, &res.module, val);
        INFO("seed " << seed << " base " << plain << " adapted " << adapted);
        CHECK(adapted < plain);
    }
}

TEST_CASE("training is deterministic and the base stays untouched") {
    model::ModelConfig mc;
    const auto base = model::init_model(mc);
    const auto before = base.patch_embed.weight;
    const auto data = regime_windows(8.0, 0.1, 2, 3, mc);
    lora::TrainOptions opts;
    opts.optimizer.steps = 20;
    opts.seed = 4;
    const auto r1 = lora::train_lora(base, lora::init_lora(base, {}), data, data, opts);
    const auto r2 = lora::train_lora(base, lora::init_lora(base, {}), data, data, opts);
    CHECK(lora::bitwise_equal(r1.module, r2.module));
    CHECK(r1.loss_trace == r2.loss_trace);
    CHECK(base.patch_embed.weight == before);
}

TEST_CASE("adapter save and load") {
    const auto m = model::init_model({});
    auto a = randomized(m, 9);
    a.scaling = 3.25;
    test::TempDir tmp("adapter");
    lora::save_adapter(a, tmp.path / "a");
    const auto back = lora::load_adapter(tmp.path / "a");
    CHECK(lora::bitwise_equal(a, back));
    CHECK(back.scaling == 3.25);
    CHECK(back.config.rank == a.config.rank);
    CHECK_THROWS_AS(lora::load_adapter(tmp.path / "none"), DataError);
}
