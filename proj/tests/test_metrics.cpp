#include <doctest.h>

#include <cmath>
#include <random>

#include "mixft/common.hpp"
#include "mixft/errors.hpp"
#include "mixft/metrics.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace mixft;


TEST_CASE("hand case gives exactly one") {
    const std::vector<double> x{1, 2, 3, 4, 5, 6};
    const std::vector<double> y{7, 8};
    const std::vector<double> f{8, 9};
    const auto v = eval::mase(f, y, x, 1);
    REQUIRE(v.has_value());
    CHECK(*v == 1.0);
}

TEST_CASE("200 random instances agree with direct summation") {
    Rng rng(2024);
    std::uniform_int_distribution<int> len(2, 80);
    std::uniform_int_distribution<int> hor(1, 30);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> lvl(-1e3, 1e3);
    for (int c = 0; c < 200; ++c) {
        const int L = len(rng);
        const int H = hor(rng);
        const int S = std::uniform_int_distribution<int>(1, L - 1)(rng);
        const double level = lvl(rng);
        const double spread = std::exp(2 * g(rng));
        std::vector<double> x(L);
        std::vector<double> y(H);
        std::vector<double> f(H);
        for (auto& v : x) v = level + spread * g(rng);
        for (auto& v : y) v = level + spread * g(rng);
        for (auto& v : f) v = level + spread * g(rng);
        const auto got = eval::mase(f, y, x, S);
        REQUIRE(got.has_value());
        const double want = test::mase_oracle(f, y, x, S);
        INFO("case " << c << " L=" << L << " H=" << H << " S=" << S);
        CHECK(std::abs(*got - want) <= 1e-10 * std::abs(want));
    }
}

TEST_CASE("scale and shift invariance") {
    Rng rng(8);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> x(40), y(8), f(8);
    for (auto& v : x) v = g(rng);
    for (auto& v : y) v = g(rng);
    for (auto& v : f) v = g(rng);
    const double base = *eval::mase(f, y, x, 4);
    auto tx = [](std::vector<double> v) {
        for (auto& e : v) e = 37.5 * e - 12.0;
        return v;
    };
    CHECK(*eval::mase(tx(f), tx(y), tx(x), 4) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("periodic constant context is undefined and skipped by summaries") {
    const std::vector<double> x{1, 2, 1, 2, 1, 2};
    const std::vector<double> y{1, 2};
    CHECK_FALSE(eval::mase(y, y, x, 2).has_value());
    CHECK(eval::mase(y, y, x, 1).has_value());
    CHECK_THROWS_AS(eval::mase(y, y, x, 6), ConfigError);
    CHECK_THROWS_AS(eval::mase(std::vector<double>{1.0}, y, x, 1), DataError);

    const auto s = eval::summarize(std::vector<std::optional<double>>{1.0, std::nullopt, 3.0});
    CHECK(s.count == 2);
    CHECK(s.undefined == 1);
    CHECK(s.mean == 2.0);
    CHECK(s.stderr_ == doctest::Approx(1.0)); // sd sqrt(2), / sqrt(2)
    CHECK(eval::summarize(std::vector<double>{5.0}).stderr_ == 0.0);
}

TEST_CASE("rank ties") {
    Vec s(5);
    s << 3.0, 1.0, 3.0, 2.0, 3.0;
    const Vec avg = eval::rank_scores(s, eval::TieMethod::Average);
    const Vec mn = eval::rank_scores(s, eval::TieMethod::Min);
    CHECK(avg(1) == 1.0);
    CHECK(avg(3) == 2.0);
    CHECK(avg(0) == 4.0);
    CHECK(avg(2) == 4.0);
    CHECK(avg(4) == 4.0);
    CHECK(mn(0) == 3.0);
    CHECK(mn(4) == 3.0);
    CHECK(avg.sum() == 15.0);
}

TEST_CASE("ranks are invariant under strictly increasing transforms") {
    Rng rng(1);
    std::normal_distribution<double> g(0.0, 1.0);
    Mat s(6, 5);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = std::exp(g(rng));
    s(2, 1) = s(2, 3); // keep a tie in
    const std::vector<std::string> rows{"a", "b", "c", "d", "e", "f"};
    const std::vector<std::string> cols{"1", "2", "3", "4", "5"};
    const auto a = eval::average_rank(rows, cols, s);
    const Mat t = (s.array().log() * 3.0 + 1.0).matrix();
    const auto b = eval::average_rank(rows, cols, t);
    CHECK(a.ranks == b.ranks);
    CHECK(a.average == b.average);

    Mat bad = s;
    bad(0, 0) = std::nan("");
    CHECK_THROWS_AS(eval::average_rank(rows, cols, bad), DataError);
    CHECK_THROWS_AS(eval::average_rank({"a"}, cols, s), DataError);
}

TEST_CASE("published Table 1 average ranks") {
    // published "Avg. Rank" rows, column order base, shared, mu, arrow, poly, mbc, mixft
    const std::vector<std::pair<std::string, std::vector<double>>> cases{
        {"table1_chronos_bolt.csv", {2.9, 3.0, 6.3, 5.6, 2.8, 5.3, 2.0}},
        {"table1_moirai.csv", {4.3, 2.9, 6.3, 5.0, 3.7, 3.7, 2.1}},
    };
    for (const auto& [file, published] : cases) {
        const auto t = test::read_table(test::fixture(file));
        REQUIRE(t.values.rows() == 10);
        REQUIRE(t.values.cols() == 7);
        const auto r = eval::average_rank(t.rows, t.cols, t.values);
        for (int m = 0; m < 7; ++m) {
            INFO(file << " " << t.cols[m] << " got " << r.average(m));
            CHECK(std::abs(r.average(m) - published[m]) <= 0.05 + 1e-9);
        }
    }
}
