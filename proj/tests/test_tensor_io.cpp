#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "mixft/common.hpp"
#include "mixft/errors.hpp"
#include "mixft/tensor_io.hpp"
#include "test_util.hpp"

using namespace mixft;

TEST_CASE("matrix round-trips bit-exactly through a file") {
    Rng rng(5);
    std::normal_distribution<double> g(0.0, 1e3);
    Mat m(7, 3);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = g(rng);
    }
    m(0, 0) = -0.0;
    m(1, 1) = 5e-324;

    test::TempDir tmp("tensor_io");
    io::write_tensor(tmp.path / "m.mxt", io::from_matrix(m));
    const Mat back = io::to_matrix(io::read_tensor(tmp.path / "m.mxt"));
    REQUIRE(back.rows() == 7);
    REQUIRE(back.cols() == 3);
    CHECK(std::memcmp(back.data(), m.data(), sizeof(double) * 21) == 0);
    CHECK(std::signbit(back(0, 0)));
}

TEST_CASE("layout: magic, rank, dims, little-endian payload") {
    io::Tensor t{{2, 2}, {1.0, 2.0, 3.0, 4.0}};
    const auto bytes = io::encode_tensor(t);
    REQUIRE(bytes.size() == 16 + 4 * 8);
    CHECK(std::memcmp(bytes.data(), "MXT1", 4) == 0);
    CHECK(bytes[4] == 2);
    CHECK(bytes[8] == 2);
    CHECK(bytes[12] == 2);
    // 1.0 = 0x3FF0000000000000, low byte first
    CHECK(bytes[16] == 0x00);
    CHECK(bytes[23] == 0x3F);
    CHECK(bytes[22] == 0xF0);

    const auto vec = io::encode_tensor(io::from_values(std::vector<double>{1.0, 2.0, 3.0}));
    CHECK(vec.size() == 16 + 3 * 8);
    CHECK(vec[4] == 1);
    CHECK(vec[12] == 0); // unused slot

    io::Tensor r3{{2, 1, 3}, std::vector<double>(6, 0.5)};
    const auto b3 = io::encode_tensor(r3);
    CHECK(b3.size() == 8 + 3 * 4 + 6 * 8);
    const auto d3 = io::decode_tensor(b3);
    CHECK(d3.shape == r3.shape);
    CHECK(d3.data == r3.data);
}

TEST_CASE("bad magic and size mismatch are data errors") {
    auto bytes = io::encode_tensor(io::Tensor{{3}, {1.0, 2.0, 3.0}});
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(io::decode_tensor(bad), DataError);

    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(io::decode_tensor(truncated), DataError);

    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_AS(io::decode_tensor(extra), DataError);

    CHECK_THROWS_AS(io::decode_tensor(std::vector<std::uint8_t>{'M', 'X'}), DataError);
    CHECK_THROWS_AS(io::encode_tensor(io::Tensor{{2, 2}, {1.0}}), DataError);
    CHECK_THROWS_AS(io::read_tensor("/nonexistent/x.mxt"), DataError);
    CHECK_THROWS_AS(io::to_matrix(io::Tensor{{3}, {1.0, 2.0, 3.0}}), DataError);
}

TEST_CASE("sha256 known vectors") {
    CHECK(io::sha256_text("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(io::sha256_text("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
