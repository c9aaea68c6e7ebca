#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "stgormer/encoding.hpp"
#include "stgormer/gradcheck.hpp"
#include "stgormer/ops.hpp"
#include "stgormer/params.hpp"

using namespace stg;
namespace ad = stg::ad;

TEST_CASE("time2vec scalar") {
  auto out = time2vec(3.0, NdArray::vector({2, 1}), NdArray::vector({1, 0.5}));
  CHECK(out[0] == 7.0);
  CHECK(out[1] == std::sin(1.0 * 3.0 + 0.5));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dt = 1 + trial % 6;
    NdArray w(Shape{dt}), b(Shape{dt});
    for (auto& v : w.data()) v = u(rng);
    for (auto& v : b.data()) v = u(rng);
    const double t = u(rng);
    auto got = time2vec(t, w, b);
    REQUIRE(got.size() == dt);
    CHECK(got[0] == w[0] * t + b[0]);
    for (std::size_t i = 1; i < dt; ++i) {
      CHECK(got[i] == std::sin(w[i] * t + b[i]));
      CHECK(std::abs(got[i]) <= 1.0);
      auto shifted = time2vec(t + 2 * std::numbers::pi / w[i], w, b);
      CHECK(std::abs(shifted[i] - got[i]) < 1e-9);
    }
  }
}

TEST_CASE("time2vec on tensors matches the scalar form") {
  auto w = ad::constant(oracle::random_array(Shape{4}, 1, -5, 5));
  auto b = ad::constant(oracle::random_array(Shape{4}, 2));
  auto t = oracle::random_array(Shape{3, 2}, 3, 0, 1);
  auto out = time2vec(ad::constant(t), {w, b}).value();
  CHECK(out.shape() == Shape{3, 2, 4});
  for (std::size_t i = 0; i < 6; ++i) {
    auto want = time2vec(t[i], w.value(), b.value());
    for (std::size_t j = 0; j < 4; ++j) CHECK(out[i * 4 + j] == want[j]);
  }
}

TEST_CASE("temporal input encoding") {
  SUBCASE("single linear dimension") {
    std::vector<Time2VecParams> p{{ad::constant(NdArray::vector({1.5})), ad::constant(NdArray::vector({-0.25}))}};
    auto ts = NdArray(Shape{3, 1}, {0.0, 0.5, 0.75});
    auto enc = temporal_input_encoding(ts, p).value();
    CHECK(enc.shape() == Shape{3, 1});
    for (std::size_t i = 0; i < 3; ++i) CHECK(enc[i] == 1.5 * ts[i] - 0.25);
  }
  SUBCASE("composition of independent calls") {
    std::vector<Time2VecParams> p;
    for (int f = 0; f < 2; ++f)
      p.push_back({ad::constant(oracle::random_array(Shape{4}, 10 + f, -6, 6)),
                   ad::constant(oracle::random_array(Shape{4}, 20 + f))});
    auto ts = oracle::random_array(Shape{8, 2}, 30, 0, 1);
    ts.at({5, 0}) = ts.at({2, 0});
    ts.at({5, 1}) = ts.at({2, 1});
    auto enc = temporal_input_encoding(ts, p).value();
    CHECK(enc.shape() == Shape{8, 8});
    for (std::size_t s = 0; s < 8; ++s)
      for (std::size_t f = 0; f < 2; ++f) {
        auto want = time2vec(ts.at({s, f}), p[f].w.value(), p[f].b.value());
        for (std::size_t j = 0; j < 4; ++j) CHECK(enc.at({s, f * 4 + j}) == want[j]);
      }
    for (std::size_t j = 0; j < 8; ++j) CHECK(enc.at({5, j}) == enc.at({2, j}));
    CHECK_THROWS_AS(temporal_input_encoding(NdArray(Shape{8, 3}), p), ShapeError);
  }
}

TEST_CASE("spatial input encoding") {
  const int max_degree = 5;
  DegreeEmbeddingTables tables{ad::constant(oracle::random_array(Shape{7, 3}, 1)),
                               ad::constant(oracle::random_array(Shape{7, 3}, 2)), max_degree};
  CHECK(degree_row(3, 5) == 3);
  CHECK(degree_row(6, 5) == 6);
  CHECK(degree_row(9, 5) == 6);

  SUBCASE("undirected node uses the same row in both tables") {
    SpatioTemporalGraph g(4, {{0, 1}, {0, 2}, {0, 3}}, false);
    auto s = spatial_input_encoding(g, tables).value();
    for (std::size_t j = 0; j < 3; ++j) {
      CHECK(s.at({0, j}) == tables.z_minus.value().at({3, j}) + tables.z_plus.value().at({3, j}));
      CHECK(s.at({1, j}) == tables.z_minus.value().at({1, j}) + tables.z_plus.value().at({1, j}));
    }
  }
  SUBCASE("overflow row") {
    std::vector<Edge> star;
    for (int v = 1; v <= 9; ++v) star.emplace_back(0, v);
    SpatioTemporalGraph g(10, star, true);
    auto s = spatial_input_encoding(g, tables).value();
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(s.at({0, j}) == tables.z_minus.value().at({0, j}) + tables.z_plus.value().at({6, j}));
  }
  SUBCASE("zero tables give zeros") {
    DegreeEmbeddingTables zero{ad::constant(NdArray(Shape{7, 3})), ad::constant(NdArray(Shape{7, 3})), max_degree};
    SpatioTemporalGraph g(3, {{0, 1}, {1, 2}}, true);
    auto s = spatial_input_encoding(g, zero);
    for (double v : s.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("permutation equivariance") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto [n, edges] = oracle::random_edges(seed, 12, 0.4, seed % 2 == 0);
      SpatioTemporalGraph g(n, edges, seed % 2 == 0);
      std::vector<int> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), std::mt19937_64(seed));
      auto a = spatial_input_encoding(g, tables).value();
      auto b = spatial_input_encoding(g.permuted(perm), tables).value();
      for (int v = 0; v < n; ++v)
        for (std::size_t j = 0; j < 3; ++j)
          CHECK(b.at({static_cast<std::size_t>(perm[v]), j}) == a.at({static_cast<std::size_t>(v), j}));
    }
  }
}

TEST_CASE("fuse inputs") {
  SUBCASE("zero weights collapse to the bias") {
    FusionLayer layer{ad::constant(NdArray(Shape{5, 4})), ad::constant(NdArray::vector({1, 2, 3, 4}))};
    auto h = fuse_inputs(ad::constant(oracle::random_array(Shape{2, 3, 1}, 1)),
                         ad::constant(oracle::random_array(Shape{2, 2}, 2)),
                         ad::constant(oracle::random_array(Shape{3, 2}, 3)), layer)
                 .value();
    CHECK(h.shape() == Shape{2, 3, 4});
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == static_cast<double>(i % 4 + 1));
  }
  SUBCASE("per-position oracle") {
    const std::size_t B = 2, T = 3, N = 4, C = 2, K = 3, d = 2, D = 5, W = C + K + d;
    auto x = oracle::random_array(Shape{B, T, N, C}, 1);
    auto te = oracle::random_array(Shape{B, T, K}, 2);
    auto se = oracle::random_array(Shape{N, d}, 3);
    auto w = oracle::random_array(Shape{W, D}, 4);
    auto b = oracle::random_array(Shape{D}, 5);
    FusionLayer layer{ad::constant(w), ad::constant(b)};
    auto h = fuse_inputs(ad::constant(x), ad::constant(te), ad::constant(se), layer).value();
    REQUIRE(h.shape() == Shape{B, T, N, D});
    for (std::size_t bb = 0; bb < B; ++bb)
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t n = 0; n < N; ++n) {
          std::vector<double> row;
          for (std::size_t c = 0; c < C; ++c) row.push_back(x.at({bb, t, n, c}));
          for (std::size_t k = 0; k < K; ++k) row.push_back(te.at({bb, t, k}));
          for (std::size_t k = 0; k < d; ++k) row.push_back(se.at({n, k}));
          auto want = oracle::matmul(row, w.values(), b.values(), 1, W, D);
          for (std::size_t j = 0; j < D; ++j) CHECK(std::abs(h.at({bb, t, n, j}) - want[j]) < 1e-12);
        }
  }
  SUBCASE("omitted encodings narrow the projection") {
    auto x = oracle::random_array(Shape{3, 4, 1}, 1);
    FusionLayer layer{ad::constant(oracle::random_array(Shape{1, 6}, 2)), ad::constant(NdArray(Shape{6}))};
    auto h = fuse_inputs(ad::constant(x), {}, {}, layer).value();
    CHECK(h.shape() == Shape{3, 4, 6});
    FusionLayer wide{ad::constant(NdArray(Shape{4, 6})), ad::constant(NdArray(Shape{6}))};
    CHECK_THROWS_AS(fuse_inputs(ad::constant(x), {}, {}, wide), ShapeError);
  }
}

TEST_CASE("encoding pipeline gradients") {
  ParameterStore s;
  std::vector<Time2VecParams> t2v;
  for (int f = 0; f < 2; ++f)
    t2v.push_back({s.add("t2v." + std::to_string(f) + ".w", oracle::random_array(Shape{3}, 1 + f, -4, 4)),
                   s.add("t2v." + std::to_string(f) + ".b", oracle::random_array(Shape{3}, 3 + f))});
  DegreeEmbeddingTables tables{s.add("zm", oracle::random_array(Shape{4, 2}, 5)),
                               s.add("zp", oracle::random_array(Shape{4, 2}, 6)), 2};
  FusionLayer layer{s.add("fw", oracle::random_array(Shape{1 + 6 + 2, 4}, 7)), s.add("fb", oracle::random_array(Shape{4}, 8))};
  SpatioTemporalGraph g(5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}, {1, 2}}, false);
  auto x = oracle::random_array(Shape{3, 5, 1}, 9);
  auto ts = oracle::random_array(Shape{3, 2}, 10, 0, 1);
  auto target = ad::constant(oracle::random_array(Shape{3, 5, 4}, 11));
  auto f = [&] {
    auto h = fuse_inputs(ad::constant(x), temporal_input_encoding(ts, t2v), spatial_input_encoding(g, tables), layer);
    return ad::sum(ad::mul(ad::sin(h), target));
  };
  auto rep = finite_difference_check(f, s, 1e-6, 1000);
  CHECK(rep.max_relative_error < 1e-4);
}
