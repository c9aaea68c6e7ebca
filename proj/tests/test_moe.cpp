#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "stgormer/gradcheck.hpp"
#include "stgormer/moe.hpp"
#include "stgormer/ops.hpp"
#include "stgormer/params.hpp"

using namespace stg;
namespace ad = stg::ad;

namespace {

ExpertFnn random_expert(std::size_t D, std::size_t m, std::uint64_t seed) {
  return {ad::constant(oracle::random_array(Shape{D, m * D}, seed)), ad::constant(oracle::random_array(Shape{m * D}, seed + 1)),
          ad::constant(oracle::random_array(Shape{m * D, D}, seed + 2)), ad::constant(oracle::random_array(Shape{D}, seed + 3))};
}

std::vector<double> expert_oracle(const std::vector<double>& x, const ExpertFnn& e, std::size_t D, std::size_t H) {
  auto h = oracle::matmul(x, e.w1.value().values(), e.b1.value().values(), 1, D, H);
  for (auto& v : h) v = std::max(v, 0.0);
  return oracle::matmul(h, e.w2.value().values(), e.b2.value().values(), 1, H, D);
}

Router linear_router(std::size_t D, std::size_t E, std::uint64_t seed) {
  Router r;
  r.weights.push_back(ad::constant(oracle::random_array(Shape{D, E}, seed)));
  r.biases.push_back(ad::constant(oracle::random_array(Shape{E}, seed + 1)));
  return r;
}

MoEState state_with(const std::vector<std::vector<double>>& tokens) {
  const std::size_t E = tokens.front().size();
  NdArray w(Shape{tokens.size(), E});
  for (std::size_t i = 0; i < tokens.size(); ++i)
    for (std::size_t j = 0; j < E; ++j) w.at({i, j}) = tokens[i][j];
  MoEState s(E);
  s.accumulate(ad::constant(w));
  return s;
}

double lb(const std::vector<double>& f) { return load_balance_loss(state_with({f})).value().item(); }

}  // namespace

TEST_CASE("gate") {
  const std::size_t D = 5;
  auto h = ad::constant(oracle::random_array(Shape{3, 4, D}, 1));
  SUBCASE("single expert") {
    auto w = gate(h, linear_router(D, 1, 2)).value();
    CHECK(w.shape() == Shape{3, 4, 1});
    for (double v : w.data()) CHECK(v == 1.0);
  }
  SUBCASE("zero router is uniform") {
    Router r;
    r.weights.push_back(ad::constant(NdArray(Shape{D, 4})));
    r.biases.push_back(ad::constant(NdArray(Shape{4})));
    auto w = gate(h, r);
    for (double v : w.value().data()) CHECK(v == 0.25);
  }
  SUBCASE("per-token oracle") {
    auto r = linear_router(D, 3, 5);
    auto w = gate(h, r).value();
    for (std::size_t t = 0; t < 12; ++t) {
      std::vector<double> x(h.value().values().begin() + t * D, h.value().values().begin() + (t + 1) * D);
      auto logits = oracle::matmul(x, r.weights[0].value().values(), r.biases[0].value().values(), 1, D, 3);
      auto want = oracle::softmax(logits);
      double s = 0;
      for (std::size_t e = 0; e < 3; ++e) {
        CHECK(std::abs(w[t * 3 + e] - want[e]) < 1e-12);
        s += w[t * 3 + e];
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  SUBCASE("two-layer router") {
    Router r;
    r.weights = {ad::constant(oracle::random_array(Shape{D, D}, 7)), ad::constant(oracle::random_array(Shape{D, 3}, 8))};
    r.biases = {ad::constant(oracle::random_array(Shape{D}, 9)), ad::constant(oracle::random_array(Shape{3}, 10))};
    CHECK(r.experts() == 3);
    auto w = gate(h, r).value();
    std::vector<double> x(h.value().values().begin(), h.value().values().begin() + D);
    auto hidden = oracle::matmul(x, r.weights[0].value().values(), r.biases[0].value().values(), 1, D, D);
    for (auto& v : hidden) v = std::max(v, 0.0);
    auto want = oracle::softmax(oracle::matmul(hidden, r.weights[1].value().values(), r.biases[1].value().values(), 1, D, 3));
    for (std::size_t e = 0; e < 3; ++e) CHECK(std::abs(w[e] - want[e]) < 1e-12);
  }
}

TEST_CASE("moe forward") {
  const std::size_t D = 4, m = 2;
  auto h = ad::constant(oracle::random_array(Shape{2, 3, D}, 1));
  SUBCASE("single expert equals the plain feed-forward") {
    auto e = random_expert(D, m, 10);
    auto out = moe_forward(h, {e}, linear_router(D, 1, 3)).value();
    auto plain = expert_forward(h, e).value();
    CHECK(max_abs_diff(out, plain) < 1e-12);
  }
  SUBCASE("identical experts ignore the gate") {
    auto e = random_expert(D, m, 20);
    auto out = moe_forward(h, {e, e, e}, linear_router(D, 3, 4)).value();
    CHECK(max_abs_diff(out, expert_forward(h, e).value()) < 1e-12);
  }
  SUBCASE("weighted-sum oracle") {
    std::vector<ExpertFnn> experts{random_expert(D, m, 30), random_expert(D, m, 40), random_expert(D, m, 50)};
    auto r = linear_router(D, 3, 6);
    MoEState state(3);
    auto out = moe_forward(h, experts, r, &state).value();
    CHECK(state.tokens() == 6);
    auto weights = gate(h, r).value();
    std::vector<double> mass(3, 0.0);
    for (std::size_t t = 0; t < 6; ++t) {
      std::vector<double> x(h.value().values().begin() + t * D, h.value().values().begin() + (t + 1) * D);
      std::vector<double> want(D, 0.0);
      for (std::size_t e = 0; e < 3; ++e) {
        auto y = expert_oracle(x, experts[e], D, m * D);
        for (std::size_t j = 0; j < D; ++j) want[j] += weights[t * 3 + e] * y[j];
        mass[e] += weights[t * 3 + e];
      }
      for (std::size_t j = 0; j < D; ++j) CHECK(std::abs(out[t * D + j] - want[j]) < 1e-10);
    }
    auto f = state.fractions();
    double total = 0;
    for (std::size_t e = 0; e < 3; ++e) {
      CHECK(std::abs(f[e] - mass[e] / 6) < 1e-12);
      total += f[e];
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("moe state") {
  MoEState s(2);
  CHECK(s.empty());
  CHECK_THROWS_AS(s.fractions(), std::logic_error);
  CHECK_THROWS_AS(load_balance_loss(s), std::logic_error);
  s.accumulate(ad::constant(NdArray(Shape{1, 2}, {0.3, 0.7})));
  auto f = s.fractions();
  CHECK(f[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(f[1] == doctest::Approx(0.7).epsilon(1e-15));
  s.reset();
  CHECK(s.empty());
  CHECK_THROWS_AS(s.fractions(), std::logic_error);
  s.accumulate(ad::constant(NdArray(Shape{1, 2}, {1.0, 0.0})));
  s.accumulate(ad::constant(NdArray(Shape{1, 2}, {0.0, 1.0})));
  CHECK(s.tokens() == 2);
  CHECK(s.fractions() == std::vector<double>{0.5, 0.5});
}

TEST_CASE("load balance loss values") {
  CHECK(lb({0.25, 0.25, 0.25, 0.25}) == 0.0625);
  CHECK(lb({1, 0, 0, 0}) == 0.25);
  CHECK(std::abs(lb({0.9, 0.1}) - 0.41) < 1e-15);
  for (std::size_t E : {2u, 4u, 6u}) CHECK(std::abs(lb(std::vector<double>(E, 1.0 / E)) - 1.0 / (E * E)) < 1e-12);
}

TEST_CASE("load balance loss over random simplex points") {
  std::mt19937_64 rng(11);
  std::exponential_distribution<double> expo(1.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t E = 2 + trial % 7;
    std::vector<double> f(E);
    double s = 0;
    for (auto& v : f) s += (v = expo(rng));
    for (auto& v : f) v /= s;
    const double value = lb(f);
    CHECK(value > 1.0 / (E * E));
    CHECK(value <= 1.0 / E + 1e-15);
    std::vector<double> shuffled = f;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(std::abs(lb(shuffled) - value) < 1e-15);
  }
}

TEST_CASE("moe gradients including the balance term") {
  const std::size_t D = 3, m = 2, E = 3;
  ParameterStore s;
  Router r;
  r.weights.push_back(s.add("router.w", oracle::random_array(Shape{D, E}, 1)));
  r.biases.push_back(s.add("router.b", oracle::random_array(Shape{E}, 2)));
  std::vector<ExpertFnn> experts;
  for (std::size_t e = 0; e < E; ++e) {
    const std::string p = "experts." + std::to_string(e) + ".";
    experts.push_back({s.add(p + "w1", oracle::random_array(Shape{D, m * D}, 10 * e + 3)),
                       s.add(p + "b1", oracle::random_array(Shape{m * D}, 10 * e + 4)),
                       s.add(p + "w2", oracle::random_array(Shape{m * D, D}, 10 * e + 5)),
                       s.add(p + "b2", oracle::random_array(Shape{D}, 10 * e + 6))});
  }
  auto h = ad::constant(oracle::random_array(Shape{4, 2, D}, 99));
  auto target = ad::constant(oracle::random_array(Shape{4, 2, D}, 98));
  auto f = [&] {
    MoEState state(E);
    auto out = moe_forward(h, experts, r, &state);
    return ad::add(ad::sum(ad::mul(out, target)), ad::scale(load_balance_loss(state), 5.0));
  };
  auto rep = finite_difference_check(f, s, 1e-6, 1000);
  INFO(rep.worst_path);
  CHECK(rep.max_relative_error < 1e-4);

  // the balance term alone moves only the router
  auto balance_only = [&] {
    MoEState state(E);
    moe_forward(h, experts, r, &state);
    return load_balance_loss(state);
  };
  s.backward(balance_only());
  for (const auto& p : s.entries()) {
    bool any = false;
    for (double v : p.grad.data()) any = any || v != 0.0;
    CHECK(any == (p.path.rfind("router", 0) == 0));
  }
}
