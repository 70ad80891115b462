#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "cfa/descriptor.hpp"
#include "cfa/error.hpp"
#include "cfa/loss.hpp"
#include "fd_check.hpp"
#include "test_support.hpp"

using namespace cfa;

namespace {

CfaHyperParams small_hp(std::size_t k, std::size_t j, RepMarginMode mode = RepMarginMode::kNonDegenerate) {
  CfaHyperParams hp;
  hp.k = k;
  hp.j = j;
  hp.rep_mode = mode;
  return hp;
}

}  // namespace

TEST_CASE("embedding on a center has zero nearest-neighbor attraction") {
  std::mt19937_64 rng(1);
  const auto bank = testing::random_bank(4, 3, rng);
  EmbeddedGrid e(3, 2, 2);
  e.data = bank.centers.data;
  const auto r = loss_att(e, bank, small_hp(1, 1));
  CHECK(r.breakdown.l_att == 0.0);
  CHECK(r.breakdown.active_att == 0);
}

TEST_CASE("single-term attraction equals d^2 - r^2") {
  MemoryBank bank{Matrix(2, 3)};
  bank.centers.data = {0, 0, 0, 10, 10, 10};
  EmbeddedGrid e(3, 1, 1);
  e.data = {0.5, 0, 0};
  auto hp = small_hp(1, 1);
  const auto r = loss_att(e, bank, hp);
  CHECK(r.breakdown.l_att == doctest::Approx(0.25 - 1e-10).epsilon(1e-15));
  CHECK(r.gradient.data[0] == doctest::Approx(2.0 * 0.5));
  CHECK(r.gradient.data[1] == 0.0);
}

TEST_CASE("as-written repulsion is identically zero with the default margins") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const auto bank = testing::random_bank(6, 2, rng, 0.01);
    const auto e = testing::random_embedded(2, 3, 3, rng, 0.01);
    const auto r = loss_rep(e, bank, small_hp(2, 3, RepMarginMode::kAsWritten));
    CHECK(r.breakdown.l_rep == 0.0);
    CHECK(r.breakdown.active_rep == 0);
    for (double g : r.gradient.data) CHECK(g == 0.0);
  }
}

TEST_CASE("non-degenerate repulsion on a coincident hard negative is r^2 + alpha") {
  // Centers 0 and 1 both sit on the embedding. With K = 1 the tie goes to
  // center 0, leaving center 1 as the hard negative at distance 0.
  MemoryBank bank{Matrix(3, 2)};
  bank.centers.data = {1, 1, 1, 1, 9, 9};
  EmbeddedGrid e(2, 1, 1);
  e.data = {1, 1};
  const auto hp = small_hp(1, 1);
  const auto r = loss_rep(e, bank, hp);
  CHECK(r.breakdown.l_rep == doctest::Approx(1e-10 + 0.1).epsilon(1e-15));
  CHECK(r.breakdown.active_rep == 1);
}

TEST_CASE("vectorized losses match the literal double loops") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t M = 6 + rng() % 11, Dp = 1 + rng() % 8;
    const std::size_t side = 1 + rng() % 8;
    const auto bank = testing::random_bank(M, Dp, rng, 0.3);
    const auto e = testing::random_embedded(Dp, side, side, rng, 0.3);
    const auto mode = trial % 2 ? RepMarginMode::kAsWritten : RepMarginMode::kNonDegenerate;
    auto hp = small_hp(1 + rng() % 3, 1 + rng() % 3, mode);
    hp.alpha = 0.5;
    hp.radius = trial % 3 == 0 ? 0.8 : 1e-5;
    const auto phi = testing::to_points(e);
    const auto c = testing::to_points(bank);
    const double att = oracle::l_att(phi, c, hp.k, hp.radius);
    const double rep = oracle::l_rep(phi, c, hp.k, hp.j, hp.radius, hp.alpha, mode == RepMarginMode::kAsWritten);
    const auto r = loss_cfa(e, bank, hp);
    CHECK(r.breakdown.l_att == doctest::Approx(att).epsilon(1e-6));
    CHECK(r.breakdown.l_rep == doctest::Approx(rep).epsilon(1e-6));
    CHECK(r.breakdown.l_total == r.breakdown.l_att + r.breakdown.l_rep);
    CHECK(r.breakdown.l_att >= 0.0);
    CHECK(r.breakdown.l_rep >= 0.0);
    CHECK(loss_att(e, bank, hp).breakdown.l_att == r.breakdown.l_att);
    CHECK(loss_rep(e, bank, hp).breakdown.l_rep == r.breakdown.l_rep);
  }
}

TEST_CASE("total equals attraction when repulsion is inactive") {
  std::mt19937_64 rng(4);
  const auto bank = testing::random_bank(8, 3, rng, 5.0);
  const auto e = testing::random_embedded(3, 2, 2, rng, 0.01);
  auto hp = small_hp(2, 2);
  hp.alpha = 1e-6;
  const auto r = loss_cfa(e, bank, hp);
  REQUIRE(r.breakdown.l_rep == 0.0);
  CHECK(r.breakdown.l_total == r.breakdown.l_att);
  CHECK(r.gradient == loss_att(e, bank, hp).gradient);
}

TEST_CASE("embedding gradients match finite differences of the oracle loss") {
  std::mt19937_64 rng(5);
  std::size_t checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto bank = testing::random_bank(5, 3, rng, 0.5);
    auto e = testing::random_embedded(3, 2, 2, rng, 0.5);
    auto hp = small_hp(2, 2);
    hp.alpha = 0.4;
    const auto c = testing::to_points(bank);
    if (oracle::kink_margin(testing::to_points(e), c, 2, 2, hp.radius, hp.alpha) < 1e-2) continue;
    ++checked;
    const auto r = loss_cfa(e, bank, hp);
    const double h = 1e-5;
    for (std::size_t i = 0; i < e.data.size(); ++i) {
      const double saved = e.data[i];
      e.data[i] = saved + h;
      const auto up = testing::to_points(e);
      e.data[i] = saved - h;
      const auto down = testing::to_points(e);
      e.data[i] = saved;
      const double fd = (oracle::l_att(up, c, 2, hp.radius) + oracle::l_rep(up, c, 2, 2, hp.radius, hp.alpha, false) -
                         oracle::l_att(down, c, 2, hp.radius) -
                         oracle::l_rep(down, c, 2, 2, hp.radius, hp.alpha, false)) /
                        (2 * h);
      CHECK(r.gradient.data[i] == doctest::Approx(fd).epsilon(1e-6).scale(1.0));
    }
  }
  CHECK(checked >= 10);
}

TEST_CASE("full-loss parameter gradients match finite differences") {
  std::mt19937_64 rng(6);
  std::size_t checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const auto grid = testing::random_grid(4, 3, 3, rng, 0.5);
    const auto desc = init_descriptor(4, 3, rng());
    const auto bank = testing::random_bank(5, 3, rng, 0.6);
    auto hp = small_hp(2, 2);
    hp.alpha = 0.5;
    const auto rep = testing::fd_check(desc, grid, bank, hp, 1e-4, testing::safe_kink_guard(grid, desc, bank, 1e-4));
    if (rep.kink_adjacent) continue;
    ++checked;
    CHECK(rep.max_rel_error < 1e-4);
  }
  CHECK(checked >= 5);
}

TEST_CASE("a small gradient step does not increase the loss") {
  std::mt19937_64 rng(7);
  std::size_t checked = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto grid = testing::random_grid(4, 3, 3, rng, 0.5);
    auto desc = init_descriptor(4, 3, rng());
    const auto bank = testing::random_bank(8, 3, rng, 0.6);
    auto hp = small_hp(2, 2);
    hp.alpha = 0.5;
    if (testing::oracle_kink_margin(desc, grid, bank, hp) < 1e-3) continue;
    ++checked;
    const auto before = loss_cfa(forward(desc, grid), bank, hp);
    auto g = backward(desc, grid, before.gradient);
    g *= -1e-5;
    for (std::size_t i = 0; i < desc.weight.data.size(); ++i) desc.weight.data[i] += g.weight.data[i];
    for (std::size_t i = 0; i < desc.bias.size(); ++i) desc.bias[i] += g.bias[i];
    const auto after = loss_cfa(forward(desc, grid), bank, hp);
    CHECK(after.breakdown.l_total <= before.breakdown.l_total);
  }
  CHECK(checked >= 10);
}

TEST_CASE("hyperparameter validation") {
  CfaHyperParams hp;
  CHECK_NOTHROW(hp.validate(6));
  CHECK_THROWS_AS(hp.validate(5), ConfigError);
  hp.radius = 0.0;
  CHECK_THROWS_AS(hp.validate(6), ConfigError);
  hp = CfaHyperParams{};
  hp.k = 0;
  CHECK_THROWS_AS(hp.validate(6), ConfigError);

  std::mt19937_64 rng(8);
  const auto bank = testing::random_bank(4, 2, rng);
  const auto e = testing::random_embedded(2, 2, 2, rng);
  CHECK_THROWS_AS(loss_rep(e, bank, small_hp(3, 2)), ConfigError);
  CHECK_THROWS_AS(loss_att(e, bank, small_hp(5, 1)), ConfigError);
  CHECK_THROWS_AS(loss_att(testing::random_embedded(3, 2, 2, rng), bank, small_hp(1, 1)), ShapeError);
}
