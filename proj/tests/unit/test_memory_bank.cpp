#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "cfa/descriptor.hpp"
#include "cfa/error.hpp"
#include "cfa/grid_source.hpp"
#include "cfa/memory_bank.hpp"
#include "test_support.hpp"

using namespace cfa;

namespace {

EmbeddedGrid points_1d(std::vector<double> xs) {
  EmbeddedGrid e(1, 1, xs.size());
  e.data = std::move(xs);
  return e;
}

double frobenius(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("bank size rounds and clamps") {
  CHECK(bank_size(256, 1.0) == 256);
  CHECK(bank_size(256, 0.5) == 128);
  CHECK(bank_size(256, 0.25) == 64);
  CHECK(bank_size(3, 0.1) == 1);
  CHECK_THROWS_AS(bank_size(3, 0.0), ConfigError);
}

TEST_CASE("k-means with M == T returns a permutation of the points") {
  std::mt19937_64 rng(1);
  const auto e = testing::random_embedded(3, 3, 4, rng);
  const auto bank = kmeans_init(e, 12, 50, 7);
  CHECK(inertia(bank, e) == 0.0);
  std::multiset<std::vector<double>> want, got;
  for (std::size_t t = 0; t < 12; ++t) want.emplace(e.patch(t).begin(), e.patch(t).end());
  for (std::size_t j = 0; j < 12; ++j) got.emplace(bank.centers.row(j).begin(), bank.centers.row(j).end());
  CHECK(want == got);
}

TEST_CASE("k-means with M == T handles duplicate points") {
  auto e = points_1d({1.0, 1.0, 1.0, 2.0});
  const auto bank = kmeans_init(e, 4, 10, 3);
  std::vector<double> c(bank.centers.data);
  std::sort(c.begin(), c.end());
  CHECK(c == std::vector<double>{1.0, 1.0, 1.0, 2.0});
}

TEST_CASE("k-means with M == 1 returns the mean") {
  std::mt19937_64 rng(2);
  const auto e = testing::random_embedded(4, 5, 5, rng);
  const auto bank = kmeans_init(e, 1, 20, 0);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (std::size_t t = 0; t < 25; ++t) mean += e.patch(t)[c];
    CHECK(bank.centers(0, c) == doctest::Approx(mean / 25.0).epsilon(1e-12));
  }
}

TEST_CASE("two separated blobs match the exhaustive 2-means optimum") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t T = 4 + trial % 5;
    EmbeddedGrid e(2, 1, T);
    for (std::size_t t = 0; t < T; ++t) {
      const double cx = (t % 2 == 0) ? -5.0 : 5.0;
      e.patch(t)[0] = cx + n(rng);
      e.patch(t)[1] = n(rng);
    }
    const auto bank = kmeans_init(e, 2, 100, trial);
    CHECK(inertia(bank, e) == doctest::Approx(oracle::best_two_means_inertia(testing::to_points(e))).epsilon(1e-9));
    CHECK(bank.centers(0, 0) * bank.centers(1, 0) < 0.0);
  }
}

TEST_CASE("k-means is deterministic and validates M") {
  std::mt19937_64 rng(4);
  const auto e = testing::random_embedded(3, 4, 4, rng);
  CHECK(kmeans_init(e, 5, 30, 9) == kmeans_init(e, 5, 30, 9));
  CHECK_THROWS_AS(kmeans_init(e, 17, 30, 9), ConfigError);
  CHECK_THROWS_AS(kmeans_init(e, 0, 30, 9), ConfigError);
}

TEST_CASE("k-means never increases inertia over its seeding") {
  std::mt19937_64 rng(5);
  const auto e = testing::random_embedded(4, 6, 6, rng);
  const double one_iter = inertia(kmeans_init(e, 6, 1, 11), e);
  const double many = inertia(kmeans_init(e, 6, 100, 11), e);
  CHECK(many <= one_iter + 1e-12);
}

TEST_CASE("matching the bank's own centers returns them in place") {
  std::mt19937_64 rng(6);
  const auto bank = testing::random_bank(6, 3, rng);
  EmbeddedGrid e(3, 2, 3);
  e.data = bank.centers.data;
  const auto idx = match_nearest_unused_indices(bank, e);
  CHECK(idx == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  CHECK(match_nearest_unused(bank, e) == bank.centers);
}

TEST_CASE("a single center takes the global argmin") {
  std::mt19937_64 rng(7);
  const auto e = testing::random_embedded(2, 3, 3, rng);
  MemoryBank bank{Matrix(1, 2)};
  bank.centers.data = {0.1, -0.2};
  const auto idx = match_nearest_unused_indices(bank, e);
  std::size_t best = 0;
  for (std::size_t t = 1; t < 9; ++t)
    if (squared_distance(e.patch(t), bank.centers.row(0)) < squared_distance(e.patch(best), bank.centers.row(0)))
      best = t;
  CHECK(idx == std::vector<std::size_t>{best});
}

TEST_CASE("greedy matching differs from the optimal assignment and follows center order") {
  // c0 = 0 grabs 0.6 first; c1 = 1 is left with 2.2. The optimal
  // assignment would give 0.6 to c1 and -1 to c0.
  MemoryBank bank{Matrix(2, 1)};
  bank.centers.data = {0.0, 1.0};
  const auto e = points_1d({0.6, -1.0, 2.2});
  const auto idx = match_nearest_unused_indices(bank, e);
  CHECK(idx == std::vector<std::size_t>{0, 2});
  CHECK(idx == oracle::greedy_match(testing::to_points(bank), testing::to_points(e)));
  const auto m = match_nearest_unused(bank, e);
  CHECK(m.data == std::vector<double>{0.6, 2.2});
}

TEST_CASE("ties go to the lowest patch index") {
  MemoryBank bank{Matrix(2, 1)};
  bank.centers.data = {0.0, 0.0};
  const auto e = points_1d({1.0, -1.0, 1.0, 3.0});
  CHECK(match_nearest_unused_indices(bank, e) == std::vector<std::size_t>{0, 1});
}

TEST_CASE("greedy matching agrees with the literal loop on random instances") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t M = 1 + rng() % 8;
    const std::size_t T = M + rng() % 8;
    const auto bank = testing::random_bank(M, 3, rng);
    const auto e = testing::random_embedded(3, 1, T, rng);
    const auto idx = match_nearest_unused_indices(bank, e);
    CHECK(idx == oracle::greedy_match(testing::to_points(bank), testing::to_points(e)));
    CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == M);
  }
}

TEST_CASE("matching requires T >= M") {
  std::mt19937_64 rng(9);
  const auto bank = testing::random_bank(5, 2, rng);
  CHECK_THROWS_AS(match_nearest_unused(bank, testing::random_embedded(2, 1, 4, rng)), ConfigError);
}

TEST_CASE("EMA update cases") {
  MemoryBank prev{Matrix(1, 2, 0.0)};
  Matrix nn(1, 2, 2.0);
  CHECK(ema_update(prev, nn, 1.0).centers == nn);
  CHECK(ema_update(prev, nn, 0.5).centers.data == std::vector<double>{1.0, 1.0});
  CHECK_THROWS_AS(ema_update(prev, nn, 0.0), ConfigError);
  CHECK_THROWS_AS(ema_update(prev, nn, 1.1), ConfigError);
  CHECK_THROWS_AS(ema_update(prev, Matrix(2, 2), 0.5), ShapeError);
}

TEST_CASE("repeated EMA converges geometrically") {
  std::mt19937_64 rng(10);
  for (double beta : {0.1, 0.3, 0.5, 0.9}) {
    auto bank = testing::random_bank(4, 3, rng);
    const auto target = testing::random_bank(4, 3, rng).centers;
    const double d0 = frobenius(bank.centers, target);
    for (int i = 1; i <= 50; ++i) {
      bank = ema_update(bank, target, beta);
      const double expected = std::pow(1.0 - beta, i) * d0;
      CHECK(std::abs(frobenius(bank.centers, target) - expected) <= 1e-9 * std::max(1.0, d0));
    }
  }
}

TEST_CASE("EMA is affine under a common shift") {
  std::mt19937_64 rng(11);
  const auto a = testing::random_bank(3, 2, rng);
  const auto b = testing::random_bank(3, 2, rng).centers;
  auto a2 = a;
  auto b2 = b;
  for (auto& v : a2.centers.data) v += 0.75;
  for (auto& v : b2.data) v += 0.75;
  const auto u = ema_update(a, b, 0.3);
  const auto v = ema_update(a2, b2, 0.3);
  for (std::size_t i = 0; i < u.centers.data.size(); ++i)
    CHECK(v.centers.data[i] == doctest::Approx(u.centers.data[i] + 0.75).epsilon(1e-14));
}

TEST_CASE("build_bank over one, two and three samples") {
  std::mt19937_64 rng(12);
  std::vector<PatchGrid> grids;
  for (int i = 0; i < 3; ++i) grids.push_back(testing::random_grid(4, 3, 3, rng));
  const auto desc = init_descriptor(4, 3, 5);
  BankConfig cfg;
  cfg.gamma_c = 0.5;
  cfg.seed = 2;

  InMemoryGridSource one({grids[0]});
  const auto first = kmeans_init(forward(desc, grids[0]), bank_size(9, 0.5), cfg.kmeans_iters, cfg.seed);
  CHECK(build_bank(one, desc, cfg) == first);

  cfg.ema_beta = 1.0;
  InMemoryGridSource two({grids[0], grids[1]});
  CHECK(build_bank(two, desc, cfg).centers == match_nearest_unused(first, forward(desc, grids[1])));

  cfg.ema_beta = 0.25;
  InMemoryGridSource three(grids);
  auto manual = first;
  for (int i = 1; i < 3; ++i) manual = ema_update(manual, match_nearest_unused(manual, forward(desc, grids[i])), 0.25);
  CHECK(build_bank(three, desc, cfg) == manual);
}

TEST_CASE("build_bank size does not depend on the number of samples") {
  std::mt19937_64 rng(13);
  std::vector<PatchGrid> grids;
  for (int i = 0; i < 20; ++i) grids.push_back(testing::random_grid(4, 4, 4, rng));
  const auto desc = init_descriptor(4, 2, 5);
  BankConfig cfg;
  cfg.gamma_c = 0.5;
  InMemoryGridSource two({grids[0], grids[1]});
  InMemoryGridSource twenty(grids);
  const auto a = build_bank(two, desc, cfg);
  const auto b = build_bank(twenty, desc, cfg);
  CHECK(a.size() == 8);
  CHECK(a.size() == b.size());
  CHECK(a.dim() == b.dim());
}

TEST_CASE("knn basics") {
  std::mt19937_64 rng(14);
  const auto bank = testing::random_bank(6, 3, rng);
  const auto q = bank.centers.row(4);
  const auto nn = knn(bank, q, 6);
  CHECK(nn.indices[0] == 4);
  CHECK(nn.distances[0] == 0.0);
  CHECK(std::is_sorted(nn.distances.begin(), nn.distances.end()));
  std::set<std::size_t> all(nn.indices.begin(), nn.indices.end());
  CHECK(all.size() == 6);
  CHECK_THROWS_AS(knn(bank, q, 7), ConfigError);
  CHECK_THROWS_AS(knn(bank, q, 0), ConfigError);
}

TEST_CASE("knn breaks ties by index") {
  MemoryBank bank{Matrix(4, 1)};
  bank.centers.data = {1.0, -1.0, 1.0, 0.0};
  const std::vector<double> q = {0.0};
  const auto nn = knn(bank, q, 3);
  CHECK(nn.indices == std::vector<std::size_t>{3, 0, 1});
}

TEST_CASE("knn matches a brute-force scan") {
  std::mt19937_64 rng(15);
  const auto bank = testing::random_bank(50, 8, rng);
  const auto centers = testing::to_points(bank);
  const auto queries = testing::random_embedded(8, 10, 10, rng);
  for (std::size_t k : {1u, 3u, 7u}) {
    const auto grid = knn_grid(bank, queries, k);
    for (std::size_t t = 0; t < 100; ++t) {
      const std::vector<double> q(queries.patch(t).begin(), queries.patch(t).end());
      const auto want = oracle::knn(centers, q, k);
      const auto single = knn(bank, queries.patch(t), k);
      for (std::size_t i = 0; i < k; ++i) {
        CHECK(single.indices[i] == want[i].second);
        CHECK(single.distances[i] == want[i].first);
        CHECK(grid.indices[t * k + i] == want[i].second);
        CHECK(grid.distances[t * k + i] == want[i].first);
      }
    }
  }
}

TEST_CASE("knn is invariant under center permutation") {
  std::mt19937_64 rng(16);
  const auto bank = testing::random_bank(12, 4, rng);
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  MemoryBank shuffled{Matrix(12, 4)};
  for (std::size_t j = 0; j < 12; ++j)
    std::copy(bank.centers.row(perm[j]).begin(), bank.centers.row(perm[j]).end(), shuffled.centers.row(j).begin());
  const auto q = testing::random_embedded(4, 5, 5, rng);
  const auto a = knn_grid(bank, q, 4);
  const auto b = knn_grid(shuffled, q, 4);
  CHECK(a.distances == b.distances);
  for (std::size_t i = 0; i < a.indices.size(); ++i) CHECK(perm[b.indices[i]] == a.indices[i]);
}
