#include "hetmf/hetmf.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace hetmf;
namespace ht = hetmf::testing;

TEST(Cache, ZipfPopularities) {
  const auto l = cache::zipf_popularities(4, 0.8);
  ASSERT_EQ(l.size(), 4u);
  EXPECT_DOUBLE_EQ(l[0], 1.0);
  EXPECT_NEAR(l[1], 0.574349, 1e-6);
  EXPECT_NEAR(l[2], 0.415244, 1e-6);
  EXPECT_NEAR(l[3], 0.329877, 1e-6);

  for (double v : cache::zipf_popularities(7, 0.0)) EXPECT_EQ(v, 1.0);
  const auto scaled = cache::zipf_popularities(3, 1.0, 2.5);
  EXPECT_DOUBLE_EQ(scaled[2], 2.5 / 3.0);

  const auto norm = cache::zipf_normalized(3, 1.0);
  EXPECT_NEAR(norm[0], 6.0 / 11.0, 1e-15);
  EXPECT_NEAR(norm[1], 3.0 / 11.0, 1e-15);
  EXPECT_NEAR(norm[2], 2.0 / 11.0, 1e-15);
}

TEST(Cache, RuleCounts) {
  const auto two = cache::build_random_m({{1.0, 1.0}, {1}});
  ASSERT_EQ(two.rules().size(), 2u);
  for (const auto& r : two.rules()) EXPECT_EQ(r.rate, 1.0);

  const auto big = cache::build_random_m({cache::zipf_popularities(20, 0.8), {5, 3, 2}});
  EXPECT_EQ(big.rules().size(), 1140u);
  EXPECT_EQ(big.num_states(), 4u);
  for (const auto& r : big.rules()) EXPECT_EQ(r.order(), 2u);
}

TEST(Cache, ConfigErrors) {
  EXPECT_THROW(cache::build_random_m({{1.0, 1.0}, {3}}), ModelError);
  EXPECT_THROW(cache::build_random_m({{1.0, -1.0}, {1}}), ModelError);
  EXPECT_THROW(cache::build_random_m({{1.0, 1.0}, {}}), ModelError);
  EXPECT_THROW(cache::exact_steady_state({{1.0, 1.0}, {1, 1, 1}}), ModelError);
}

TEST(Cache, DriftMatchesClosedForm) {
  Rng rng(53);
  for (const auto& lists : std::vector<std::vector<std::size_t>>{{2}, {2, 1}, {1, 2, 2}}) {
    const cache::CacheConfig cfg{cache::zipf_popularities(7, 0.6), lists};
    const auto m = cache::build_random_m(cfg);
    for (int trial = 0; trial < 5; ++trial) {
      const auto x = ht::random_admissible_mixture(cfg, rng);
      EXPECT_LE((drift(m, x) - ht::cache_closed_form_drift(cfg, x)).lpNorm<Eigen::Infinity>(), 1e-12);
    }
  }
}

TEST(Cache, ExactSmallCases) {
  const auto one = cache::exact_steady_state({{3.7}, {1}});
  EXPECT_NEAR(one[1], 1.0, 1e-15);
  EXPECT_NEAR(one[0], 0.0, 1e-15);

  const double l1 = 0.8, l2 = 2.9;
  const auto two = cache::exact_steady_state({{l1, l2}, {1}});
  EXPECT_NEAR(two[1], l1 / (l1 + l2), 1e-15);
  EXPECT_NEAR(two[3], l2 / (l1 + l2), 1e-15);
}

TEST(Cache, ExactMatchesBruteForce) {
  Rng rng(59);
  for (std::size_t n = 2; n <= 8; ++n) {
    for (const auto& lists : std::vector<std::vector<std::size_t>>{{1}, {2}, {1, 1}, {2, 1}, {2, 2}, {1, 2, 1}}) {
      if (std::accumulate(lists.begin(), lists.end(), std::size_t{0}) > n) continue;
      std::vector<double> lambdas(n);
      for (auto& l : lambdas) l = 0.1 + rng.uniform();
      const cache::CacheConfig cfg{lambdas, lists};
      EXPECT_LE((cache::exact_steady_state(cfg) - ht::brute_force_cache(cfg)).lpNorm<Eigen::Infinity>(), 1e-12)
          << "n=" << n << " lists=" << lists.size();
    }
  }
}

TEST(Cache, ExactOccupancy) {
  const cache::CacheConfig cfg{cache::zipf_popularities(30, 0.5), {9, 9}};
  const auto pi = cache::exact_steady_state(cfg);
  const std::size_t S = 3;
  for (std::size_t k = 0; k < 30; ++k) EXPECT_NEAR(pi.segment(static_cast<Eigen::Index>(k * S), S).sum(), 1.0, 1e-12);
  for (std::size_t s = 1; s < S; ++s) {
    double occ = 0.0;
    for (std::size_t k = 0; k < 30; ++k) occ += pi[static_cast<Eigen::Index>(k * S + s)];
    EXPECT_NEAR(occ, 9.0, 1e-10);
  }
  for (std::size_t k = 1; k < 30; ++k) {
    EXPECT_GE(pi[static_cast<Eigen::Index>((k - 1) * S + 2)], pi[static_cast<Eigen::Index>(k * S + 2)]);
  }
}

TEST(Cache, ExactBudget) {
  cache::ExactOptions opt;
  opt.budget = 10.0;
  EXPECT_THROW(cache::exact_steady_state(cache::zipf_config(10, 0.5, 0.3, 2), opt), CapacityError);
}

TEST(Cache, ErrorMetric) {
  const auto cfg = cache::zipf_config(10, 0.5, 0.3, 2);
  const auto exact = cache::exact_steady_state(cfg);
  EXPECT_EQ(cache::cache_error(exact, exact, 10), 0.0);
  StateVector shifted = exact;
  shifted[1] += 0.1;
  shifted[0] -= 0.1;
  EXPECT_NEAR(cache::cache_error(shifted, exact, 10), 0.01, 1e-15);
  EXPECT_THROW(cache::cache_error(exact, StateVector::Zero(3), 10), ModelError);
}

TEST(Cache, TableRowForTenObjects) {
  const auto cfg = cache::zipf_config(10, 0.5, 0.3, 2);
  const auto exact = cache::exact_steady_state(cfg);
  const auto fp = fixed_point(cache::build_random_m(cfg), cache::occupancy_state(cfg));
  EXPECT_NEAR(cache::cache_error(fp.x, exact, 10), 0.0142, 0.0142 * 0.05);
}

TEST(Cache, ListPopularity) {
  const std::vector<double> lambdas{1.0, 0.5, 0.25};
  const auto m = cache::build_random_m({lambdas, {1}});
  const auto outside = encode(m, ObjectAssignment{0, 0, 0});
  const auto pop = cache::list_popularity(lambdas, outside);
  EXPECT_DOUBLE_EQ(pop[0], 1.75);
  EXPECT_DOUBLE_EQ(pop[1], 0.0);

  Rng rng(61);
  const auto x = ht::random_simplex_point(3, 2, rng);
  const auto p = cache::list_popularity(lambdas, x);
  EXPECT_NEAR(p[0] + p[1], 1.75, 1e-14);
  EXPECT_THROW(cache::list_popularity(lambdas, StateVector::Zero(4)), ModelError);
}

TEST(Cache, SteadyStateIsScaleInvariant) {
  const auto base = cache::zipf_config(12, 0.5, 0.3, 2);
  const auto scaled = cache::zipf_config(12, 0.5, 0.3, 2, 7.3);
  const auto fp = fixed_point(cache::build_random_m(base), cache::occupancy_state(base));
  const auto fps = fixed_point(cache::build_random_m(scaled), cache::occupancy_state(scaled));
  EXPECT_LE((fp.x - fps.x).lpNorm<Eigen::Infinity>(), 1e-9);
  const auto v = refined_steady_state(cache::build_random_m(base), fp.x).state.v;
  const auto vs = refined_steady_state(cache::build_random_m(scaled), fps.x).state.v;
  EXPECT_LE((v - vs).lpNorm<Eigen::Infinity>(), 1e-9);
  EXPECT_LE((cache::exact_steady_state(base) - cache::exact_steady_state(scaled)).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Cache, OccupancyStartingPoint) {
  const auto cfg = cache::zipf_config(10, 0.5, 0.3, 2);
  const auto x = cache::occupancy_state(cfg);
  const auto m = cache::build_random_m(cfg);
  EXPECT_LE(mass_defect(m, x), 1e-15);
  EXPECT_NEAR(x[1], 0.3, 1e-15);
  EXPECT_NEAR(x[2], 0.3, 1e-15);
  const auto a = cache::default_assignment(cfg);
  EXPECT_EQ(std::count(a.begin(), a.end(), 1u), 3);
  EXPECT_EQ(std::count(a.begin(), a.end(), 2u), 3);
  EXPECT_EQ(a.back(), 1u);
}
