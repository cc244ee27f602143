#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"
#include "miafdr/experiments.hpp"
#include "miafdr/fdr.hpp"
#include "oracles.hpp"

namespace miafdr {
namespace {

std::vector<std::size_t> rejected(const PValueVector& p, double alpha) {
  return decide(bh_adjust(p), SignificanceLevel(alpha)).rejected;
}

TEST(BhAdjustTest, WorkedExample) {
  const PValueVector p{{0.01, 0.04, 0.03, 0.5}};
  const AdjustedPValues adj = bh_adjust(p);
  // sorted 0.01, 0.03, 0.04, 0.5 -> 4*0.01, min(2*0.03, 4/3*0.04), 4/3*0.04, 0.5
  EXPECT_NEAR(adj.adjusted[0], 0.04, 1e-12);
  EXPECT_NEAR(adj.adjusted[1], 0.16 / 3.0, 1e-12);
  EXPECT_NEAR(adj.adjusted[2], 0.16 / 3.0, 1e-12);
  EXPECT_NEAR(adj.adjusted[3], 0.5, 1e-12);
  EXPECT_EQ(adj.by_rank, (std::vector<std::size_t>{0, 2, 1, 3}));
}

TEST(BhAdjustTest, EdgeCases) {
  const AdjustedPValues ones = bh_adjust(PValueVector{{1.0, 1.0, 1.0}});
  for (double a : ones.adjusted) EXPECT_EQ(a, 1.0);
  EXPECT_EQ(bh_adjust(PValueVector{{0.37}}).adjusted[0], 0.37);
  EXPECT_THROW(bh_adjust(PValueVector{}), ContractError);
  EXPECT_THROW(bh_adjust(PValueVector{{0.0, 0.5}}), ContractError);
  EXPECT_THROW(bh_adjust(PValueVector{{0.5, 1.2}}), ContractError);
}

TEST(BhAdjustTest, TiesShareAdjustedValue) {
  const AdjustedPValues adj = bh_adjust(PValueVector{{0.02, 0.3, 0.02, 0.02}});
  EXPECT_EQ(adj.adjusted[0], adj.adjusted[2]);
  EXPECT_EQ(adj.adjusted[0], adj.adjusted[3]);
  EXPECT_EQ(adj.by_rank, (std::vector<std::size_t>{0, 2, 3, 1}));
}

TEST(DecideTest, WorkedExamples) {
  AdjustedPValues adj;
  adj.adjusted = {0.04, 0.16 / 3.0, 0.16 / 3.0, 0.5};
  const DecisionSet d = decide(adj, SignificanceLevel(0.05));
  EXPECT_EQ(d.rejected, (std::vector<std::size_t>{0}));
  EXPECT_EQ(d.is_member, (std::vector<bool>{true, false, false, false}));

  adj.adjusted = {1.0, 1.0};
  EXPECT_TRUE(decide(adj, SignificanceLevel(0.05)).rejected.empty());

  adj.adjusted = {0.05, 0.0500001};
  EXPECT_EQ(decide(adj, SignificanceLevel(0.05)).rejected, (std::vector<std::size_t>{0}));
}

TEST(OracleTest, ClassicStepUpExamples) {
  EXPECT_EQ(oracle::classic_bh(std::vector<double>{0.01, 0.04, 0.03, 0.5}, 0.05), (std::vector<std::size_t>{0}));
  EXPECT_TRUE(oracle::classic_bh(std::vector<double>{1.0, 1.0, 1.0}, 0.05).empty());
  const std::vector<double> tiny(7, 0.05 / 7.0);
  EXPECT_EQ(oracle::classic_bh(tiny, 0.05).size(), 7u);
}

TEST(SignificanceLevelTest, Domain) {
  EXPECT_THROW(SignificanceLevel(0.0), ContractError);
  EXPECT_THROW(SignificanceLevel(1.0), ContractError);
  EXPECT_NO_THROW(SignificanceLevel(0.5));
}

// Property tests over random p-vectors (continuous and on a conformal grid).
TEST(BhPropertyTest, InvariantsOnRandomVectors) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<std::size_t> len(1, 200);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = len(rng);
    PValueVector p;
    for (std::size_t i = 0; i < n; ++i) {
      const double u = uni(rng);
      const double v = trial % 2 ? std::ceil(u * 50.0) / 51.0 : std::max(u * u, 1e-12);
      p.values.push_back(v);
    }
    const AdjustedPValues adj = bh_adjust(p);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GE(adj.adjusted[i], p.values[i]);
      EXPECT_LE(adj.adjusted[i], 1.0);
    }
    for (std::size_t t = 1; t < n; ++t) EXPECT_LE(adj.adjusted[adj.by_rank[t - 1]], adj.adjusted[adj.by_rank[t]]);

    // Rejections grow with alpha.
    const auto small = rejected(p, 0.05);
    const auto large = rejected(p, 0.2);
    EXPECT_TRUE(std::includes(large.begin(), large.end(), small.begin(), small.end()));

    // Permuting the input permutes the rejections.
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    PValueVector q;
    for (std::size_t i = 0; i < n; ++i) q.values.push_back(p.values[perm[i]]);
    std::vector<std::size_t> mapped;
    for (std::size_t i : rejected(q, 0.1)) mapped.push_back(perm[i]);
    std::sort(mapped.begin(), mapped.end());
    EXPECT_EQ(mapped, rejected(p, 0.1));
  }
}

TEST(BhPropertyTest, EquivalentToClassicStepUp) {
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<std::size_t> len(1, 300);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    PValueVector p;
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i) p.values.push_back(std::max(std::pow(uni(rng), 3.0), 1e-300));
    for (double alpha : {0.01, 0.05, 0.1, 0.25}) mismatches += rejected(p, alpha) != oracle::classic_bh(p.values, alpha);
  }
  EXPECT_EQ(mismatches, 0u);
}

// Every vector of length <= 4 over a grid of small fractions, with an exact
// integer-arithmetic oracle. Ties like p = 1/11, T = 3, alpha = 3/11 sit
// exactly on the step-up boundary.
TEST(BhPropertyTest, EquivalentOnExhaustiveRationalGrid) {
  const std::vector<std::int64_t> p_dens{1, 2, 3, 4, 5, 6, 11};
  const std::vector<std::int64_t> a_dens{2, 3, 4, 5, 11, 20};
  const auto grid = oracle::rational_grid(p_dens, true);
  const auto alphas = oracle::rational_grid(a_dens, false);
  std::size_t mismatches = 0, checked = 0;
  for (std::size_t len = 1; len <= 4; ++len) {
    std::vector<std::size_t> idx(len, 0);
    for (;;) {
      std::vector<oracle::Rational> exact;
      PValueVector p;
      for (std::size_t i : idx) {
        exact.push_back(grid[i]);
        p.values.push_back(grid[i].to_double());
      }
      const AdjustedPValues adj = bh_adjust(p);
      for (const oracle::Rational& a : alphas) {
        ++checked;
        if (decide(adj, SignificanceLevel(a.to_double())).rejected != oracle::classic_bh_rational(exact, a))
          ++mismatches;
      }
      std::size_t j = 0;
      while (j < len && ++idx[j] == grid.size()) idx[j++] = 0;
      if (j == len) break;
    }
  }
  EXPECT_GT(checked, 1000000u);
  EXPECT_EQ(mismatches, 0u);
}

TEST(DecideTest, ExactTieRejects) {
  // 3 * 0.1 rounds above 0.3 in doubles.
  ASSERT_GT(3.0 * 0.1, 0.3);
  const PValueVector p{{0.1, 0.9, 0.9}};
  EXPECT_EQ(rejected(p, 0.3), (std::vector<std::size_t>{0}));
  EXPECT_TRUE(rejected(PValueVector{{0.1000001, 0.9, 0.9}}, 0.3).empty());
}

TEST(FdrReportTest, DefinitionExamples) {
  DecisionSet none;
  none.alpha = 0.1;
  none.is_member.assign(4, false);
  const std::vector<Membership> truth{Membership::member, Membership::non_member, Membership::member,
                                      Membership::non_member};
  const FdrReport empty = compute_fdr(none, truth);
  EXPECT_EQ(empty.fdr, 0.0);
  EXPECT_EQ(empty.n_rejected, 0u);
  EXPECT_EQ(empty.pi0, 0.5);
  EXPECT_DOUBLE_EQ(empty.bound, 0.05);

  DecisionSet d;
  d.alpha = 0.2;
  d.is_member = {true, true, true, true, false};
  d.rejected = {0, 1, 2, 3};
  const std::vector<Membership> t2{Membership::member, Membership::non_member, Membership::member,
                                   Membership::member, Membership::non_member};
  const FdrReport r = compute_fdr(d, t2);
  EXPECT_EQ(r.n_false_positive, 1u);
  EXPECT_EQ(r.n_true_positive, 3u);
  EXPECT_DOUBLE_EQ(r.fdr, 0.25);
  EXPECT_DOUBLE_EQ(r.pi0, 0.4);

  EXPECT_THROW(compute_fdr(d, truth), ContractError);
}

TEST(FdrReportTest, JsonFieldNames) {
  FdrReport r{1, 3, 0.25, 0.4, 0.08, 0.2, 4, 5};
  const nlohmann::json j = r;
  for (const char* key : {"n_fp", "n_tp", "fdr", "pi0", "bound", "alpha", "n_rejected", "n_tests"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j.get<FdrReport>(), r);
}

TEST(FdrBoundTest, Product) {
  EXPECT_DOUBLE_EQ(fdr_bound(SignificanceLevel(0.1), 0.5), 0.05);
  EXPECT_DOUBLE_EQ(fdr_bound(SignificanceLevel(0.1), 1.0), 0.1);
  EXPECT_DOUBLE_EQ(fdr_bound(SignificanceLevel(0.1), 0.0), 0.0);
  EXPECT_THROW(fdr_bound(SignificanceLevel(0.1), 1.5), ContractError);
}

// Monte Carlo with independent uniform nulls and stochastically smaller
// alternatives.
TEST(FdrMonteCarloTest, IndependentNullsStayUnderBound) {
  std::mt19937_64 rng(555);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const std::size_t trials = 1000, n = 100;
  for (double pi0 : {0.25, 0.5}) {
    for (double alpha : {0.05, 0.1, 0.15, 0.2}) {
      double sum = 0.0, sum_sq = 0.0;
      for (std::size_t t = 0; t < trials; ++t) {
        PValueVector p;
        std::vector<Membership> truth;
        const auto nulls = static_cast<std::size_t>(pi0 * n);
        for (std::size_t i = 0; i < n; ++i) {
          const bool null = i < nulls;
          const double u = std::max(uni(rng), 1e-300);
          p.values.push_back(null ? u : std::pow(u, 8.0));
          truth.push_back(null ? Membership::non_member : Membership::member);
        }
        const double f = compute_fdr(decide(bh_adjust(p), SignificanceLevel(alpha)), truth).fdr;
        sum += f;
        sum_sq += f * f;
      }
      const double mean = sum / trials;
      const double se = std::sqrt((sum_sq / trials - mean * mean) / trials);
      EXPECT_LE(mean, alpha * pi0 + 3 * se) << "pi0 " << pi0 << " alpha " << alpha;
    }
  }
}

TEST(FdrMonteCarloTest, FixedAlphaFifteenStaysBelowAlpha) {
  SyntheticSpec spec;
  spec.pi0 = 0.5;
  spec.member_shift = 4.0;
  spec.n_trials = 1000;
  spec.seed = 12;
  const std::vector<double> alphas{0.15};
  const GuaranteeCurve c = fdr_control_experiment(spec, alphas);
  EXPECT_LE(c.rates[0], 0.15);
}

}  // namespace
}  // namespace miafdr
