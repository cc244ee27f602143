#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "miafdr/experiments.hpp"
#include "miafdr/metrics.hpp"

namespace miafdr {
namespace {

using M = Membership;

TEST(AurocTest, PerfectAndReversedSeparation) {
  const std::vector<double> s{0.9, 0.8, 0.2, 0.1};
  const std::vector<M> t{M::member, M::member, M::non_member, M::non_member};
  EXPECT_DOUBLE_EQ(auroc(s, t), 1.0);
  const std::vector<M> r{M::non_member, M::non_member, M::member, M::member};
  EXPECT_DOUBLE_EQ(auroc(s, r), 0.0);
}

TEST(AurocTest, TiesCountHalf) {
  const std::vector<double> s{0.5, 0.5};
  const std::vector<M> t{M::member, M::non_member};
  EXPECT_DOUBLE_EQ(auroc(s, t), 0.5);
  // One member above both non-members, one tied with one: (2 + 1.5) / 4.
  const std::vector<double> s2{0.9, 0.4, 0.4, 0.1};
  const std::vector<M> t2{M::member, M::member, M::non_member, M::non_member};
  EXPECT_DOUBLE_EQ(auroc(s2, t2), 3.5 / 4.0);
}

TEST(AurocTest, MatchesPairCounting) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> level(0, 9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(40);
    std::vector<M> t(40);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = level(rng);
      t[i] = i % 3 == 0 ? M::member : M::non_member;
    }
    double wins = 0.0, pairs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = 0; j < s.size(); ++j)
        if (t[i] == M::member && t[j] == M::non_member) {
          pairs += 1.0;
          wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    EXPECT_NEAR(auroc(s, t), wins / pairs, 1e-12);
  }
}

TEST(AurocTest, RandomScoresNearHalf) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> uni;
  std::vector<double> s(20000);
  std::vector<M> t(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = uni(rng);
    t[i] = i % 2 ? M::member : M::non_member;
  }
  EXPECT_NEAR(auroc(s, t), 0.5, 0.02);
}

TEST(AurocTest, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  std::vector<double> s(500), e(500);
  std::vector<M> t(500);
  for (std::size_t i = 0; i < s.size(); ++i) {
    t[i] = i % 2 ? M::member : M::non_member;
    s[i] = normal(rng) + (t[i] == M::member ? 1.0 : 0.0);
    e[i] = std::exp(3.0 * s[i]) + 7.0;
  }
  EXPECT_DOUBLE_EQ(auroc(s, t), auroc(e, t));
}

TEST(AurocTest, SingleClassIsRejected) {
  const std::vector<double> s{0.1, 0.2};
  EXPECT_THROW(auroc(s, std::vector<M>{M::member, M::member}), ContractError);
  EXPECT_THROW(auroc(s, std::vector<M>{M::member}), ContractError);
}

TEST(RocTest, CurveAndTprAtFpr) {
  const std::vector<double> s{0.9, 0.8, 0.7, 0.6, 0.5};
  const std::vector<M> t{M::member, M::non_member, M::member, M::member, M::non_member};
  const auto roc = roc_curve(s, t);
  ASSERT_EQ(roc.size(), 6u);
  EXPECT_EQ(roc.front().fpr, 0.0);
  EXPECT_EQ(roc.front().tpr, 0.0);
  EXPECT_DOUBLE_EQ(roc[1].tpr, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(roc[2].fpr, 0.5);
  EXPECT_EQ(roc.back().fpr, 1.0);
  EXPECT_EQ(roc.back().tpr, 1.0);
  for (std::size_t i = 1; i < roc.size(); ++i) {
    EXPECT_GE(roc[i].fpr, roc[i - 1].fpr);
    EXPECT_GE(roc[i].tpr, roc[i - 1].tpr);
  }
  EXPECT_DOUBLE_EQ(tpr_at_fpr(roc, 0.0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(tpr_at_fpr(roc, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(accuracy_at(s, t, 0.75), 0.4);

  const AttackMetrics m = compute_metrics(s, t, 0.75);
  EXPECT_DOUBLE_EQ(m.auroc, auroc(s, t));
  EXPECT_DOUBLE_EQ(m.tpr_at_fpr[2], 1.0 / 3.0);
}

TEST(MemberScoresTest, NegatesAndPreservesRanking) {
  const std::vector<double> p{0.01, 0.5, 1.0};
  EXPECT_EQ(member_scores(p), (std::vector<double>{-0.01, -0.5, -1.0}));
}

TEST(SyntheticTest, CountsAndDeterminism) {
  SyntheticSpec spec;
  spec.n_calibration = 30;
  spec.n_test = 100;
  spec.pi0 = 0.5;
  spec.seed = 9;
  const SyntheticDraw a = generate_synthetic(spec, 3);
  EXPECT_EQ(a.calibration.size(), 30u);
  EXPECT_EQ(std::count(a.truth.begin(), a.truth.end(), M::non_member), 50);
  const SyntheticDraw b = generate_synthetic(spec, 3);
  EXPECT_EQ(a.test, b.test);
  EXPECT_EQ(a.truth, b.truth);
  EXPECT_NE(generate_synthetic(spec, 4).test, a.test);

  spec.pi0 = 1.0;
  const SyntheticDraw all_null = generate_synthetic(spec, 0);
  EXPECT_EQ(std::count(all_null.truth.begin(), all_null.truth.end(), M::non_member), 100);

  spec.pi0 = 1.5;
  EXPECT_THROW(generate_synthetic(spec), ContractError);
}

TEST(SyntheticTest, MemberScoresAreShifted) {
  SyntheticSpec spec;
  spec.n_test = 20000;
  spec.member_shift = 2.0;
  const SyntheticDraw d = generate_synthetic(spec, 0);
  double members = 0.0, nulls = 0.0;
  for (std::size_t i = 0; i < d.test.size(); ++i) (d.truth[i] == M::member ? members : nulls) += d.test[i];
  EXPECT_NEAR(members / 10000.0, -2.0, 0.05);
  EXPECT_NEAR(nulls / 10000.0, 0.0, 0.05);
}

TEST(ExperimentTest, PValueValidityCurveWithinBound) {
  SyntheticSpec spec;
  spec.n_calibration = 100;
  spec.n_test = 1;
  spec.pi0 = 1.0;
  spec.n_trials = 5000;
  spec.seed = 6;
  const GuaranteeCurve c = pvalue_validity_experiment(spec, default_t1_alphas());
  ASSERT_EQ(c.size(), default_t1_alphas().size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_EQ(c.bounds[i], c.alphas[i]);
    EXPECT_LE(c.rates[i], c.alphas[i] + 3 * c.stderrs[i]);
    EXPECT_GT(c.stderrs[i], 0.0);
  }
  EXPECT_EQ(pvalue_validity_experiment(spec, default_t1_alphas()).rates, c.rates);

  spec.pi0 = 0.0;
  EXPECT_THROW(pvalue_validity_experiment(spec, default_t1_alphas()), ContractError);
}

TEST(ExperimentTest, FdrControlCurveWithinBound) {
  SyntheticSpec spec;
  spec.n_calibration = 300;
  spec.n_test = 100;
  spec.pi0 = 0.25;
  spec.n_trials = 300;
  spec.seed = 7;
  const GuaranteeCurve c = fdr_control_experiment(spec, default_t2_alphas());
  for (std::size_t i = 0; i < c.size(); ++i) {
    EXPECT_DOUBLE_EQ(c.bounds[i], c.alphas[i] * 0.25);
    EXPECT_LE(c.rates[i], c.bounds[i] + 3 * c.stderrs[i]);
  }
  EXPECT_THROW(fdr_control_experiment(spec, std::vector<double>{}), ContractError);
  EXPECT_THROW(fdr_control_experiment(spec, std::vector<double>{1.0}), ContractError);
}

TEST(ExperimentTest, CurveCsv) {
  GuaranteeCurve c;
  c.alphas = {0.1};
  c.rates = {0.05};
  c.stderrs = {0.01};
  c.bounds = {0.1};
  std::ostringstream os;
  write_curve_csv(c, os);
  EXPECT_EQ(os.str(), "alpha,rate,stderr,bound\n0.1,0.05,0.01,0.1\n");
}

}  // namespace
}  // namespace miafdr
