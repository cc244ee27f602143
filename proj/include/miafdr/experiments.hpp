#pragma once

// Synthetic score generators and the Monte Carlo experiments that check the
// marginal p-value guarantee and FDR control of the conformal + step-up path.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "miafdr/conformal.hpp"
#include "miafdr/error.hpp"
#include "miafdr/fdr.hpp"
#include "miafdr/rng.hpp"

namespace miafdr {

struct SyntheticSpec {
  std::size_t n_calibration = 1000;
  std::size_t n_test = 200;
  double pi0 = 0.5;
  double member_shift = 2.0;  // members ~ N(-shift, 1), non-members ~ N(0, 1)
  std::size_t n_trials = 1000;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(n_calibration >= 1 && n_test >= 1 && n_trials >= 1, "counts must be >= 1");
    detail::require(pi0 >= 0.0 && pi0 <= 1.0, "pi0 must lie in [0, 1]");
    detail::require(std::isfinite(member_shift), "member_shift must be finite");
  }

  std::size_t n_test_non_members() const {
    return static_cast<std::size_t>(std::llround(pi0 * static_cast<double>(n_test)));
  }
};

struct SyntheticDraw {
  std::vector<double> calibration;
  std::vector<double> test;
  std::vector<Membership> truth;
};

/// One draw of calibration and test conformity scores. Non-member scores are
/// standard normal, member scores N(-member_shift, 1), and exactly
/// round(pi0 * n_test) test samples are non-members (positions shuffled).
/// `trial` selects an independent stream under the same spec seed.
inline SyntheticDraw generate_synthetic(const SyntheticSpec& spec, std::uint64_t trial = 0) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, stream::kTrial, trial));
  std::normal_distribution<double> normal(0.0, 1.0);
  SyntheticDraw draw;
  draw.calibration.resize(spec.n_calibration);
  for (double& c : draw.calibration) c = normal(rng);

  const std::size_t nulls = spec.n_test_non_members();
  draw.truth.assign(spec.n_test, Membership::member);
  std::fill_n(draw.truth.begin(), nulls, Membership::non_member);
  std::shuffle(draw.truth.begin(), draw.truth.end(), rng);
  draw.test.resize(spec.n_test);
  for (std::size_t i = 0; i < spec.n_test; ++i) {
    const double centre = draw.truth[i] == Membership::member ? -spec.member_shift : 0.0;
    draw.test[i] = centre + normal(rng);
  }
  return draw;
}

/// Empirical rate per significance level, its Monte Carlo standard error and
/// the level it is meant to stay under.
struct GuaranteeCurve {
  std::vector<double> alphas;
  std::vector<double> rates;
  std::vector<double> stderrs;
  std::vector<double> bounds;

  std::size_t size() const noexcept { return alphas.size(); }
};

inline void write_curve_csv(const GuaranteeCurve& curve, std::ostream& os) {
  os << "alpha,rate,stderr,bound\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    os << detail::format_double(curve.alphas[i]) << ',' << detail::format_double(curve.rates[i])
       << ',' << detail::format_double(curve.stderrs[i]) << ','
       << detail::format_double(curve.bounds[i]) << '\n';
  }
}

inline const std::vector<double>& default_t1_alphas() {
  static const std::vector<double> grid{0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
  return grid;
}

inline const std::vector<double>& default_t2_alphas() {
  static const std::vector<double> grid{0.05, 0.1, 0.15, 0.2, 0.25, 0.3};
  return grid;
}

namespace detail {

inline void check_alpha_grid(std::span<const double> alphas) {
  require(!alphas.empty(), "alpha grid is empty");
  for (double a : alphas) (void)SignificanceLevel(a);
}

// Sum and sum of squares of per-trial values, reduced to mean and standard
// error of the mean.
struct Accumulator {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return n == 0 ? 0.0 : sum / static_cast<double>(n); }
  double stderr_of_mean() const {
    if (n < 2) return 0.0;
    const double m = mean();
    const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) / static_cast<double>(n - 1));
    return std::sqrt(var / static_cast<double>(n));
  }
};

}  // namespace detail

/// Frequency of {p <= alpha} among true non-members, using raw (unadjusted)
/// conformal p-values. The rate pools every non-member across trials; the
/// standard error comes from the spread of per-trial rates, so it accounts
/// for test points that share a calibration draw.
inline GuaranteeCurve pvalue_validity_experiment(const SyntheticSpec& spec, std::span<const double> alphas) {
  spec.validate();
  detail::check_alpha_grid(alphas);
  detail::require(spec.n_test_non_members() >= 1, "experiment needs at least one non-member per trial");

  const std::size_t k = alphas.size();
  std::vector<std::size_t> hits(k, 0);
  std::vector<detail::Accumulator> per_trial(k);
  std::size_t total_nulls = 0;

  for (std::size_t trial = 0; trial < spec.n_trials; ++trial) {
    const SyntheticDraw draw = generate_synthetic(spec, trial);
    const CalibrationScores calib = build_calibration(draw.calibration);
    std::vector<std::size_t> trial_hits(k, 0);
    std::size_t trial_nulls = 0;
    for (std::size_t i = 0; i < draw.test.size(); ++i) {
      if (draw.truth[i] != Membership::non_member) continue;
      ++trial_nulls;
      const double p = conformal_pvalue(calib, draw.test[i]);
      for (std::size_t a = 0; a < k; ++a)
        if (p <= alphas[a]) ++trial_hits[a];
    }
    total_nulls += trial_nulls;
    for (std::size_t a = 0; a < k; ++a) {
      hits[a] += trial_hits[a];
      per_trial[a].add(static_cast<double>(trial_hits[a]) / static_cast<double>(trial_nulls));
    }
  }

  GuaranteeCurve curve;
  for (std::size_t a = 0; a < k; ++a) {
    curve.alphas.push_back(alphas[a]);
    curve.rates.push_back(static_cast<double>(hits[a]) / static_cast<double>(total_nulls));
    curve.stderrs.push_back(per_trial[a].stderr_of_mean());
    curve.bounds.push_back(alphas[a]);
  }
  return curve;
}

/// Mean realized FDR of the full conformal -> adjust -> decide path per
/// alpha, with the alpha * pi0 bound.
inline GuaranteeCurve fdr_control_experiment(const SyntheticSpec& spec, std::span<const double> alphas) {
  spec.validate();
  detail::check_alpha_grid(alphas);

  const std::size_t k = alphas.size();
  std::vector<detail::Accumulator> fdr(k);
  for (std::size_t trial = 0; trial < spec.n_trials; ++trial) {
    const SyntheticDraw draw = generate_synthetic(spec, trial);
    const CalibrationScores calib = build_calibration(draw.calibration);
    const AdjustedPValues adj = bh_adjust(batch_pvalues(calib, draw.test));
    for (std::size_t a = 0; a < k; ++a) {
      const DecisionSet d = decide(adj, SignificanceLevel(alphas[a]));
      fdr[a].add(compute_fdr(d, draw.truth).fdr);
    }
  }

  const double pi0 = static_cast<double>(spec.n_test_non_members()) / static_cast<double>(spec.n_test);
  GuaranteeCurve curve;
  for (std::size_t a = 0; a < k; ++a) {
    curve.alphas.push_back(alphas[a]);
    curve.rates.push_back(fdr[a].mean());
    curve.stderrs.push_back(fdr[a].stderr_of_mean());
    curve.bounds.push_back(fdr_bound(SignificanceLevel(alphas[a]), pi0));
  }
  return curve;
}

}  // namespace miafdr
