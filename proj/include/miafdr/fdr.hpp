#pragma once

// Step-up adjustment of non-member p-values, thresholded membership
// decisions, and realized false-discovery accounting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "miafdr/error.hpp"
#include "miafdr/pvalues.hpp"

namespace miafdr {

class SignificanceLevel {
 public:
  explicit SignificanceLevel(double alpha) : alpha_(alpha) {
    detail::require(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0, 1)");
  }

  double value() const noexcept { return alpha_; }

 private:
  double alpha_;
};

enum class Membership { member, non_member };

struct AdjustedPValues {
  std::vector<double> adjusted;      // aligned to original indices
  std::vector<std::size_t> by_rank;  // original index of the rank-t p-value (ascending)

  std::size_t size() const noexcept { return adjusted.size(); }
};

struct DecisionSet {
  std::vector<std::size_t> rejected;  // ascending original indices, declared members
  std::vector<bool> is_member;        // verdict per original index
  double alpha = 0.0;

  std::size_t size() const noexcept { return is_member.size(); }
  bool operator==(const DecisionSet&) const = default;
};

struct FdrReport {
  std::size_t n_false_positive = 0;
  std::size_t n_true_positive = 0;
  double fdr = 0.0;
  double pi0 = 0.0;
  double bound = 0.0;
  double alpha = 0.0;
  std::size_t n_rejected = 0;
  std::size_t n_tests = 0;

  bool operator==(const FdrReport&) const = default;
};

inline void to_json(nlohmann::json& j, const FdrReport& r) {
  j = nlohmann::json{{"n_fp", r.n_false_positive}, {"n_tp", r.n_true_positive},
                     {"fdr", r.fdr},               {"pi0", r.pi0},
                     {"bound", r.bound},           {"alpha", r.alpha},
                     {"n_rejected", r.n_rejected}, {"n_tests", r.n_tests}};
}

inline void from_json(const nlohmann::json& j, FdrReport& r) {
  j.at("n_fp").get_to(r.n_false_positive);
  j.at("n_tp").get_to(r.n_true_positive);
  j.at("fdr").get_to(r.fdr);
  j.at("pi0").get_to(r.pi0);
  j.at("bound").get_to(r.bound);
  j.at("alpha").get_to(r.alpha);
  j.at("n_rejected").get_to(r.n_rejected);
  j.at("n_tests").get_to(r.n_tests);
}

/// Indices sorted by (p-value, original index).
inline std::vector<std::size_t> rank_order(std::span<const double> p) {
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  return order;
}

/// adjusted^(t) = min(1, min_{m >= t} (n / m) * p^(m)), n = T, computed as a
/// suffix minimum over the ascending ranks and mapped back to input order.
inline AdjustedPValues bh_adjust(const PValueVector& p) {
  detail::require(!p.empty(), "no p-values to adjust");
  p.validate();
  const std::size_t n = p.size();
  AdjustedPValues out;
  out.by_rank = rank_order(p.values);
  out.adjusted.assign(n, 1.0);
  double running = 1.0;
  for (std::size_t m = n; m >= 1; --m) {
    const std::size_t idx = out.by_rank[m - 1];
    const double candidate = static_cast<double>(n) / static_cast<double>(m) * p.values[idx];
    running = std::min(running, candidate);
    out.adjusted[idx] = running;
  }
  return out;
}

/// Relative slack on the rejection threshold. Conformal p-values are
/// rationals and alpha is usually a short decimal, so (n / m) * p == alpha
/// happens exactly in real arithmetic yet can land an ulp or two either side
/// in doubles. The slack keeps such ties on the rejecting side.
inline constexpr double kDecisionSlack = 16.0 * std::numeric_limits<double>::epsilon();

/// Reject (declare member) every sample whose adjusted p-value is <= alpha.
inline DecisionSet decide(const AdjustedPValues& adj, SignificanceLevel alpha) {
  DecisionSet d;
  d.alpha = alpha.value();
  d.is_member.assign(adj.size(), false);
  const double threshold = alpha.value() * (1.0 + kDecisionSlack);
  for (std::size_t i = 0; i < adj.size(); ++i) {
    if (adj.adjusted[i] <= threshold) {
      d.is_member[i] = true;
      d.rejected.push_back(i);
    }
  }
  return d;
}

/// Upper bound alpha * pi0 on the expected FDR.
inline double fdr_bound(SignificanceLevel alpha, double pi0) {
  detail::require(pi0 >= 0.0 && pi0 <= 1.0, "pi0 must lie in [0, 1]");
  return alpha.value() * pi0;
}

inline FdrReport compute_fdr(const DecisionSet& d, std::span<const Membership> truth) {
  if (truth.size() != d.size()) {
    throw ContractError("truth has " + std::to_string(truth.size()) + " labels for " +
                        std::to_string(d.size()) + " decisions");
  }
  FdrReport r;
  r.n_tests = d.size();
  r.n_rejected = d.rejected.size();
  r.alpha = d.alpha;
  for (std::size_t i : d.rejected) {
    if (truth[i] == Membership::non_member)
      ++r.n_false_positive;
    else
      ++r.n_true_positive;
  }
  r.fdr = static_cast<double>(r.n_false_positive) /
          static_cast<double>(std::max<std::size_t>(1, r.n_rejected));
  const auto nulls = static_cast<std::size_t>(
      std::count(truth.begin(), truth.end(), Membership::non_member));
  r.pi0 = truth.empty() ? 0.0 : static_cast<double>(nulls) / static_cast<double>(truth.size());
  r.bound = d.alpha * r.pi0;
  return r;
}

}  // namespace miafdr
