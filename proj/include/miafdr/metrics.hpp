#pragma once

// Attack evaluation metrics. All functions take "membership scores" where a
// higher value means "more likely a member"; use `member_scores`
// or negate conformity scores before calling.

#include <algorithm>
#include <array>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "miafdr/error.hpp"
#include "miafdr/fdr.hpp"

namespace miafdr {

struct RocPoint {
  double threshold = 0.0;  // predict member when score >= threshold
  double fpr = 0.0;
  double tpr = 0.0;

  bool operator==(const RocPoint&) const = default;
};

inline constexpr std::array<double, 3> kFprGrid{0.001, 0.01, 0.1};

struct AttackMetrics {
  double accuracy = 0.0;
  double auroc = 0.0;
  std::vector<RocPoint> roc;
  std::array<double, kFprGrid.size()> tpr_at_fpr{};
};

/// Negates p-values or conformity scores (small = member-like) so that larger
/// means more member-like, the orientation the ROC helpers expect.
inline std::vector<double> member_scores(std::span<const double> p) {
  std::vector<double> out(p.size());
  std::transform(p.begin(), p.end(), out.begin(), [](double v) { return -v; });
  return out;
}

namespace detail {

inline std::pair<std::size_t, std::size_t> class_counts(std::span<const Membership> truth) {
  const auto members =
      static_cast<std::size_t>(std::count(truth.begin(), truth.end(), Membership::member));
  return {members, truth.size() - members};
}

inline void check_metric_inputs(std::span<const double> scores, std::span<const Membership> truth) {
  require(scores.size() == truth.size(), "scores and truth differ in length");
  const auto [members, non_members] = class_counts(truth);
  require(members > 0 && non_members > 0, "metrics need both members and non-members");
}

}  // namespace detail

/// Mann-Whitney estimate of P(member score > non-member score), ties count
/// one half (mid-ranks).
inline double auroc(std::span<const double> scores, std::span<const Membership> truth) {
  detail::check_metric_inputs(scores, truth);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double member_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (truth[order[k]] == Membership::member) member_rank_sum += mid_rank;
    i = j;
  }
  const auto [members, non_members] = detail::class_counts(truth);
  const double m = static_cast<double>(members);
  const double n = static_cast<double>(non_members);
  return (member_rank_sum - m * (m + 1.0) / 2.0) / (m * n);
}

/// One point per distinct threshold, from the highest score down, preceded
/// by the (0, 0) corner.
inline std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                       std::span<const Membership> truth) {
  detail::check_metric_inputs(scores, truth);
  const auto [members, non_members] = detail::class_counts(truth);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::vector<RocPoint> roc;
  roc.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    while (i < order.size() && scores[order[i]] == threshold) {
      if (truth[order[i]] == Membership::member) ++tp; else ++fp;
      ++i;
    }
    roc.push_back({threshold, static_cast<double>(fp) / static_cast<double>(non_members),
                   static_cast<double>(tp) / static_cast<double>(members)});
  }
  return roc;
}

/// Largest TPR among ROC points whose FPR does not exceed `max_fpr`.
inline double tpr_at_fpr(std::span<const RocPoint> roc, double max_fpr) {
  double best = 0.0;
  for (const RocPoint& p : roc)
    if (p.fpr <= max_fpr) best = std::max(best, p.tpr);
  return best;
}

/// Fraction classified correctly when "member" means score >= threshold.
inline double accuracy_at(std::span<const double> scores, std::span<const Membership> truth,
                          double threshold) {
  detail::require(scores.size() == truth.size() && !scores.empty(), "bad accuracy inputs");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool says_member = scores[i] >= threshold;
    hits += says_member == (truth[i] == Membership::member) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

inline AttackMetrics compute_metrics(std::span<const double> scores,
                                     std::span<const Membership> truth, double threshold) {
  AttackMetrics m;
  m.auroc = auroc(scores, truth);
  m.roc = roc_curve(scores, truth);
  m.accuracy = accuracy_at(scores, truth, threshold);
  for (std::size_t i = 0; i < kFprGrid.size(); ++i) m.tpr_at_fpr[i] = tpr_at_fpr(m.roc, kFprGrid[i]);
  return m;
}

}  // namespace miafdr
