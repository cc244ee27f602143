#pragma once

// Non-member conformity scores and split-conformal p-values against a frozen
// calibration multiset.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "miafdr/error.hpp"
#include "miafdr/mlp.hpp"
#include "miafdr/pvalues.hpp"

namespace miafdr {

/// Weight between the logit-transformed and raw classifier probability.
class LambdaWeight {
 public:
  static constexpr double kDefault = 0.5;

  LambdaWeight() = default;
  explicit LambdaWeight(double value) : value_(value) {
    detail::require(value >= 0.0 && value <= 1.0, "lambda must lie in [0, 1]");
  }

  double value() const noexcept { return value_; }

 private:
  double value_ = kDefault;
};

/// Probabilities are clamped to [eps, 1 - eps] before the logit.
inline constexpr double kLogitClamp = 1e-7;

/// lambda * log(f / (1 - f)) + (1 - lambda) * f with f clamped away from 0/1.
/// Larger means more non-member-like.
inline double conformity_score(double f_bc, LambdaWeight lambda) {
  detail::require(std::isfinite(f_bc), "classifier probability is not finite");
  detail::require(f_bc >= 0.0 && f_bc <= 1.0, "classifier probability outside [0, 1]");
  const double f = std::clamp(f_bc, kLogitClamp, 1.0 - kLogitClamp);
  const double w = lambda.value();
  return w * std::log(f / (1.0 - f)) + (1.0 - w) * f;
}

/// Sorted multiset of non-member conformity scores. Scores are collected with
/// `add`, then `freeze` sorts them once; p-value queries require a frozen set.
class CalibrationScores {
 public:
  void add(double score) {
    detail::require(!frozen_, "calibration set is frozen");
    detail::require(std::isfinite(score), "calibration score is not finite");
    scores_.push_back(score);
  }

  void freeze() {
    detail::require(!scores_.empty(), "calibration set is empty");
    if (!frozen_) std::sort(scores_.begin(), scores_.end());
    frozen_ = true;
  }

  bool frozen() const noexcept { return frozen_; }
  std::size_t size() const noexcept { return scores_.size(); }
  std::span<const double> scores() const noexcept { return scores_; }

  /// Number of stored scores <= s (binary search for the rightmost such score).
  std::size_t count_at_most(double s) const {
    require_frozen();
    return static_cast<std::size_t>(std::upper_bound(scores_.begin(), scores_.end(), s) -
                                    scores_.begin());
  }

  void require_frozen() const { detail::require(frozen_, "calibration set is not frozen"); }

  bool operator==(const CalibrationScores&) const = default;

 private:
  std::vector<double> scores_;
  bool frozen_ = false;
};

inline CalibrationScores build_calibration(std::span<const double> raw_scores) {
  detail::require(!raw_scores.empty(), "calibration input is empty");
  CalibrationScores calib;
  for (double s : raw_scores) calib.add(s);
  calib.freeze();
  return calib;
}

/// (1 + #{c <= s}) / (1 + |C|): the test score counts itself.
inline double conformal_pvalue(const CalibrationScores& calib, double s) {
  detail::require(std::isfinite(s), "test score is not finite");
  const std::size_t below = calib.count_at_most(s);
  return static_cast<double>(below + 1) / static_cast<double>(calib.size() + 1);
}

inline PValueVector batch_pvalues(const CalibrationScores& calib, std::span<const double> scores) {
  calib.require_frozen();
  PValueVector out;
  out.values.reserve(scores.size());
  for (double s : scores) out.values.push_back(conformal_pvalue(calib, s));
  return out;
}

// Calibration text format: a header line
//   # miafdr-calibration v1 lambda=<l> epsilon=<eps> n=<count>
// followed by one score per line in ascending order.

struct StoredCalibration {
  CalibrationScores calibration;
  LambdaWeight lambda;
  double epsilon = kLogitClamp;
};

inline void save_calibration(const CalibrationScores& calib, LambdaWeight lambda,
                             std::ostream& os) {
  calib.require_frozen();
  os << "# miafdr-calibration v1 lambda=" << detail::format_double(lambda.value())
     << " epsilon=" << detail::format_double(kLogitClamp) << " n=" << calib.size() << '\n';
  for (double s : calib.scores()) os << detail::format_double(s) << '\n';
  if (!os) throw IoError("failed writing calibration scores");
}

inline StoredCalibration load_calibration(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ParseError(1, "missing calibration header");
  std::istringstream header(line);
  std::string hash, tag, version;
  header >> hash >> tag >> version;
  if (hash != "#" || tag != "miafdr-calibration" || version != "v1")
    throw ParseError(1, "not a miafdr-calibration v1 file");
  StoredCalibration out;
  std::size_t expected = 0;
  bool have_n = false;
  for (std::string kv; header >> kv;) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ParseError(1, "bad header field '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    double v = 0.0;
    if (!detail::parse_double(val, v)) throw ParseError(1, "bad header value '" + kv + "'");
    if (key == "lambda") {
      out.lambda = LambdaWeight(v);
    } else if (key == "epsilon") {
      out.epsilon = v;
    } else if (key == "n") {
      expected = static_cast<std::size_t>(v);
      have_n = true;
    }
  }
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    double v = 0.0;
    if (!detail::parse_double(line, v) || !std::isfinite(v))
      throw ParseError(line_no, "bad calibration score '" + line + "'");
    out.calibration.add(v);
  }
  if (have_n && out.calibration.size() != expected)
    throw ParseError(line_no, "header declares " + std::to_string(expected) + " scores, found " +
                                  std::to_string(out.calibration.size()));
  out.calibration.freeze();
  return out;
}

}  // namespace miafdr
