#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "miafdr/error.hpp"
#include "miafdr/rng.hpp"

namespace miafdr {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  void append_row(std::span<const double> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    detail::require(values.size() == cols_, "row width mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Features plus integer class labels in [0, num_classes). Each row carries a
/// stable sample id so that derived subsets can be checked for disjointness.
struct LabeledDataset {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::size_t> ids;
  int num_classes = 0;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  bool empty() const noexcept { return labels.empty(); }

  void push_back(std::span<const double> x, int label, std::size_t id) {
    features.append_row(x);
    labels.push_back(label);
    ids.push_back(id);
  }

  /// Throws ContractError when an invariant does not hold.
  void validate() const {
    detail::require(features.rows() == labels.size(), "feature rows != label count");
    detail::require(ids.size() == labels.size(), "id count != label count");
    detail::require(num_classes >= 1, "num_classes must be >= 1");
    detail::require(empty() || dim() >= 1, "feature dimension must be >= 1");
    for (int y : labels) {
      detail::require(y >= 0 && y < num_classes,
                      "label " + std::to_string(y) + " outside [0, " +
                          std::to_string(num_classes) + ")");
    }
    for (double v : features.data()) detail::require(std::isfinite(v), "non-finite feature value");
  }

  /// Rows at the given positions (not ids), in the given order.
  LabeledDataset select(std::span<const std::size_t> positions) const {
    LabeledDataset out;
    out.num_classes = num_classes;
    out.features = Matrix(0, dim());
    for (std::size_t p : positions) out.push_back(features.row(p), labels[p], ids[p]);
    return out;
  }

  bool operator==(const LabeledDataset&) const = default;
};

/// Two-class Gaussian task: class 0 centred at (-mean_offset, ...), class 1 at
/// (+mean_offset, ...), unit variance per dimension, balanced labels
/// (alternating before any shuffle). Ids start at `first_id`.
inline LabeledDataset make_two_gaussians(std::size_t n, std::size_t dim, double mean_offset,
                                         std::uint64_t seed, std::size_t first_id = 0) {
  detail::require(dim >= 1, "dimension must be >= 1");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  LabeledDataset data;
  data.num_classes = 2;
  data.features = Matrix(0, dim);
  std::vector<double> x(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    const double centre = label == 0 ? -mean_offset : mean_offset;
    for (double& v : x) v = centre + normal(rng);
    data.push_back(x, label, first_id + i);
  }
  return data;
}

}  // namespace miafdr
