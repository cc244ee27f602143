#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "miafdr/error.hpp"

namespace miafdr {

/// Per-test-sample non-member p-values; position i is original index i.
struct PValueVector {
  std::vector<double> values;

  std::size_t size() const noexcept { return values.size(); }
  bool empty() const noexcept { return values.empty(); }

  void validate() const {
    for (double p : values) {
      detail::require(std::isfinite(p) && p > 0.0 && p <= 1.0, "p-value outside (0, 1]");
    }
  }

  bool operator==(const PValueVector&) const = default;
};

}  // namespace miafdr
