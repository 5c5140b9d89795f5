#pragma once

#include <algorithm>
#include <vector>

#include "meshsuggest/common.hpp"

namespace meshsuggest {

class EmptyInput : public Error {
 public:
  using Error::Error;
};

/// (s - min) / (max - min); when every score is equal each maps to 1.0.
inline std::vector<double> minmax_normalize(const std::vector<double>& scores) {
  if (scores.empty()) throw EmptyInput("minmax_normalize: empty score list");
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  const double min = *lo;
  const double range = *hi - *lo;
  std::vector<double> out;
  out.reserve(scores.size());
  for (double s : scores) out.push_back(range == 0.0 ? 1.0 : (s - min) / range);
  return out;
}

}  // namespace meshsuggest
