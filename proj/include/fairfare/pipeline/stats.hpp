#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace fairfare::pipeline {

struct MannWhitneyResult {
  double u = 0.0;  // U statistic of the first sample
  double p_value = 1.0;  // two-sided
  std::string method;
};

// Two-sided Mann-Whitney U. Small combined samples (<= 60) use the exact
// permutation distribution of the mid-rank sum, which stays exact with
// ties; larger ones the tie-corrected normal approximation with
// continuity correction. Both samples must be non-empty.
MannWhitneyResult mann_whitney_u(std::span<double const> a, std::span<double const> b);

inline constexpr std::size_t kExactMannWhitneyLimit = 60;

struct HistogramBin {
  double lower = 0.0;
  std::size_t count = 0;

  friend bool operator==(HistogramBin const&, HistogramBin const&) = default;
};

// Half-open bins [k*w, (k+1)*w), ascending, empty bins omitted.
std::vector<HistogramBin> histogram(std::span<double const> values, double bin_width);

// Center of the most populated bin; ties go to the lower bin.
double mode_estimate(std::span<double const> values, double bin_width);

}  // namespace fairfare::pipeline
