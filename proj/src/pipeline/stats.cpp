#include "fairfare/pipeline/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>

#include "fairfare/error.hpp"

namespace fairfare::pipeline {

namespace {

// Doubled mid-ranks keep tied ranks integral.
std::vector<std::int64_t> doubled_midranks(std::vector<double> const& pooled,
                                           std::vector<std::size_t>& order,
                                           double& tie_term) {
  std::size_t const n = pooled.size();
  order.resize(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return pooled[x] < pooled[y]; });
  std::vector<std::int64_t> ranks(n);
  tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    auto const r2 = static_cast<std::int64_t>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r2;
    double const t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  return ranks;
}

double exact_p(std::vector<std::int64_t> const& ranks, std::size_t na, std::int64_t observed2) {
  std::int64_t const total = std::accumulate(ranks.begin(), ranks.end(), std::int64_t{0});
  // ways[k][s]: subsets of size k with doubled rank sum s.
  std::vector<std::vector<double>> ways(na + 1, std::vector<double>(static_cast<std::size_t>(total) + 1, 0.0));
  ways[0][0] = 1.0;
  std::int64_t reach = 0;
  for (std::int64_t r : ranks) {
    reach += r;
    for (std::size_t k = na; k >= 1; --k) {
      auto& row = ways[k];
      auto const& prev = ways[k - 1];
      for (std::int64_t s = reach; s >= r; --s) {
        row[static_cast<std::size_t>(s)] += prev[static_cast<std::size_t>(s - r)];
      }
    }
  }
  std::int64_t const n = static_cast<std::int64_t>(ranks.size());
  std::int64_t const center2 = static_cast<std::int64_t>(na) * (n + 1);
  std::int64_t const dev = std::llabs(observed2 - center2);
  double extreme = 0.0;
  double all = 0.0;
  for (std::int64_t s = 0; s <= total; ++s) {
    double const w = ways[na][static_cast<std::size_t>(s)];
    if (w == 0.0) continue;
    all += w;
    if (std::llabs(s - center2) >= dev) extreme += w;
  }
  return std::min(1.0, extreme / all);
}

}  // namespace

MannWhitneyResult mann_whitney_u(std::span<double const> a, std::span<double const> b) {
  if (a.empty() || b.empty()) {
    throw Error(ErrorCode::contract_violation, "mann_whitney_u needs two non-empty samples");
  }
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  for (double v : pooled) {
    if (!std::isfinite(v)) throw Error(ErrorCode::contract_violation, "non-finite sample value");
  }
  std::vector<std::size_t> order;
  double tie_term = 0.0;
  auto const ranks = doubled_midranks(pooled, order, tie_term);
  std::int64_t rank_sum2 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) rank_sum2 += ranks[i];

  double const na = static_cast<double>(a.size());
  double const nb = static_cast<double>(b.size());
  double const n = na + nb;
  MannWhitneyResult result;
  result.u = static_cast<double>(rank_sum2) / 2.0 - na * (na + 1.0) / 2.0;

  if (pooled.size() <= kExactMannWhitneyLimit) {
    result.method = "mann-whitney-u exact";
    result.p_value = exact_p(ranks, a.size(), rank_sum2);
    return result;
  }
  result.method = "mann-whitney-u normal approximation";
  double const mean = na * nb / 2.0;
  double const var = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  if (var <= 0.0) {
    result.p_value = 1.0;
    return result;
  }
  double const z = std::max(0.0, std::fabs(result.u - mean) - 0.5) / std::sqrt(var);
  result.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return result;
}

namespace {

std::int64_t bin_index(double v, double width) {
  // Tolerates representation error such as 0.3 / 0.1 = 2.9999999999999996.
  return static_cast<std::int64_t>(std::floor(v / width + 1e-9));
}

}  // namespace

std::vector<HistogramBin> histogram(std::span<double const> values, double bin_width) {
  if (!(bin_width > 0.0)) throw Error(ErrorCode::contract_violation, "bin width must be positive");
  std::map<std::int64_t, std::size_t> counts;
  for (double v : values) ++counts[bin_index(v, bin_width)];
  std::vector<HistogramBin> out;
  out.reserve(counts.size());
  for (auto const& [k, c] : counts) {
    out.push_back(HistogramBin{static_cast<double>(k) * bin_width, c});
  }
  return out;
}

double mode_estimate(std::span<double const> values, double bin_width) {
  if (values.empty()) throw Error(ErrorCode::contract_violation, "mode of an empty sample");
  auto const bins = histogram(values, bin_width);
  auto best = bins.begin();
  for (auto it = bins.begin(); it != bins.end(); ++it) {
    if (it->count > best->count) best = it;
  }
  return best->lower + bin_width / 2.0;
}

}  // namespace fairfare::pipeline
