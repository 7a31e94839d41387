#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace fixtures {

/// Minimum warping-path cost by enumerating every monotone path explicitly.
inline double dtw_brute_force(const std::vector<double>& a, const std::vector<double>& b) {
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, std::size_t, double)> walk = [&](std::size_t i, std::size_t j, double cost) {
    cost += std::abs(a[i] - b[j]);
    if (i + 1 == a.size() && j + 1 == b.size()) {
      best = std::min(best, cost);
      return;
    }
    if (i + 1 < a.size()) walk(i + 1, j, cost);
    if (j + 1 < b.size()) walk(i, j + 1, cost);
    if (i + 1 < a.size() && j + 1 < b.size()) walk(i + 1, j + 1, cost);
  };
  walk(0, 0, 0.0);
  return best;
}

/// Every sequence over `alphabet` with length 1..max_len.
inline std::vector<std::vector<double>> all_sequences(const std::vector<double>& alphabet, std::size_t max_len) {
  std::vector<std::vector<double>> out;
  std::vector<std::vector<double>> layer = {{}};
  for (std::size_t len = 1; len <= max_len; ++len) {
    std::vector<std::vector<double>> next;
    for (const auto& prefix : layer) {
      for (double v : alphabet) {
        auto seq = prefix;
        seq.push_back(v);
        next.push_back(std::move(seq));
      }
    }
    out.insert(out.end(), next.begin(), next.end());
    layer = std::move(next);
  }
  return out;
}

}  // namespace fixtures
