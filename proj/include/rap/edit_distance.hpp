#pragma once

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <ranges>
#include <vector>

namespace rap {

// Unit-cost Levenshtein distance between two ranges. Keeps a single DP row;
// row[j] holds the distance between the first i elements of `a` and the
// first j elements of `b`.
template <std::ranges::forward_range A, std::ranges::forward_range B>
std::size_t levenshtein(const A& a, const B& b) {
  const auto n = static_cast<std::size_t>(std::ranges::distance(b));
  std::vector<std::size_t> row(n + 1);
  for (std::size_t j = 0; j <= n; ++j) row[j] = j;

  std::size_t i = 0;
  for (const auto& x : a) {
    ++i;
    std::size_t diagonal = row[0];
    row[0] = i;
    std::size_t j = 0;
    for (const auto& y : b) {
      ++j;
      const std::size_t above = row[j];
      const std::size_t substitute = diagonal + (x == y ? 0 : 1);
      row[j] = std::min({above + 1, row[j - 1] + 1, substitute});
      diagonal = above;
    }
  }
  return row[n];
}

}  // namespace rap
