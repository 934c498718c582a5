#include "mgtr/context_search.hpp"

#include <algorithm>
#include <limits>

#include "mgtr/errors.hpp"

namespace mgtr {

Vec2 motion_projected_center(const AgentState& current, double tau) {
  return {current.x + current.vx * tau, current.y + current.vy * tau};
}

namespace {

SearchResult select_by_score(const std::vector<double>& score, const Vec2& center, Index n) {
  const Index total = static_cast<Index>(score.size());
  std::vector<Index> order(static_cast<std::size_t>(total));
  for (Index i = 0; i < total; ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    const double sa = score[static_cast<std::size_t>(a)], sb = score[static_cast<std::size_t>(b)];
    return sa < sb || (sa == sb && a < b);
  });
  SearchResult out;
  out.center = center;
  out.universe = total;
  const Index keep = std::min(n, total);
  out.indices.assign(order.begin(), order.begin() + keep);
  return out;
}

}  // namespace

SearchResult nearest_tokens(const MatX2& refs, const Vec2& center, Index n) {
  if (n < 0) throw ContractError("nearest_tokens: n must be >= 0");
  std::vector<double> score(static_cast<std::size_t>(refs.rows()));
  for (Index i = 0; i < refs.rows(); ++i)
    score[static_cast<std::size_t>(i)] = (refs.row(i).transpose() - center).squaredNorm();
  return select_by_score(score, center, n);
}

SearchResult trajectory_aware_select(const MatX2& refs, const MatX2& waypoints, Index n) {
  if (waypoints.rows() == 0) throw ContractError("trajectory_aware_select: empty trajectory");
  if (n < 0) throw ContractError("trajectory_aware_select: n must be >= 0");
  std::vector<double> score(static_cast<std::size_t>(refs.rows()));
  for (Index i = 0; i < refs.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Index w = 0; w < waypoints.rows(); ++w)
      best = std::min(best, (refs.row(i) - waypoints.row(w)).squaredNorm());
    score[static_cast<std::size_t>(i)] = best;
  }
  return select_by_score(score, Vec2(waypoints.row(waypoints.rows() - 1).transpose()), n);
}

std::vector<Index> union_select(const SearchResult& a, const SearchResult& b) {
  if (a.universe != b.universe)
    throw ContractError("union_select: selections refer to different token sets");
  std::vector<Index> out;
  std::vector<char> seen(static_cast<std::size_t>(a.universe), 0);
  for (const auto& src : {a.indices, b.indices}) {
    for (Index i : src) {
      if (i < 0 || i >= a.universe) throw ContractError("union_select: index out of range");
      if (!seen[static_cast<std::size_t>(i)]) {
        seen[static_cast<std::size_t>(i)] = 1;
        out.push_back(i);
      }
    }
  }
  return out;
}

std::vector<std::vector<Index>> knn_neighbors(const MatX2& refs, Index k) {
  if (k < 1) throw ContractError("knn_neighbors: k must be >= 1");
  const Index n = refs.rows();
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(n));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::vector<double> score(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      score[static_cast<std::size_t>(j)] = (refs.row(j) - refs.row(i)).squaredNorm();
      order[static_cast<std::size_t>(j)] = j;
    }
    // self outranks equal-distance duplicates so every token attends to itself
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
      const double sa = score[static_cast<std::size_t>(a)], sb = score[static_cast<std::size_t>(b)];
      if (sa != sb) return sa < sb;
      if ((a == i) != (b == i)) return a == i;
      return a < b;
    });
    out[static_cast<std::size_t>(i)].assign(order.begin(), order.begin() + std::min(k, n));
  }
  return out;
}

}  // namespace mgtr
