#pragma once

#include <vector>

#include "mgtr/scene.hpp"
#include "mgtr/types.hpp"

namespace mgtr {

// Ordered selection into a token set. `universe` records the size of the set
// the indices refer to, so unions of incompatible selections are rejected.
struct SearchResult {
  std::vector<Index> indices;  // unique, non-decreasing distance, stable ties
  Vec2 center = Vec2::Zero();
  Index universe = 0;
};

// center = position + velocity * tau
Vec2 motion_projected_center(const AgentState& current, double tau);

// The n tokens with smallest Euclidean ref distance to center; ties break
// toward the lower index. n > available returns everything.
SearchResult nearest_tokens(const MatX2& refs, const Vec2& center, Index n);

// Scores each token by its minimum distance to any trajectory waypoint and
// keeps the n best (stable ties). The recorded center is the trajectory
// endpoint.
SearchResult trajectory_aware_select(const MatX2& refs, const MatX2& waypoints, Index n);

// Deduplicated union preserving first-occurrence order (a then b).
std::vector<Index> union_select(const SearchResult& a, const SearchResult& b);

// For each token, the k nearest tokens (self included), ties toward the lower
// index. k is clamped to the token count.
std::vector<std::vector<Index>> knn_neighbors(const MatX2& refs, Index k);

}  // namespace mgtr
