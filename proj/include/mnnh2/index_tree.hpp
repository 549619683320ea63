#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mnnh2/common.hpp"

namespace mnnh2 {

/// Dyadic hierarchical partition of a periodic uniform grid in d = 1 or 2
/// dimensions. Level l holds 2^(l*d) boxes; leaves (level L) hold m^d points.
/// Boxes carry neighbor lists (cyclically adjacent boxes, self included) and,
/// for l >= 2, interaction lists IL(I) = C(NL(P(I))) - NL(I).
struct IndexTree {
  int L = 0;
  int m = 0;
  int d = 1;
  bool periodic = true;

  // nl[l][b], il[l][b]: sorted linear box indices. il is empty for l < 2.
  std::vector<std::vector<std::vector<std::int32_t>>> nl;
  std::vector<std::vector<std::vector<std::int32_t>>> il;

  std::int64_t boxes_per_axis(int level) const { return std::int64_t(1) << level; }
  std::int64_t num_boxes(int level) const { return std::int64_t(1) << (level * d); }
  std::int64_t points_per_axis() const { return boxes_per_axis(L) * m; }
  std::int64_t num_points() const {
    std::int64_t n = points_per_axis();
    return d == 1 ? n : n * n;
  }
  std::int64_t leaf_size() const { return d == 1 ? m : std::int64_t(m) * m; }

  std::array<std::int64_t, 2> box_coords(int level, std::int64_t b) const {
    if (d == 1) return {b, 0};
    const std::int64_t n = boxes_per_axis(level);
    return {b % n, b / n};
  }
  std::int64_t box_index(int level, std::int64_t b1, std::int64_t b2) const {
    return d == 1 ? b1 : b1 + boxes_per_axis(level) * b2;
  }

  std::int64_t parent(int level, std::int64_t b) const {
    const auto c = box_coords(level, b);
    return box_index(level - 1, c[0] >> 1, c[1] >> 1);
  }

  /// Children in column-major local order: local = p + 2*q for offsets
  /// (p, q) in {0,1}^d. The same order indexes the transfer blocks.
  std::vector<std::int64_t> children(int level, std::int64_t b) const {
    const auto c = box_coords(level, b);
    std::vector<std::int64_t> out;
    if (d == 1) {
      out = {box_index(level + 1, 2 * c[0], 0), box_index(level + 1, 2 * c[0] + 1, 0)};
    } else {
      for (std::int64_t q = 0; q < 2; ++q)
        for (std::int64_t p = 0; p < 2; ++p)
          out.push_back(box_index(level + 1, 2 * c[0] + p, 2 * c[1] + q));
    }
    return out;
  }

  /// Global grid index of a leaf-box point. Points inside a leaf are
  /// enumerated column-major: local = t1 + m*t2.
  std::int64_t leaf_point(std::int64_t leaf, std::int64_t local) const {
    const auto c = box_coords(L, leaf);
    if (d == 1) return c[0] * m + local;
    const std::int64_t t1 = local % m, t2 = local / m;
    return (c[0] * m + t1) + points_per_axis() * (c[1] * m + t2);
  }
};

/// Builds the tree with NL/IL computed from the definitions under cyclic
/// adjacency. Requires L >= 3 so the transfer levels 2..L-1 are non-empty.
IndexTree build_tree(int L, int m, int d);

/// Global grid indices covered by a box, child-major down to the leaf-local
/// column-major order. This ordering is shared by the factorization blocks,
/// the dense assembly, and the network weight loader.
std::vector<std::int64_t> points_under(const IndexTree& t, int level, std::int64_t box);

}  // namespace mnnh2
