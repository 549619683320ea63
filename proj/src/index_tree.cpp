#include "mnnh2/index_tree.hpp"

#include <algorithm>
#include <set>

namespace mnnh2 {

namespace {

// Cyclically adjacent boxes (distance <= 1 per axis), self included.
std::vector<std::int32_t> neighbor_list(const IndexTree& t, int level, std::int64_t b) {
  const std::int64_t n = t.boxes_per_axis(level);
  const auto c = t.box_coords(level, b);
  std::set<std::int64_t> out;
  if (t.d == 1) {
    for (std::int64_t o = -1; o <= 1; ++o) out.insert(((c[0] + o) % n + n) % n);
  } else {
    for (std::int64_t o2 = -1; o2 <= 1; ++o2)
      for (std::int64_t o1 = -1; o1 <= 1; ++o1)
        out.insert(t.box_index(level, ((c[0] + o1) % n + n) % n, ((c[1] + o2) % n + n) % n));
  }
  return {out.begin(), out.end()};
}

}  // namespace

IndexTree build_tree(int L, int m, int d) {
  check(L >= 3, "build_tree: L must be >= 3 so levels 2..L-1 are non-empty");
  check(m >= 1, "build_tree: m must be >= 1");
  check(d == 1 || d == 2, "build_tree: d must be 1 or 2");

  IndexTree t;
  t.L = L;
  t.m = m;
  t.d = d;
  t.nl.resize(L + 1);
  t.il.resize(L + 1);

  for (int level = 0; level <= L; ++level) {
    const std::int64_t nb = t.num_boxes(level);
    t.nl[level].resize(nb);
    t.il[level].resize(nb);
    for (std::int64_t b = 0; b < nb; ++b) t.nl[level][b] = neighbor_list(t, level, b);
  }

  // IL(I) = C(NL(P(I))) - NL(I) for levels >= 2.
  for (int level = 2; level <= L; ++level) {
    const std::int64_t nb = t.num_boxes(level);
    for (std::int64_t b = 0; b < nb; ++b) {
      std::set<std::int64_t> candidates;
      for (std::int32_t p : t.nl[level - 1][t.parent(level, b)])
        for (std::int64_t ch : t.children(level - 1, p)) candidates.insert(ch);
      for (std::int32_t nb_box : t.nl[level][b]) candidates.erase(nb_box);
      t.il[level][b].assign(candidates.begin(), candidates.end());
    }
  }
  return t;
}

std::vector<std::int64_t> points_under(const IndexTree& t, int level, std::int64_t box) {
  if (level == t.L) {
    std::vector<std::int64_t> pts(t.leaf_size());
    for (std::int64_t local = 0; local < t.leaf_size(); ++local)
      pts[local] = t.leaf_point(box, local);
    return pts;
  }
  std::vector<std::int64_t> pts;
  for (std::int64_t ch : t.children(level, box)) {
    const auto sub = points_under(t, level + 1, ch);
    pts.insert(pts.end(), sub.begin(), sub.end());
  }
  return pts;
}

}  // namespace mnnh2
