#include "mnnh2/h2.hpp"

#include <Eigen/SVD>
#include <algorithm>

namespace mnnh2 {

namespace {

constexpr std::int64_t kDenseGuard = 4096;

void check_dense_feasible(const H2Matrix& h2, const char* who) {
  if (h2.dim() > kDenseGuard)
    throw shape_error(std::string(who) + ": refusing dense assembly for dimension " +
                      std::to_string(h2.dim()) + " > " + std::to_string(kDenseGuard));
}

// First r left singular vectors, zero-padded if the block cannot carry rank r.
Eigen::MatrixXd truncated_left_basis(const Eigen::MatrixXd& A, int r) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU);
  const int have = static_cast<int>(svd.matrixU().cols());
  Eigen::MatrixXd U = Eigen::MatrixXd::Zero(A.rows(), r);
  U.leftCols(std::min(r, have)) = svd.matrixU().leftCols(std::min(r, have));
  return U;
}

Eigen::MatrixXd truncated_right_basis(const Eigen::MatrixXd& A, int r) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinV);
  const int have = static_cast<int>(svd.matrixV().cols());
  Eigen::MatrixXd V = Eigen::MatrixXd::Zero(A.cols(), r);
  V.leftCols(std::min(r, have)) = svd.matrixV().leftCols(std::min(r, have));
  return V;
}

// Columns of A indexed by the complement of the near field of box b.
std::vector<std::int64_t> far_points(const IndexTree& t, int level, std::int64_t b) {
  std::vector<char> near(t.num_points(), 0);
  for (std::int32_t nb : t.nl[level][b])
    for (std::int64_t p : points_under(t, level, nb)) near[p] = 1;
  std::vector<std::int64_t> out;
  for (std::int64_t p = 0; p < t.num_points(); ++p)
    if (!near[p]) out.push_back(p);
  return out;
}

Eigen::MatrixXd gather(const Eigen::MatrixXd& A, const std::vector<std::int64_t>& rows,
                       const std::vector<std::int64_t>& cols) {
  Eigen::MatrixXd out(rows.size(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < rows.size(); ++i) out(i, j) = A(rows[i], cols[j]);
  return out;
}

}  // namespace

std::int64_t H2Matrix::storage_count() const {
  std::int64_t n = 0;
  for (const auto& u : U) n += u.size();
  for (const auto& v : V) n += v.size();
  for (const auto& lvl : B)
    for (const auto& b : lvl) n += b.size();
  for (const auto& lvl : C)
    for (const auto& c : lvl) n += c.size();
  for (const auto& lvl : M)
    for (const auto& row : lvl)
      for (const auto& blk : row) n += blk.size();
  for (const auto& row : Aad)
    for (const auto& blk : row) n += blk.size();
  return n;
}

H2Matrix random_h2(const IndexTree& tree, int r, std::uint64_t seed) {
  check(r >= 1, "random_h2: r must be >= 1");
  if (r > tree.leaf_size())
    throw shape_error("random_h2: r = " + std::to_string(r) + " exceeds leaf size " +
                      std::to_string(tree.leaf_size()));
  H2Matrix h2;
  h2.tree = tree;
  h2.r = r;
  RngStream rng(seed, 0x48324d);

  const std::int64_t leaves = tree.num_boxes(tree.L);
  const std::int64_t ls = tree.leaf_size();
  auto fill = [&rng](Eigen::MatrixXd& a) {
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = rng.normal();
  };

  h2.U.resize(leaves);
  h2.V.resize(leaves);
  for (std::int64_t b = 0; b < leaves; ++b) {
    h2.U[b].resize(ls, r);
    fill(h2.U[b]);
    h2.V[b].resize(ls, r);
    fill(h2.V[b]);
  }

  h2.B.resize(tree.L - 2);
  h2.C.resize(tree.L - 2);
  for (int level = 2; level < tree.L; ++level) {
    const std::int64_t nb_child = tree.num_boxes(level + 1);
    h2.B[level - 2].resize(nb_child);
    h2.C[level - 2].resize(nb_child);
    for (std::int64_t b = 0; b < nb_child; ++b) {
      h2.B[level - 2][b].resize(r, r);
      fill(h2.B[level - 2][b]);
      h2.C[level - 2][b].resize(r, r);
      fill(h2.C[level - 2][b]);
    }
  }

  h2.M.resize(tree.L - 1);
  for (int level = 2; level <= tree.L; ++level) {
    const std::int64_t nb = tree.num_boxes(level);
    h2.M[level - 2].resize(nb);
    for (std::int64_t b = 0; b < nb; ++b) {
      h2.M[level - 2][b].resize(tree.il[level][b].size());
      for (auto& blk : h2.M[level - 2][b]) {
        blk.resize(r, r);
        fill(blk);
      }
    }
  }

  h2.Aad.resize(leaves);
  for (std::int64_t b = 0; b < leaves; ++b) {
    h2.Aad[b].resize(tree.nl[tree.L][b].size());
    for (auto& blk : h2.Aad[b]) {
      blk.resize(ls, ls);
      fill(blk);
    }
  }
  return h2;
}

Eigen::VectorXd matvec(const H2Matrix& h2, const Eigen::VectorXd& v) {
  const IndexTree& t = h2.tree;
  if (v.size() != h2.dim())
    throw shape_error("matvec: vector length " + std::to_string(v.size()) +
                      " does not match dimension " + std::to_string(h2.dim()));
  const int L = t.L;
  const int r = h2.r;
  const std::int64_t leaves = t.num_boxes(L);
  const std::int64_t ls = t.leaf_size();

  // xi[l][b]: level-l coefficients.
  std::vector<std::vector<Eigen::VectorXd>> xi(L + 1);
  xi[L].resize(leaves);
  for (std::int64_t b = 0; b < leaves; ++b) {
    Eigen::VectorXd vb(ls);
    for (std::int64_t local = 0; local < ls; ++local) vb[local] = v[t.leaf_point(b, local)];
    xi[L][b] = h2.V[b].transpose() * vb;
  }
  for (int level = L - 1; level >= 2; --level) {
    xi[level].assign(t.num_boxes(level), Eigen::VectorXd::Zero(r));
    for (std::int64_t b = 0; b < t.num_boxes(level); ++b)
      for (std::int64_t ch : t.children(level, b))
        xi[level][b] += h2.C[level - 2][ch].transpose() * xi[level + 1][ch];
  }

  std::vector<std::vector<Eigen::VectorXd>> zeta(L + 1);
  for (int level = 2; level <= L; ++level) {
    zeta[level].assign(t.num_boxes(level), Eigen::VectorXd::Zero(r));
    for (std::int64_t b = 0; b < t.num_boxes(level); ++b)
      for (std::size_t k = 0; k < t.il[level][b].size(); ++k)
        zeta[level][b] += h2.M[level - 2][b][k] * xi[level][t.il[level][b][k]];
  }

  std::vector<Eigen::VectorXd> chi = zeta[2];
  for (int level = 2; level < L; ++level) {
    std::vector<Eigen::VectorXd> next(t.num_boxes(level + 1));
    for (std::int64_t b = 0; b < t.num_boxes(level); ++b)
      for (std::int64_t ch : t.children(level, b)) next[ch] = h2.B[level - 2][ch] * chi[b];
    for (std::int64_t b = 0; b < t.num_boxes(level + 1); ++b) next[b] += zeta[level + 1][b];
    chi = std::move(next);
  }

  Eigen::VectorXd u = Eigen::VectorXd::Zero(h2.dim());
  for (std::int64_t b = 0; b < leaves; ++b) {
    const Eigen::VectorXd ub = h2.U[b] * chi[b];
    for (std::int64_t local = 0; local < ls; ++local) u[t.leaf_point(b, local)] += ub[local];
  }
  for (std::int64_t b = 0; b < leaves; ++b) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(ls);
    for (std::size_t k = 0; k < t.nl[L][b].size(); ++k) {
      const std::int64_t nb = t.nl[L][b][k];
      Eigen::VectorXd vn(ls);
      for (std::int64_t local = 0; local < ls; ++local) vn[local] = v[t.leaf_point(nb, local)];
      acc += h2.Aad[b][k] * vn;
    }
    for (std::int64_t local = 0; local < ls; ++local) u[t.leaf_point(b, local)] += acc[local];
  }
  return u;
}

namespace {

// Effective level-l bases as dense N^d x (2^(l d) r) matrices, rows scattered
// to global point indices.
std::vector<Eigen::MatrixXd> effective_bases(const H2Matrix& h2, bool column_side) {
  const IndexTree& t = h2.tree;
  const int L = t.L;
  const int r = h2.r;
  std::vector<Eigen::MatrixXd> eff(L + 1);
  eff[L] = Eigen::MatrixXd::Zero(h2.dim(), t.num_boxes(L) * r);
  for (std::int64_t b = 0; b < t.num_boxes(L); ++b) {
    const Eigen::MatrixXd& blk = column_side ? h2.U[b] : h2.V[b];
    for (std::int64_t local = 0; local < t.leaf_size(); ++local)
      eff[L].row(t.leaf_point(b, local)).segment(b * r, r) = blk.row(local);
  }
  for (int level = L - 1; level >= 2; --level) {
    eff[level] = Eigen::MatrixXd::Zero(h2.dim(), t.num_boxes(level) * r);
    for (std::int64_t b = 0; b < t.num_boxes(level); ++b)
      for (std::int64_t ch : t.children(level, b)) {
        const Eigen::MatrixXd& tr =
            column_side ? h2.B[level - 2][ch] : h2.C[level - 2][ch];
        eff[level].middleCols(b * r, r) +=
            eff[level + 1].middleCols(ch * r, r) * tr;
      }
  }
  return eff;
}

}  // namespace

Eigen::MatrixXd assemble_level(const H2Matrix& h2, int level) {
  check_dense_feasible(h2, "assemble_level");
  check(level >= 2 && level <= h2.L(), "assemble_level: level out of range");
  const IndexTree& t = h2.tree;
  const int r = h2.r;
  const auto ueff = effective_bases(h2, true);
  const auto veff = effective_bases(h2, false);
  Eigen::MatrixXd Mmat = Eigen::MatrixXd::Zero(t.num_boxes(level) * r, t.num_boxes(level) * r);
  for (std::int64_t b = 0; b < t.num_boxes(level); ++b)
    for (std::size_t k = 0; k < t.il[level][b].size(); ++k)
      Mmat.block(b * r, t.il[level][b][k] * r, r, r) = h2.M[level - 2][b][k];
  return ueff[level] * Mmat * veff[level].transpose();
}

Eigen::MatrixXd assemble_adjacent(const H2Matrix& h2) {
  check_dense_feasible(h2, "assemble_adjacent");
  const IndexTree& t = h2.tree;
  const std::int64_t ls = t.leaf_size();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(h2.dim(), h2.dim());
  for (std::int64_t b = 0; b < t.num_boxes(t.L); ++b)
    for (std::size_t k = 0; k < t.nl[t.L][b].size(); ++k) {
      const std::int64_t nb = t.nl[t.L][b][k];
      for (std::int64_t j = 0; j < ls; ++j)
        for (std::int64_t i = 0; i < ls; ++i)
          A(t.leaf_point(b, i), t.leaf_point(nb, j)) += h2.Aad[b][k](i, j);
    }
  return A;
}

Eigen::MatrixXd assemble_dense(const H2Matrix& h2) {
  check_dense_feasible(h2, "assemble_dense");
  Eigen::MatrixXd A = assemble_adjacent(h2);
  for (int level = 2; level <= h2.L(); ++level) A += assemble_level(h2, level);
  return A;
}

H2Matrix compress_dense(const Eigen::MatrixXd& A, const IndexTree& tree, int r) {
  check(r >= 1, "compress_dense: r must be >= 1");
  if (A.rows() != A.cols() || A.rows() != tree.num_points())
    throw shape_error("compress_dense: matrix must be " + std::to_string(tree.num_points()) +
                      " square, got " + std::to_string(A.rows()) + "x" + std::to_string(A.cols()));
  const int L = tree.L;
  H2Matrix h2;
  h2.tree = tree;
  h2.r = r;

  const std::int64_t leaves = tree.num_boxes(L);

  // Leaf bases from the off-near-field row/column blocks.
  h2.U.resize(leaves);
  h2.V.resize(leaves);
  std::vector<Eigen::MatrixXd> ueff(leaves), veff(leaves);  // current-level effective bases
  for (std::int64_t b = 0; b < leaves; ++b) {
    const auto pts = points_under(tree, L, b);
    const auto far = far_points(tree, L, b);
    h2.U[b] = truncated_left_basis(gather(A, pts, far), r);
    h2.V[b] = truncated_right_basis(gather(A, far, pts), r);
    ueff[b] = h2.U[b];
    veff[b] = h2.V[b];
  }

  // Transfer blocks: SVD of the far field projected onto the children bases.
  h2.B.assign(L - 2, {});
  h2.C.assign(L - 2, {});
  for (int level = L - 1; level >= 2; --level) {
    const std::int64_t nb = tree.num_boxes(level);
    const std::int64_t nchild = tree.num_boxes(level + 1);
    h2.B[level - 2].assign(nchild, Eigen::MatrixXd());
    h2.C[level - 2].assign(nchild, Eigen::MatrixXd());
    std::vector<Eigen::MatrixXd> ueff_next(nb), veff_next(nb);
    for (std::int64_t b = 0; b < nb; ++b) {
      const auto pts = points_under(tree, level, b);
      const auto far = far_points(tree, level, b);
      const auto kids = tree.children(level, b);
      const int nk = static_cast<int>(kids.size());

      Eigen::MatrixXd row_blk = gather(A, pts, far);
      Eigen::MatrixXd proj_rows(nk * r, row_blk.cols());
      for (int k = 0; k < nk; ++k)
        proj_rows.middleRows(k * r, r) =
            ueff[kids[k]].transpose() * row_blk.middleRows(k * ueff[kids[k]].rows(), ueff[kids[k]].rows());
      const Eigen::MatrixXd Bstack = truncated_left_basis(proj_rows, r);

      Eigen::MatrixXd col_blk = gather(A, far, pts);
      Eigen::MatrixXd proj_cols(col_blk.rows(), nk * r);
      for (int k = 0; k < nk; ++k)
        proj_cols.middleCols(k * r, r) =
            col_blk.middleCols(k * veff[kids[k]].rows(), veff[kids[k]].rows()) * veff[kids[k]];
      const Eigen::MatrixXd Cstack = truncated_right_basis(proj_cols, r);

      const std::int64_t child_pts = pts.size() / nk;
      ueff_next[b] = Eigen::MatrixXd::Zero(pts.size(), r);
      veff_next[b] = Eigen::MatrixXd::Zero(pts.size(), r);
      for (int k = 0; k < nk; ++k) {
        h2.B[level - 2][kids[k]] = Bstack.middleRows(k * r, r);
        h2.C[level - 2][kids[k]] = Cstack.middleRows(k * r, r);
        ueff_next[b].middleRows(k * child_pts, child_pts) = ueff[kids[k]] * h2.B[level - 2][kids[k]];
        veff_next[b].middleRows(k * child_pts, child_pts) = veff[kids[k]] * h2.C[level - 2][kids[k]];
      }
    }
    ueff = std::move(ueff_next);
    veff = std::move(veff_next);

    // Recompute leaf-level effective bases lazily below via points ordering:
    // interaction blocks at this level need ueff/veff of this level, so fill
    // them now before the arrays are consumed by the next iteration.
    h2.M.resize(L - 1);
    h2.M[level - 2].assign(nb, {});
    for (std::int64_t b = 0; b < nb; ++b) {
      const auto pts_b = points_under(tree, level, b);
      h2.M[level - 2][b].resize(tree.il[level][b].size());
      for (std::size_t k = 0; k < tree.il[level][b].size(); ++k) {
        const auto pts_j = points_under(tree, level, tree.il[level][b][k]);
        h2.M[level - 2][b][k] =
            ueff[b].transpose() * gather(A, pts_b, pts_j) * veff[tree.il[level][b][k]];
      }
    }
  }

  // Leaf-level interaction blocks.
  h2.M.resize(L - 1);
  h2.M[L - 2].assign(leaves, {});
  for (std::int64_t b = 0; b < leaves; ++b) {
    const auto pts_b = points_under(tree, L, b);
    h2.M[L - 2][b].resize(tree.il[L][b].size());
    for (std::size_t k = 0; k < tree.il[L][b].size(); ++k) {
      const auto pts_j = points_under(tree, L, tree.il[L][b][k]);
      h2.M[L - 2][b][k] =
          h2.U[b].transpose() * gather(A, pts_b, pts_j) * h2.V[tree.il[L][b][k]];
    }
  }

  // Adjacent blocks copied exactly.
  h2.Aad.resize(leaves);
  for (std::int64_t b = 0; b < leaves; ++b) {
    const auto pts_b = points_under(tree, L, b);
    h2.Aad[b].resize(tree.nl[L][b].size());
    for (std::size_t k = 0; k < tree.nl[L][b].size(); ++k) {
      const auto pts_j = points_under(tree, L, tree.nl[L][b][k]);
      h2.Aad[b][k] = gather(A, pts_b, pts_j);
    }
  }
  return h2;
}

}  // namespace mnnh2
