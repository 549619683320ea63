#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mnnh2/index_tree.hpp"
#include "mnnh2/tensor.hpp"

namespace mnnh2 {

/// Nested hierarchical factorization
///   A ~= sum_l U^L B^(L-1)...B^l M^l (C^l)^T...(C^(L-1))^T (V^L)^T + A^ad.
/// Leaf bases U/V are m^d x r per leaf box; transfer blocks B/C are r x r per
/// child box (levels 2..L-1, indexed by the child at level l+1); interaction
/// blocks M are r x r per IL pair; adjacent blocks are m^d x m^d per NL pair
/// at the leaf level. M and Aad lists are aligned with tree.il / tree.nl.
struct H2Matrix {
  IndexTree tree;
  int r = 0;

  std::vector<Eigen::MatrixXd> U, V;                   // [leaf] m^d x r
  std::vector<std::vector<Eigen::MatrixXd>> B, C;      // [l-2][child at l+1] r x r
  std::vector<std::vector<std::vector<Eigen::MatrixXd>>> M;  // [l-2][box][k] r x r
  std::vector<std::vector<Eigen::MatrixXd>> Aad;       // [leaf][k] m^d x m^d

  int L() const { return tree.L; }
  int m() const { return tree.m; }
  int d() const { return tree.d; }
  std::int64_t dim() const { return tree.num_points(); }

  /// Scalars stored across all blocks (used by the linear-storage check).
  std::int64_t storage_count() const;
};

/// Structure-conforming random factors with seeded Gaussian entries.
/// Requires r <= m^d. Identical seeds give bitwise-identical structures.
H2Matrix random_h2(const IndexTree& tree, int r, std::uint64_t seed);

/// Compresses a dense matrix into the nested format: leaf bases from
/// truncated SVDs of the off-near-field row/column blocks, transfer blocks
/// from SVDs of the far field projected onto the children bases, interaction
/// blocks by basis projection, adjacent blocks copied exactly. Ranks beyond
/// what a block can carry are kept as zero basis columns.
H2Matrix compress_dense(const Eigen::MatrixXd& A, const IndexTree& tree, int r);

/// Upward/interaction/downward sweep application of the factorization.
Eigen::VectorXd matvec(const H2Matrix& h2, const Eigen::VectorXd& v);

/// Explicit dense matrix from the telescoped level products plus the
/// adjacent part. Guarded to N^d <= 4096.
Eigen::MatrixXd assemble_dense(const H2Matrix& h2);

/// Single level term U^L B...B M^l C^T...C^T V^T (same size guard).
Eigen::MatrixXd assemble_level(const H2Matrix& h2, int level);

/// Adjacent part as a dense matrix (same size guard).
Eigen::MatrixXd assemble_adjacent(const H2Matrix& h2);

}  // namespace mnnh2
