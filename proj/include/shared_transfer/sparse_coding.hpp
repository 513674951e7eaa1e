#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "shared_transfer/dictionary.hpp"
#include "shared_transfer/errors.hpp"

namespace shared_transfer {

struct AtomSelection {
  int block = -1;
  int atom = -1;
  double coefficient = 0.0;
};

// One-atom-per-block weights for a single signal. weights[j] has length L_j
// and at most one nonzero entry; selected lists the chosen atoms in
// selection order.
struct BlockSparseCode {
  std::vector<Eigen::VectorXd> weights;
  std::vector<AtomSelection> selected;
  double residual_norm = 0.0;

  Eigen::VectorXd reconstruct(const TransferDictionary& dict) const {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(dict.rows());
    for (const auto& sel : selected)
      acc += sel.coefficient * dict.blocks[sel.block].col(sel.atom);
    return acc;
  }
};

struct PursuitStep {
  int block = -1;
  int atom = -1;
  double score = 0.0;
  double residual_norm = 0.0;
  bool rank_deficient_fallback = false;
};

struct PursuitTrace {
  std::vector<PursuitStep> steps;
};

namespace detail {

// Least squares on the selected-atom matrix. The Gram system is grown one
// column at a time; a rank-revealing full solve takes over when the Gram
// factorization degrades.
class IncrementalLeastSquares {
 public:
  explicit IncrementalLeastSquares(Eigen::Index n, int capacity)
      : atoms_(n, capacity), gram_(capacity, capacity), rhs_(capacity) {}

  void push(const Eigen::VectorXd& atom, const Eigen::VectorXd& signal) {
    atoms_.col(count_) = atom;
    for (int i = 0; i <= count_; ++i) {
      double dot = atoms_.col(i).dot(atom);
      gram_(i, count_) = dot;
      gram_(count_, i) = dot;
    }
    rhs_[count_] = atom.dot(signal);
    ++count_;
  }

  // Coefficients for all selected atoms; min-norm fallback flagged through
  // rank_deficient.
  Eigen::VectorXd solve(const Eigen::VectorXd& signal, bool& rank_deficient) {
    rank_deficient = false;
    auto G = gram_.topLeftCorner(count_, count_);
    auto b = rhs_.head(count_);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
    if (ldlt.info() == Eigen::Success) {
      Eigen::VectorXd c = ldlt.solve(b);
      if ((G * c - b).lpNorm<Eigen::Infinity>() <=
          1e-10 * (1.0 + b.lpNorm<Eigen::Infinity>()))
        return c;
    }
    rank_deficient = true;
    return atoms_.leftCols(count_)
        .completeOrthogonalDecomposition()
        .solve(signal);
  }

  int count() const { return count_; }
  auto atoms() const { return atoms_.leftCols(count_); }

 private:
  Eigen::MatrixXd atoms_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd rhs_;
  int count_ = 0;
};

}  // namespace detail

// Block-constrained orthogonal matching pursuit: greedily selects the atom
// with the strongest normalized correlation to the residual among blocks not
// yet used, then re-projects onto all selected atoms. Ties break toward the
// smallest (block, atom) pair; zero atoms are skipped; the loop stops early
// on a (numerically) zero residual or when no remaining atom correlates.
inline BlockSparseCode bcomp(const TransferDictionary& dict,
                             const Eigen::VectorXd& signal,
                             PursuitTrace* trace = nullptr) {
  const Eigen::Index n = dict.rows();
  if (signal.size() != n)
    throw ShapeError("bcomp: signal length " + std::to_string(signal.size()) +
                     " vs dictionary rows " + std::to_string(n));
  const int p = dict.num_blocks();
  BlockSparseCode code;
  code.weights.reserve(p);
  for (int j = 0; j < p; ++j)
    code.weights.push_back(Eigen::VectorXd::Zero(dict.block_size(j)));

  const double ynorm = signal.norm();
  Eigen::VectorXd residual = signal;
  std::vector<bool> available(p, true);
  detail::IncrementalLeastSquares ls(n, p);
  std::vector<std::pair<int, int>> picks;
  Eigen::VectorXd coeffs;

  for (int step = 0; step < p; ++step) {
    if (residual.norm() <= 1e-12 * ynorm) break;
    int best_block = -1, best_atom = -1;
    double best_score = 0.0;
    for (int k = 0; k < p; ++k) {
      if (!available[k]) continue;
      for (Eigen::Index l = 0; l < dict.block_size(k); ++l) {
        double norm = dict.atom_norms[k][l];
        if (norm == 0.0) continue;
        double score = std::abs(residual.dot(dict.blocks[k].col(l))) / norm;
        if (score > best_score) {
          best_score = score;
          best_block = k;
          best_atom = static_cast<int>(l);
        }
      }
    }
    if (best_block < 0 || best_score == 0.0) break;

    available[best_block] = false;
    picks.emplace_back(best_block, best_atom);
    ls.push(dict.blocks[best_block].col(best_atom), signal);
    bool rank_deficient = false;
    coeffs = ls.solve(signal, rank_deficient);
    residual = signal - ls.atoms() * coeffs;
    if (trace)
      trace->steps.push_back({best_block, best_atom, best_score,
                              residual.norm(), rank_deficient});
  }

  for (std::size_t i = 0; i < picks.size(); ++i) {
    code.weights[picks[i].first][picks[i].second] = coeffs[i];
    code.selected.push_back(
        {picks[i].first, picks[i].second, coeffs[static_cast<Eigen::Index>(i)]});
  }
  code.residual_norm = residual.norm();
  return code;
}

// Plain orthogonal matching pursuit over a flat atom matrix (comparison
// baseline; no block constraint).
struct SparseCode {
  Eigen::VectorXd weights;
  std::vector<std::pair<int, double>> selected;  // (column, coefficient)
  double residual_norm = 0.0;
};

inline SparseCode omp(const Eigen::MatrixXd& atoms,
                      const Eigen::VectorXd& signal, int sparsity,
                      PursuitTrace* trace = nullptr) {
  if (signal.size() != atoms.rows())
    throw ShapeError("omp: signal length " + std::to_string(signal.size()) +
                     " vs atom rows " + std::to_string(atoms.rows()));
  if (sparsity < 1 || sparsity > atoms.cols())
    throw Error("omp: sparsity out of range");
  Eigen::VectorXd norms(atoms.cols());
  for (Eigen::Index l = 0; l < atoms.cols(); ++l) norms[l] = atoms.col(l).norm();

  SparseCode code;
  code.weights = Eigen::VectorXd::Zero(atoms.cols());
  const double ynorm = signal.norm();
  Eigen::VectorXd residual = signal;
  std::vector<bool> used(static_cast<std::size_t>(atoms.cols()), false);
  detail::IncrementalLeastSquares ls(atoms.rows(), sparsity);
  std::vector<int> picks;
  Eigen::VectorXd coeffs;

  for (int step = 0; step < sparsity; ++step) {
    if (residual.norm() <= 1e-12 * ynorm) break;
    int best = -1;
    double best_score = 0.0;
    for (Eigen::Index l = 0; l < atoms.cols(); ++l) {
      if (used[static_cast<std::size_t>(l)] || norms[l] == 0.0) continue;
      double score = std::abs(residual.dot(atoms.col(l))) / norms[l];
      if (score > best_score) {
        best_score = score;
        best = static_cast<int>(l);
      }
    }
    if (best < 0 || best_score == 0.0) break;
    used[static_cast<std::size_t>(best)] = true;
    picks.push_back(best);
    ls.push(atoms.col(best), signal);
    bool rank_deficient = false;
    coeffs = ls.solve(signal, rank_deficient);
    residual = signal - ls.atoms() * coeffs;
    if (trace)
      trace->steps.push_back(
          {0, best, best_score, residual.norm(), rank_deficient});
  }
  for (std::size_t i = 0; i < picks.size(); ++i) {
    code.weights[picks[i]] = coeffs[static_cast<Eigen::Index>(i)];
    code.selected.emplace_back(picks[i], coeffs[static_cast<Eigen::Index>(i)]);
  }
  code.residual_norm = residual.norm();
  return code;
}

// [D_j | -D_j] augmentation so the sign-free weights can be rewritten as
// non-negative ones over a doubled candidate set.
inline TransferDictionary augment_signed(const TransferDictionary& dict) {
  TransferDictionary out;
  out.blocks.reserve(dict.blocks.size());
  out.coefficient_matrices.reserve(dict.blocks.size());
  out.atom_norms.reserve(dict.blocks.size());
  for (std::size_t j = 0; j < dict.blocks.size(); ++j) {
    const Eigen::Index l = dict.blocks[j].cols();
    Eigen::MatrixXd block(dict.blocks[j].rows(), 2 * l);
    block << dict.blocks[j], -dict.blocks[j];
    out.blocks.push_back(std::move(block));
    Eigen::MatrixXd coeff(dict.coefficient_matrices[j].rows(), 2 * l);
    coeff << dict.coefficient_matrices[j], -dict.coefficient_matrices[j];
    out.coefficient_matrices.push_back(std::move(coeff));
    Eigen::VectorXd norms(2 * l);
    norms << dict.atom_norms[j], dict.atom_norms[j];
    out.atom_norms.push_back(std::move(norms));
  }
  for (auto [j, l] : dict.zero_atoms) {
    out.zero_atoms.emplace_back(j, l);
    out.zero_atoms.emplace_back(
        j, l + static_cast<int>(dict.blocks[static_cast<std::size_t>(j)].cols()));
  }
  return out;
}

// Exhaustive oracle: least squares over every one-atom-per-block support,
// returning the global minimizer (ties keep the lexicographically smallest
// support). Guarded by a product-of-block-sizes budget.
inline BlockSparseCode brute_force_block_code(const TransferDictionary& dict,
                                              const Eigen::VectorXd& signal) {
  const Eigen::Index n = dict.rows();
  if (signal.size() != n)
    throw ShapeError("brute_force_block_code: signal length mismatch");
  const int p = dict.num_blocks();
  double combos = 1.0;
  for (int j = 0; j < p; ++j) combos *= static_cast<double>(dict.block_size(j));
  if (combos > 1e6)
    throw BudgetExceeded("brute_force_block_code: " + std::to_string(combos) +
                         " supports exceed the enumeration budget");

  std::vector<int> index(static_cast<std::size_t>(p), 0), best_index;
  Eigen::MatrixXd atoms(n, p);
  Eigen::VectorXd best_coeffs;
  double best_residual2 = std::numeric_limits<double>::infinity();

  for (;;) {
    for (int j = 0; j < p; ++j)
      atoms.col(j) = dict.blocks[j].col(index[static_cast<std::size_t>(j)]);
    Eigen::VectorXd c =
        atoms.completeOrthogonalDecomposition().solve(signal);
    double r2 = (signal - atoms * c).squaredNorm();
    if (r2 < best_residual2) {
      best_residual2 = r2;
      best_index = index;
      best_coeffs = c;
    }
    int j = p - 1;
    while (j >= 0 &&
           ++index[static_cast<std::size_t>(j)] == dict.block_size(j)) {
      index[static_cast<std::size_t>(j)] = 0;
      --j;
    }
    if (j < 0) break;
  }

  BlockSparseCode code;
  for (int j = 0; j < p; ++j) {
    code.weights.push_back(Eigen::VectorXd::Zero(dict.block_size(j)));
    code.weights[j][best_index[static_cast<std::size_t>(j)]] = best_coeffs[j];
    code.selected.push_back(
        {j, best_index[static_cast<std::size_t>(j)], best_coeffs[j]});
  }
  code.residual_norm = std::sqrt(std::max(0.0, best_residual2));
  return code;
}

}  // namespace shared_transfer
