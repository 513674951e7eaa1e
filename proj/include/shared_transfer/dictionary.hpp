#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "shared_transfer/errors.hpp"
#include "shared_transfer/splines.hpp"

namespace shared_transfer {

// Union of per-covariate subdictionaries D_j = S_j B_j whose columns (atoms)
// are candidate transfer functions evaluated at the design rows.
struct TransferDictionary {
  std::vector<Eigen::MatrixXd> blocks;                // D_j: n x L_j
  std::vector<Eigen::MatrixXd> coefficient_matrices;  // B_j: T_j x L_j
  std::vector<Eigen::VectorXd> atom_norms;            // cached column norms
  std::vector<std::pair<int, int>> zero_atoms;        // flagged, not fatal

  Eigen::Index rows() const { return blocks.empty() ? 0 : blocks[0].rows(); }
  int num_blocks() const { return static_cast<int>(blocks.size()); }
  Eigen::Index block_size(int j) const { return blocks[j].cols(); }
  Eigen::Index total_atoms() const {
    Eigen::Index total = 0;
    for (const auto& b : blocks) total += b.cols();
    return total;
  }
};

inline TransferDictionary assemble(
    const std::vector<Eigen::MatrixXd>& designs,
    const std::vector<Eigen::MatrixXd>& coeffs) {
  if (designs.size() != coeffs.size())
    throw ShapeError("assemble: " + std::to_string(designs.size()) +
                     " design blocks vs " + std::to_string(coeffs.size()) +
                     " coefficient matrices");
  if (designs.empty()) throw ShapeError("assemble: empty dictionary");
  TransferDictionary dict;
  dict.blocks.reserve(designs.size());
  dict.atom_norms.reserve(designs.size());
  const Eigen::Index n = designs[0].rows();
  for (std::size_t j = 0; j < designs.size(); ++j) {
    if (designs[j].rows() != n)
      throw ShapeError("assemble: design blocks disagree on row count");
    if (designs[j].cols() != coeffs[j].rows())
      throw ShapeError("assemble: block " + std::to_string(j) +
                       " inner dimensions " + std::to_string(designs[j].cols()) +
                       " vs " + std::to_string(coeffs[j].rows()));
    dict.blocks.emplace_back(designs[j] * coeffs[j]);
    Eigen::VectorXd norms(coeffs[j].cols());
    for (Eigen::Index l = 0; l < coeffs[j].cols(); ++l) {
      norms[l] = dict.blocks.back().col(l).norm();
      if (norms[l] == 0.0)
        dict.zero_atoms.emplace_back(static_cast<int>(j),
                                     static_cast<int>(l));
    }
    dict.atom_norms.push_back(std::move(norms));
  }
  dict.coefficient_matrices = coeffs;
  return dict;
}

inline std::vector<Eigen::MatrixXd> design_blocks(const DesignMatrix& design) {
  std::vector<Eigen::MatrixXd> blocks;
  blocks.reserve(design.blocks.size());
  for (int j = 0; j < design.num_blocks(); ++j)
    blocks.emplace_back(design.block(j));
  return blocks;
}

// Coherence of the dictionary on l2-normalized atoms, split into the
// within-block and cross-block classes, plus the recovery conditions both
// values certify.
struct CoherenceReport {
  double mu_global = 0.0;
  double mu_intra = 0.0;
  double mu_inter = 0.0;
  int omp_condition_max_p = 0;   // largest p the global condition certifies
  bool bcomp_condition_holds = false;  // at the dictionary's own p
};

// Global-coherence condition: p < (1/mu + 1) / 2. A zero coherence is
// vacuous and certifies every p.
inline bool check_omp_condition(int p, double mu) {
  if (p < 1) throw Error("check_omp_condition: p must be >= 1");
  if (mu < 0.0 || mu > 1.0) throw Error("check_omp_condition: mu outside [0,1]");
  if (mu == 0.0) return true;
  return static_cast<double>(p) < 0.5 * (1.0 / mu + 1.0);
}

// Block condition: mu_intra + 2 (p-1) mu_inter < 1.
inline bool check_bcomp_condition(int p, double mu_intra, double mu_inter) {
  if (p < 1) throw Error("check_bcomp_condition: p must be >= 1");
  if (mu_intra < 0.0 || mu_intra > 1.0 || mu_inter < 0.0 || mu_inter > 1.0)
    throw Error("check_bcomp_condition: coherence outside [0,1]");
  return mu_intra + 2.0 * (p - 1) * mu_inter < 1.0;
}

inline int omp_condition_max_p(double mu) {
  if (mu == 0.0) return std::numeric_limits<int>::max();
  int p = static_cast<int>(0.5 * (1.0 / mu + 1.0));
  // the bound is strict; back off when the cast landed on it exactly
  while (p >= 1 && !check_omp_condition(p, mu)) --p;
  return p;
}

inline CoherenceReport coherence(const TransferDictionary& dict) {
  if (!dict.zero_atoms.empty())
    throw ZeroAtom("coherence: dictionary has a zero atom (block " +
                   std::to_string(dict.zero_atoms.front().first) + ", atom " +
                   std::to_string(dict.zero_atoms.front().second) + ")");
  std::vector<Eigen::MatrixXd> unit;
  unit.reserve(dict.blocks.size());
  for (std::size_t j = 0; j < dict.blocks.size(); ++j) {
    Eigen::MatrixXd u = dict.blocks[j];
    for (Eigen::Index l = 0; l < u.cols(); ++l)
      u.col(l) /= dict.atom_norms[j][l];
    unit.push_back(std::move(u));
  }
  CoherenceReport report;
  const int p = dict.num_blocks();
  for (int j = 0; j < p; ++j) {
    Eigen::MatrixXd gram = unit[j].transpose() * unit[j];
    for (Eigen::Index a = 0; a < gram.rows(); ++a)
      for (Eigen::Index b = a + 1; b < gram.cols(); ++b)
        report.mu_intra = std::max(report.mu_intra, std::abs(gram(a, b)));
    for (int k = j + 1; k < p; ++k) {
      Eigen::MatrixXd cross = unit[j].transpose() * unit[k];
      report.mu_inter =
          std::max(report.mu_inter, cross.cwiseAbs().maxCoeff());
    }
  }
  report.mu_intra = std::min(report.mu_intra, 1.0);
  report.mu_inter = std::min(report.mu_inter, 1.0);
  report.mu_global = std::max(report.mu_intra, report.mu_inter);
  report.omp_condition_max_p = omp_condition_max_p(report.mu_global);
  report.bcomp_condition_holds =
      check_bcomp_condition(p, report.mu_intra, report.mu_inter);
  return report;
}

}  // namespace shared_transfer
