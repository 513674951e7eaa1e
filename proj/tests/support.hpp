#pragma once

// Shared helpers for the unit and acceptance suites: structured random
// dictionaries whose coherence profile can be steered, and exact
// one-atom-per-block signals with known coefficients.

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "shared_transfer/dictionary.hpp"
#include "shared_transfer/random.hpp"

namespace test_support {

inline Eigen::MatrixXd gaussian_matrix(shared_transfer::Rng& rng,
                                       Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.normal();
  return m;
}

// Dictionary with p blocks of L atoms each. Atom mass concentrates on a
// per-block window of a random orthonormal frame, with a cross-block
// contamination level eps steering mu_inter; mu_intra stays generic. The
// returned dictionary carries identity coefficient matrices (the blocks
// themselves are the designs).
inline shared_transfer::TransferDictionary make_structured_dictionary(
    shared_transfer::Rng& rng, int n, int p, int L, double eps) {
  Eigen::MatrixXd frame =
      Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian_matrix(rng, n, n))
          .householderQ();
  int width = n / p;
  std::vector<Eigen::MatrixXd> designs, coeffs;
  for (int j = 0; j < p; ++j) {
    Eigen::MatrixXd block(n, L);
    for (int l = 0; l < L; ++l) {
      Eigen::VectorXd main = frame.middleCols(j * width, width) *
                             gaussian_matrix(rng, width, 1);
      Eigen::VectorXd noise = gaussian_matrix(rng, n, 1);
      Eigen::VectorXd atom =
          (1.0 - eps) * main / main.norm() + eps * noise / noise.norm();
      block.col(l) = atom / atom.norm();
    }
    designs.push_back(block);
    coeffs.push_back(Eigen::MatrixXd::Identity(L, L));
  }
  return shared_transfer::assemble(designs, coeffs);
}

struct ExactSignal {
  Eigen::VectorXd signal;
  std::vector<int> support;        // atom index per block
  std::vector<double> coefficients;
};

// y = sum_j gamma_j d_{j, l_j} with |gamma| in [lo, hi] and random signs.
inline ExactSignal make_exact_signal(shared_transfer::Rng& rng,
                                     const shared_transfer::TransferDictionary& dict,
                                     double lo = 0.5, double hi = 2.0) {
  ExactSignal out;
  out.signal = Eigen::VectorXd::Zero(dict.rows());
  for (int j = 0; j < dict.num_blocks(); ++j) {
    int l = rng.uniform_int(0, static_cast<int>(dict.block_size(j)) - 1);
    double gamma = rng.uniform(lo, hi) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    out.support.push_back(l);
    out.coefficients.push_back(gamma);
    out.signal += gamma * dict.blocks[j].col(l);
  }
  return out;
}

// Blocks pairwise orthogonal, atoms within a block with pairwise inner
// product exactly mu (each atom = sqrt(mu) * shared direction +
// sqrt(1-mu) * its own orthonormal direction). Needs n >= p * (L + 1).
inline shared_transfer::TransferDictionary make_orthogonal_block_dictionary(
    int n, int p, int L, double mu) {
  std::vector<Eigen::MatrixXd> designs, coeffs;
  int width = L + 1;
  for (int j = 0; j < p; ++j) {
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(n, L);
    int base = j * width;
    for (int l = 0; l < L; ++l) {
      block(base, l) = std::sqrt(mu);
      block(base + 1 + l, l) = std::sqrt(1.0 - mu);
    }
    designs.push_back(block);
    coeffs.push_back(Eigen::MatrixXd::Identity(L, L));
  }
  return shared_transfer::assemble(designs, coeffs);
}

}  // namespace test_support
