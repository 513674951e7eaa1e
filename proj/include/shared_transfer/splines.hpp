#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "shared_transfer/errors.hpp"

namespace shared_transfer {

// Centered B-spline basis for one covariate. The raw basis is a standard
// open-knot-vector B-spline family (partition of unity on the domain); the
// centered basis subtracts per-function means taken over the sample the
// basis was built from, so design columns average to zero over that sample.
struct SplineBasis {
  int covariate_index = 1;  // 1-based
  int degree = 3;
  std::vector<double> knots;  // full vector, num_functions + degree + 1 entries
  int num_functions = 0;
  Eigen::VectorXd column_means;
  double domain_lo = 0.0;
  double domain_hi = 0.0;

  double clamp(double z) const {
    return std::min(std::max(z, domain_lo), domain_hi);
  }

  // Raw (uncentered) basis values at z; z is clamped to the domain.
  Eigen::VectorXd eval_raw(double z) const {
    z = clamp(z);
    const int d = degree;
    const int t = num_functions;
    // knot span: largest i in [d, t-1] with knots[i] <= z
    int span = d;
    {
      int lo = d, hi = t - 1;
      if (z >= knots[t]) {
        span = t - 1;
      } else {
        while (lo < hi) {
          int mid = (lo + hi + 1) / 2;
          if (knots[mid] <= z)
            lo = mid;
          else
            hi = mid - 1;
        }
        span = lo;
      }
    }
    // Cox-de Boor recursion over the d+1 non-vanishing functions
    std::vector<double> vals(d + 1, 0.0), left(d + 1), right(d + 1);
    vals[0] = 1.0;
    for (int j = 1; j <= d; ++j) {
      left[j] = z - knots[span + 1 - j];
      right[j] = knots[span + j] - z;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        double denom = right[r + 1] + left[j - r];
        double tmp = denom != 0.0 ? vals[r] / denom : 0.0;
        vals[r] = saved + right[r + 1] * tmp;
        saved = left[j - r] * tmp;
      }
      vals[j] = saved;
    }
    Eigen::VectorXd out = Eigen::VectorXd::Zero(t);
    for (int r = 0; r <= d; ++r) out[span - d + r] = vals[r];
    return out;
  }

  Eigen::VectorXd eval_centered(double z) const {
    return eval_raw(z) - column_means;
  }
};

namespace detail {

// Linear-interpolation quantile of a sorted vector, f in [0, 1].
inline double quantile_sorted(const std::vector<double>& sorted, double f) {
  const auto n = sorted.size();
  if (n == 1) return sorted[0];
  double h = f * static_cast<double>(n - 1);
  auto lo = static_cast<std::size_t>(h);
  if (lo >= n - 1) return sorted[n - 1];
  double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline bool strictly_increasing(const std::vector<double>& v, double lo,
                                double hi) {
  double prev = lo;
  for (double x : v) {
    if (x <= prev) return false;
    prev = x;
  }
  return v.empty() || v.back() < hi;
}

}  // namespace detail

// Builds a basis with knots at empirical quantiles of the samples; boundary
// knots are repeated degree+1 times. Falls back to quantiles of the distinct
// values when ties in the sample make the quantile sequence collide.
inline SplineBasis make_basis(std::span<const double> samples,
                              int num_functions, int degree = 3,
                              int covariate_index = 1) {
  if (samples.empty()) throw DegenerateCovariate("make_basis: empty sample");
  if (degree < 1) throw Error("make_basis: degree must be >= 1");
  if (num_functions < degree + 1)
    throw Error("make_basis: num_functions must be >= degree + 1");

  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front();
  const double hi = sorted.back();
  if (!(hi > lo))
    throw DegenerateCovariate("make_basis: covariate " +
                              std::to_string(covariate_index) +
                              " has zero-width domain");

  const int interior = num_functions - degree - 1;
  std::vector<double> distinct;
  distinct.reserve(sorted.size());
  for (double x : sorted)
    if (distinct.empty() || x > distinct.back()) distinct.push_back(x);
  if (static_cast<int>(distinct.size()) < interior + 2)
    throw DegenerateCovariate(
        "make_basis: covariate " + std::to_string(covariate_index) + " has " +
        std::to_string(distinct.size()) + " distinct values, needs at least " +
        std::to_string(interior + 2));

  std::vector<double> inner(interior);
  for (int i = 0; i < interior; ++i)
    inner[i] = detail::quantile_sorted(
        sorted, static_cast<double>(i + 1) / (interior + 1));
  if (!detail::strictly_increasing(inner, lo, hi)) {
    // heavy ties: quantiles over the distinct values are strictly increasing
    for (int i = 0; i < interior; ++i)
      inner[i] = detail::quantile_sorted(
          distinct, static_cast<double>(i + 1) / (interior + 1));
  }

  SplineBasis basis;
  basis.covariate_index = covariate_index;
  basis.degree = degree;
  basis.num_functions = num_functions;
  basis.domain_lo = lo;
  basis.domain_hi = hi;
  basis.knots.reserve(num_functions + degree + 1);
  for (int i = 0; i <= degree; ++i) basis.knots.push_back(lo);
  basis.knots.insert(basis.knots.end(), inner.begin(), inner.end());
  for (int i = 0; i <= degree; ++i) basis.knots.push_back(hi);

  basis.column_means = Eigen::VectorXd::Zero(num_functions);
  for (double x : samples) basis.column_means += basis.eval_raw(x);
  basis.column_means /= static_cast<double>(samples.size());
  return basis;
}

inline SplineBasis make_basis(const Eigen::VectorXd& samples,
                              int num_functions, int degree = 3,
                              int covariate_index = 1) {
  return make_basis(std::span<const double>(samples.data(), samples.size()),
                    num_functions, degree, covariate_index);
}

struct DesignBlock {
  int covariate_index = 1;
  Eigen::Index col_begin = 0;
  Eigen::Index cols = 0;
};

struct DesignMatrix {
  Eigen::MatrixXd values;           // n x sum(T_j)
  std::vector<DesignBlock> blocks;  // partition of columns, in order

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  int num_blocks() const { return static_cast<int>(blocks.size()); }

  auto block(int j) const {
    return values.middleCols(blocks[j].col_begin, blocks[j].cols);
  }
};

inline DesignMatrix build_design(const std::vector<SplineBasis>& bases,
                                 const Eigen::MatrixXd& covariates) {
  if (static_cast<Eigen::Index>(bases.size()) != covariates.cols())
    throw ShapeError("build_design: " + std::to_string(bases.size()) +
                     " bases for " + std::to_string(covariates.cols()) +
                     " covariate columns");
  DesignMatrix design;
  Eigen::Index total = 0;
  for (const auto& b : bases) total += b.num_functions;
  design.values.resize(covariates.rows(), total);
  Eigen::Index offset = 0;
  for (std::size_t j = 0; j < bases.size(); ++j) {
    const auto& b = bases[j];
    for (Eigen::Index i = 0; i < covariates.rows(); ++i)
      design.values.row(i).segment(offset, b.num_functions) =
          b.eval_centered(covariates(i, static_cast<Eigen::Index>(j)))
              .transpose();
    design.blocks.push_back(
        {b.covariate_index, offset, static_cast<Eigen::Index>(b.num_functions)});
    offset += b.num_functions;
  }
  return design;
}

struct RidgeFit {
  Eigen::VectorXd coefficients;
  double intercept = 0.0;  // sample mean of the raw responses
  double regularizer_nu = 0.0;
  double residual_norm = 0.0;
};

namespace detail {

// Solves (G + nu I) x = rhs for symmetric PSD G. With nu = 0 the system must
// be full rank (SingularSystem otherwise); with nu > 0 a trace-scaled jitter
// is retried when the factorization is unusable.
inline Eigen::VectorXd solve_regularized(Eigen::MatrixXd G,
                                         const Eigen::VectorXd& rhs,
                                         double nu) {
  const auto dim = G.rows();
  if (nu == 0.0) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(G);
    if (cod.rank() < dim)
      throw SingularSystem("solve_regularized: rank-deficient system, nu = 0");
    return cod.solve(rhs);
  }
  G.diagonal().array() += nu;
  auto try_solve = [&](const Eigen::MatrixXd& M,
                       Eigen::VectorXd& out) -> bool {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
    if (ldlt.info() != Eigen::Success) return false;
    out = ldlt.solve(rhs);
    double err = (M * out - rhs).lpNorm<Eigen::Infinity>();
    return err <= 1e-8 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
  };
  Eigen::VectorXd x;
  if (try_solve(G, x)) return x;
  double jitter = 1e-10 * G.trace() / static_cast<double>(dim);
  if (!(jitter > 0.0)) jitter = 1e-12;
  for (int attempt = 0; attempt < 3; ++attempt) {
    Eigen::MatrixXd M = G;
    M.diagonal().array() += jitter;
    if (try_solve(M, x)) return x;
    jitter *= 1e3;
  }
  throw SingularSystem("solve_regularized: factorization failed");
}

}  // namespace detail

// Penalized least squares on centered responses:
//   beta = argmin |y_c - S beta|^2 + nu |beta|^2,  y_c = y - mean(y).
// The intercept is exactly the raw-response mean.
inline RidgeFit fit_ridge(const DesignMatrix& design,
                          const Eigen::VectorXd& responses, double nu) {
  if (responses.size() != design.rows())
    throw ShapeError("fit_ridge: responses length " +
                     std::to_string(responses.size()) + " vs design rows " +
                     std::to_string(design.rows()));
  if (nu < 0.0) throw Error("fit_ridge: nu must be >= 0");
  RidgeFit fit;
  fit.intercept = responses.mean();
  fit.regularizer_nu = nu;
  Eigen::VectorXd yc = responses.array() - fit.intercept;
  Eigen::MatrixXd G = design.values.transpose() * design.values;
  Eigen::VectorXd rhs = design.values.transpose() * yc;
  fit.coefficients = detail::solve_regularized(std::move(G), rhs, nu);
  fit.residual_norm = (yc - design.values * fit.coefficients).norm();
  return fit;
}

inline Eigen::VectorXd predict_ridge(const RidgeFit& fit,
                                     const DesignMatrix& design) {
  if (fit.coefficients.size() != design.cols())
    throw ShapeError("predict_ridge: coefficient length " +
                     std::to_string(fit.coefficients.size()) +
                     " vs design cols " + std::to_string(design.cols()));
  return (design.values * fit.coefficients).array() + fit.intercept;
}

}  // namespace shared_transfer
