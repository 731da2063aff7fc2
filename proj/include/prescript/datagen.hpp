#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "prescript/errors.hpp"
#include "prescript/model.hpp"
#include "prescript/rng.hpp"

namespace prescript::datagen {

/// Minimal dense square-matrix helper for the generator routines.
struct Matrix {
  std::size_t n = 0;
  std::vector<double> data;

  Matrix() = default;
  explicit Matrix(std::size_t size) : n(size), data(size * size, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return data[i * n + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * n + j]; }
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.n);
  for (std::size_t i = 0; i < a.n; ++i)
    for (std::size_t k = 0; k < a.n; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < a.n; ++j) c.at(i, j) += aik * b.at(k, j);
    }
  return c;
}

/// Eigendecomposition of a symmetric matrix by the cyclic Jacobi method.
/// Returns eigenvalues and the orthogonal matrix whose columns are the
/// corresponding eigenvectors. For a symmetric PSD input this coincides with
/// its singular value decomposition.
inline void jacobi_eigendecomposition(const Matrix& input, std::vector<double>& eigenvalues,
                                      Matrix& eigenvectors) {
  const std::size_t n = input.n;
  Matrix a = input;
  eigenvectors = Matrix(n);
  for (std::size_t i = 0; i < n; ++i) eigenvectors.at(i, i) = 1.0;

  double norm = 0.0;
  for (double v : a.data) norm += v * v;
  const double stop = 1e-24 * std::max(norm, 1.0);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += 2.0 * a.at(p, q) * a.at(p, q);
    if (off < stop) break;

    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a.at(p, q);
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a.at(k, p);
          const double akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a.at(p, k);
          const double aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = eigenvectors.at(k, p);
          const double vkq = eigenvectors.at(k, q);
          eigenvectors.at(k, p) = c * vkp - s * vkq;
          eigenvectors.at(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  eigenvalues.resize(n);
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a.at(i, i);
}

/// Random symmetric positive-definite matrix.
///
/// Draws A with uniform [0,1) entries, eigendecomposes M = A'A, and rebuilds
/// the matrix with its spectrum replaced by fresh draws of 1 + uniform[0,1):
/// M' = V diag(1 + u) V'. Every eigenvalue of the result therefore lies in
/// [1, 2]. `factor_weight` optionally adds a w * ones(n) term to the replaced
/// spectrum (a shared-factor component that induces strong cross
/// correlations); the default of zero leaves the construction plain.
inline Matrix make_spd_matrix(std::size_t n, std::uint64_t seed, double factor_weight = 0.0) {
  if (n < 1) throw InvalidInput("make_spd_matrix needs n >= 1");
  Rng rng(seed);
  Matrix a(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a.at(i, j) = rng.uniform01();

  Matrix gram(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) sum += a.at(k, i) * a.at(k, j);
      gram.at(i, j) = sum;
    }

  std::vector<double> discarded;
  Matrix vectors;
  jacobi_eigendecomposition(gram, discarded, vectors);

  std::vector<double> spectrum(n);
  for (std::size_t i = 0; i < n; ++i) spectrum[i] = 1.0 + rng.uniform01();

  // M' = V (diag(spectrum) + w * ones) V'
  Matrix result(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t k = 0; k < n; ++k) sum += vectors.at(i, k) * spectrum[k] * vectors.at(j, k);
      result.at(i, j) = sum;
      result.at(j, i) = sum;
    }
  if (factor_weight != 0.0) {
    std::vector<double> v_ones(n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < n; ++k) v_ones[i] += vectors.at(i, k);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) result.at(i, j) += factor_weight * v_ones[i] * v_ones[j];
  }
  return result;
}

/// Standard deviations for the stacked (zeta, xi) vector.
struct CovarianceSpec {
  std::vector<double> sigma_zeta;
  std::vector<double> sigma_xi;

  std::size_t dimension() const { return sigma_zeta.size() + sigma_xi.size(); }

  void validate() const {
    for (double s : sigma_zeta)
      if (!(s > 0.0)) throw InvalidInput("sigma_zeta entries must be positive");
    for (double s : sigma_xi)
      if (!(s > 0.0)) throw InvalidInput("sigma_xi entries must be positive");
  }
};

/// Rescales an SPD matrix to a covariance matrix with prescribed standard
/// deviations: Corr = D^{-1/2} M D^{-1/2} with D = diag(M), then
/// Cov = diag(sigma) Corr diag(sigma).
inline Matrix covariance_with_std(const Matrix& m, const CovarianceSpec& spec) {
  spec.validate();
  if (spec.dimension() != m.n) throw InvalidInput("covariance spec dimension mismatch");
  std::vector<double> scale(m.n);
  for (std::size_t i = 0; i < m.n; ++i) {
    const double d = m.at(i, i);
    if (!(d > 0.0)) throw InvalidInput("input matrix has a nonpositive diagonal entry");
    scale[i] = 1.0 / std::sqrt(d);
  }
  std::vector<double> sigma;
  sigma.reserve(m.n);
  sigma.insert(sigma.end(), spec.sigma_zeta.begin(), spec.sigma_zeta.end());
  sigma.insert(sigma.end(), spec.sigma_xi.begin(), spec.sigma_xi.end());

  Matrix cov(m.n);
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = 0; j < m.n; ++j)
      cov.at(i, j) = sigma[i] * (scale[i] * m.at(i, j) * scale[j]) * sigma[j];
  return cov;
}

namespace detail {

/// Lower-triangular Cholesky factor; false if the matrix is not numerically PD.
inline bool cholesky(const Matrix& m, Matrix& lower) {
  const std::size_t n = m.n;
  lower = Matrix(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = m.at(i, j);
      for (std::size_t k = 0; k < j; ++k) sum -= lower.at(i, k) * lower.at(j, k);
      if (i == j) {
        if (sum <= 0.0) return false;
        lower.at(i, i) = std::sqrt(sum);
      } else {
        lower.at(i, j) = sum / lower.at(j, j);
      }
    }
  }
  return true;
}

}  // namespace detail

/// Draws N observations of the stacked (zeta, xi) vector from N(mu, cov) and
/// splits them into covariate/cost pairs. Cost coordinates are clamped below
/// at 1e-6 so travel times stay positive. If the first factorization fails a
/// single jitter of 1e-10 I is applied before giving up.
inline Dataset sample_dataset(const std::vector<double>& mu, const Matrix& cov, std::size_t n_zeta,
                              std::size_t count, std::uint64_t seed,
                              DatasetRole role = DatasetRole::kTrain) {
  if (mu.size() != cov.n) throw InvalidInput("mean/covariance dimension mismatch");
  if (n_zeta >= mu.size()) throw InvalidInput("n_zeta must be smaller than the stacked dimension");
  if (count == 0) throw InvalidInput("sample_dataset needs count >= 1");

  Matrix lower;
  if (!detail::cholesky(cov, lower)) {
    Matrix jittered = cov;
    for (std::size_t i = 0; i < cov.n; ++i) jittered.at(i, i) += 1e-10;
    if (!detail::cholesky(jittered, lower))
      throw NumericalError("covariance factorization failed even after jitter");
  }

  Rng rng(seed);
  const std::size_t dim = mu.size();
  Dataset dataset;
  dataset.role = role;
  dataset.pairs.reserve(count);
  std::vector<double> z(dim);
  for (std::size_t obs = 0; obs < count; ++obs) {
    for (std::size_t i = 0; i < dim; ++i) z[i] = rng.normal();
    CovariateVector zeta(n_zeta);
    CostVector xi(dim - n_zeta);
    for (std::size_t i = 0; i < dim; ++i) {
      double value = mu[i];
      for (std::size_t k = 0; k <= i; ++k) value += lower.at(i, k) * z[k];
      if (i < n_zeta)
        zeta[i] = value;
      else
        xi[i - n_zeta] = std::max(value, 1e-6);
    }
    dataset.pairs.emplace_back(std::move(zeta), std::move(xi));
  }
  return dataset;
}

/// Grid DAG with `rows` x `cols` nodes, arcs pointing right and down, origin
/// at the top-left corner and destination at the bottom-right. Arc order: for
/// each node in row-major order, its rightward arc first, then its downward
/// arc.
inline DirectedGraph make_graph(int rows, int cols) {
  if (rows < 2 || cols < 2) throw InvalidInput("grid graph needs rows, cols >= 2");
  DirectedGraph graph;
  graph.node_count = rows * cols;
  graph.origin = 0;
  graph.destination = rows * cols - 1;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int id = r * cols + c;
      if (c + 1 < cols) graph.arcs.emplace_back(id, id + 1);
      if (r + 1 < rows) graph.arcs.emplace_back(id, id + cols);
    }
  graph.validate();
  return graph;
}

/// Multiplicative mean perturbation with i.i.d. relative shifts.
struct ShiftSpec {
  double max_perturbation = 0.0;  // m
  std::uint64_t seed = 0;

  void validate() const {
    if (!(max_perturbation >= 0.0) || max_perturbation > 1.0)
      throw InvalidInput("max perturbation must lie in [0, 1]");
  }
};

/// Each mean coordinate becomes (1 + delta_i) * mu_i with delta_i drawn
/// i.i.d. uniform on [0, m].
inline std::vector<double> perturb_means(const std::vector<double>& mu_xi, const ShiftSpec& shift) {
  shift.validate();
  Rng rng(shift.seed);
  std::vector<double> shifted(mu_xi.size());
  for (std::size_t i = 0; i < mu_xi.size(); ++i)
    shifted[i] = (1.0 + shift.max_perturbation * rng.uniform01()) * mu_xi[i];
  return shifted;
}

}  // namespace prescript::datagen
