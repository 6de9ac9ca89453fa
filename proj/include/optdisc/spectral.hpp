#pragma once

// PCCA+ on a symmetric adjacency matrix: random-walk Laplacian, spectral gap selection,
// simplex vertex search and the linear membership transform.
//
// Everything here is a template on the Eigen scalar type; double is the production
// instantiation, float is exercised by the tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "optdisc/error.hpp"

namespace optdisc {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct SpectralParams {
  /// Spectral gap threshold t_c.
  double t_c = 0.8;
  /// Two abstract states are connected when C(i,j) / sqrt(C(i,i) C(j,j)) exceeds this.
  double tau_conn = 0.02;
};

/// Row-stochastic L = Diag(rowsum W)^-1 W over the states with positive degree.
template <typename Scalar>
struct StochasticLaplacian {
  MatrixX<Scalar> L;
  VectorX<Scalar> degree;
  /// kept[i] is the original index of reduced row i. Zero-degree states are dropped.
  std::vector<Eigen::Index> kept;
  Eigen::Index original_size = 0;

  Eigen::Index size() const { return L.rows(); }
  bool reduced() const { return static_cast<Eigen::Index>(kept.size()) != original_size; }
};

template <typename Derived>
StochasticLaplacian<typename Derived::Scalar> build_laplacian(const Eigen::MatrixBase<Derived>& W) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = W.rows();
  if (n == 0 || W.cols() != n) throw InvalidArgument("adjacency must be square and nonempty");
  if ((W.array() < Scalar(0)).any()) throw InvalidArgument("adjacency has negative entries");
  const Scalar scale = std::max(Scalar(1), W.cwiseAbs().maxCoeff());
  if (((W - W.transpose()).cwiseAbs().array() > Scalar(64) * std::numeric_limits<Scalar>::epsilon() * scale).any()) {
    throw InvalidArgument("adjacency must be symmetric");
  }

  const VectorX<Scalar> rowsum = W.rowwise().sum();
  StochasticLaplacian<Scalar> out;
  out.original_size = n;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (rowsum(i) > Scalar(0)) out.kept.push_back(i);
  }
  if (out.kept.empty()) throw NumericError("adjacency is all zero");

  const auto m = static_cast<Eigen::Index>(out.kept.size());
  out.L.resize(m, m);
  out.degree.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) out.L(i, j) = W(out.kept[i], out.kept[j]);
  }
  out.degree = out.L.rowwise().sum();
  out.L.array().colwise() /= out.degree.array();
  return out;
}

/// Full spectrum of L, eigenvalues descending; eigenvectors are right eigenvectors of L
/// normalised so that v^T Diag(degree) v = 1.
template <typename Scalar>
struct SpectralDecomposition {
  VectorX<Scalar> eigenvalues;
  MatrixX<Scalar> eigenvectors;
};

template <typename Scalar>
SpectralDecomposition<Scalar> decompose(const StochasticLaplacian<Scalar>& lap) {
  const Eigen::Index n = lap.size();
  const VectorX<Scalar> sqrt_deg = lap.degree.cwiseSqrt();
  // Diag^{1/2} L Diag^{-1/2} = Diag^{-1/2} W Diag^{-1/2}, symmetric.
  MatrixX<Scalar> sym = sqrt_deg.asDiagonal() * lap.L * sqrt_deg.cwiseInverse().asDiagonal();
  sym = (sym + sym.transpose()).eval() / Scalar(2);

  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> solver(sym);
  if (solver.info() != Eigen::Success) throw NumericError("symmetric eigensolver failed");

  SpectralDecomposition<Scalar> out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = sqrt_deg.cwiseInverse().asDiagonal() * solver.eigenvectors().rowwise().reverse();
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index pivot = 0;
    out.eigenvectors.col(c).cwiseAbs().maxCoeff(&pivot);
    if (out.eigenvectors(pivot, c) < Scalar(0)) out.eigenvectors.col(c) *= Scalar(-1);
  }
  return out;
}

/// max_i ||L v_i - e_i v_i||_2 over the first `count` pairs.
template <typename Scalar>
Scalar max_eigen_residual(const StochasticLaplacian<Scalar>& lap, const SpectralDecomposition<Scalar>& spec,
                          Eigen::Index count) {
  Scalar worst = 0;
  for (Eigen::Index i = 0; i < count; ++i) {
    const VectorX<Scalar> v = spec.eigenvectors.col(i);
    worst = std::max(worst, (lap.L * v - spec.eigenvalues(i) * v).norm());
  }
  return worst;
}

struct GapSelection {
  int k = 0;
  double ratio = 0.0;
  /// No ratio exceeded t_c; k is the argmax of the ratios instead.
  bool fallback = false;
  /// ratios[k - 1] = (e_k - e_{k+1}) / (1 - e_{k+1}) for k = 1 .. n-1.
  std::vector<double> ratios;
};

/// Smallest k >= 2 with (e_k - e_{k+1}) / (1 - e_{k+1}) > t_c.
template <typename Derived>
GapSelection select_k(const Eigen::DenseBase<Derived>& eigenvalues, double t_c) {
  const Eigen::Index n = eigenvalues.size();
  if (n < 3) throw InvalidArgument("select_k needs at least 3 eigenvalues");
  if (!(t_c > 0.0 && t_c < 1.0)) throw InvalidArgument("t_c must lie in (0, 1)");
  using Scalar = typename Derived::Scalar;
  const double slack = std::max(1e-9, 64.0 * static_cast<double>(std::numeric_limits<Scalar>::epsilon()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = static_cast<double>(eigenvalues(i));
    if (!std::isfinite(e)) throw InvalidArgument("eigenvalues must be finite");
    if (i == 0 && e > 1.0 + slack) throw InvalidArgument("leading eigenvalue exceeds 1");
    if (i > 0 && e > static_cast<double>(eigenvalues(i - 1)) + 1e-12) {
      throw InvalidArgument("eigenvalues must be sorted descending");
    }
  }

  GapSelection out;
  for (Eigen::Index k = 1; k < n; ++k) {
    const double ek = static_cast<double>(eigenvalues(k - 1));
    const double next = static_cast<double>(eigenvalues(k));
    const double denom = 1.0 - next;
    // A degenerate eigenvalue at 1 has no gap below it.
    out.ratios.push_back(denom > 1e-12 ? (ek - next) / denom : 0.0);
  }
  for (Eigen::Index k = 2; k < n; ++k) {
    if (out.ratios[static_cast<std::size_t>(k - 1)] > t_c) {
      out.k = static_cast<int>(k);
      out.ratio = out.ratios[static_cast<std::size_t>(k - 1)];
      return out;
    }
  }
  out.fallback = true;
  out.k = 2;
  out.ratio = out.ratios[1];
  for (Eigen::Index k = 3; k < n; ++k) {
    if (out.ratios[static_cast<std::size_t>(k - 1)] > out.ratio) {
      out.k = static_cast<int>(k);
      out.ratio = out.ratios[static_cast<std::size_t>(k - 1)];
    }
  }
  return out;
}

template <typename Scalar>
struct SpectralResult {
  VectorX<Scalar> eigenvalues;
  /// N x k, leading eigenvectors as columns.
  MatrixX<Scalar> Y;
  int k = 0;
  GapSelection gap;
};

template <typename Scalar>
SpectralResult<Scalar> spectral_analysis(const StochasticLaplacian<Scalar>& lap, double t_c) {
  SpectralDecomposition<Scalar> dec = decompose(lap);
  SpectralResult<Scalar> out;
  out.gap = select_k(dec.eigenvalues, t_c);
  out.k = out.gap.k;
  out.Y = dec.eigenvectors.leftCols(out.k);
  out.eigenvalues = std::move(dec.eigenvalues);
  return out;
}

struct SimplexVertices {
  std::vector<Eigen::Index> indices;
  bool pseudo_inverse_used = false;
};

/// Inner simplex search over the rows of Y: the first vertex has maximal norm, each
/// further vertex is farthest from the span of the rows already chosen.
template <typename Derived>
SimplexVertices find_simplex_vertices(const Eigen::MatrixBase<Derived>& Y) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = Y.rows();
  const Eigen::Index k = Y.cols();
  if (k < 1 || n < k) throw InvalidArgument("simplex search needs N >= k >= 1 rows");

  SimplexVertices out;
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  auto pick = [&](const VectorX<Scalar>& score) {
    Eigen::Index best = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      if (best < 0 || score(i) > score(best)) best = i;
    }
    taken[static_cast<std::size_t>(best)] = 1;
    out.indices.push_back(best);
  };

  pick(Y.rowwise().norm());
  for (Eigen::Index i = 1; i < k; ++i) {
    MatrixX<Scalar> basis(static_cast<Eigen::Index>(out.indices.size()), k);
    for (Eigen::Index r = 0; r < basis.rows(); ++r) basis.row(r) = Y.row(out.indices[static_cast<std::size_t>(r)]);
    const MatrixX<Scalar> gram = basis * basis.transpose();
    Eigen::FullPivLU<MatrixX<Scalar>> lu(gram);
    MatrixX<Scalar> gram_inv;
    if (lu.isInvertible()) {
      gram_inv = lu.inverse();
    } else {
      gram_inv = gram.completeOrthogonalDecomposition().pseudoInverse();
      out.pseudo_inverse_used = true;
    }
    const MatrixX<Scalar> projector = basis.transpose() * gram_inv * basis;
    const MatrixX<Scalar> residual = Y - Y * projector.transpose();
    pick(residual.rowwise().norm());
  }
  return out;
}

template <typename Scalar>
struct MembershipMatrix {
  /// Clamped, row-normalised memberships; rows lie on the probability simplex.
  MatrixX<Scalar> chi;
  /// Y * A before clamping.
  MatrixX<Scalar> raw;
  std::vector<Eigen::Index> vertices;
  bool pseudo_inverse_used = false;

  Eigen::Index num_states() const { return chi.rows(); }
  Eigen::Index num_clusters() const { return chi.cols(); }
};

/// chi = Y * inverse(Y restricted to the vertex rows), then negatives clamped and rows renormalised.
template <typename Derived>
MembershipMatrix<typename Derived::Scalar> compute_memberships(const Eigen::MatrixBase<Derived>& Y,
                                                               const std::vector<Eigen::Index>& vertices) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index k = Y.cols();
  if (static_cast<Eigen::Index>(vertices.size()) != k) throw InvalidArgument("need one vertex per column of Y");

  MatrixX<Scalar> vertex_rows(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    const Eigen::Index v = vertices[static_cast<std::size_t>(i)];
    if (v < 0 || v >= Y.rows()) throw InvalidArgument("vertex index out of range");
    vertex_rows.row(i) = Y.row(v);
  }

  MembershipMatrix<Scalar> out;
  out.vertices = vertices;
  Eigen::FullPivLU<MatrixX<Scalar>> lu(vertex_rows);
  MatrixX<Scalar> transform;
  if (lu.isInvertible()) {
    transform = lu.inverse();
  } else {
    auto cod = vertex_rows.completeOrthogonalDecomposition();
    if (cod.rank() == 0) throw NumericError("vertex matrix is zero; no membership transform");
    transform = cod.pseudoInverse();
    out.pseudo_inverse_used = true;
  }
  out.raw = Y * transform;

  out.chi = out.raw.cwiseMax(Scalar(0));
  for (Eigen::Index r = 0; r < out.chi.rows(); ++r) {
    const Scalar total = out.chi.row(r).sum();
    if (total > Scalar(0)) {
      out.chi.row(r) /= total;
    } else {
      Eigen::Index best = 0;
      out.raw.row(r).maxCoeff(&best);
      out.chi.row(r).setZero();
      out.chi(r, best) = Scalar(1);
    }
  }
  return out;
}

/// C = chi^T L chi; off-diagonal entries are inter-cluster connectivity.
template <typename DerivedChi, typename DerivedL>
MatrixX<typename DerivedChi::Scalar> connectivity(const Eigen::MatrixBase<DerivedChi>& chi,
                                                  const Eigen::MatrixBase<DerivedL>& L) {
  if (chi.rows() != L.rows() || L.rows() != L.cols()) throw InvalidArgument("connectivity dimension mismatch");
  return chi.transpose() * L * chi;
}

/// C(i,j) / sqrt(C(i,i) C(j,j)); zero where a diagonal entry is not positive.
template <typename Derived>
MatrixX<typename Derived::Scalar> normalized_connectivity(const Eigen::MatrixBase<Derived>& C) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out = MatrixX<Scalar>::Zero(C.rows(), C.cols());
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    for (Eigen::Index j = 0; j < C.cols(); ++j) {
      const Scalar scale = C(i, i) * C(j, j);
      if (C(i, i) > Scalar(0) && C(j, j) > Scalar(0)) out(i, j) = C(i, j) / std::sqrt(scale);
    }
  }
  return out;
}

/// Ordered pairs (i, j), i != j, whose normalised connectivity exceeds tau_conn.
template <typename Derived>
std::vector<std::pair<int, int>> connected_pairs(const Eigen::MatrixBase<Derived>& C, double tau_conn) {
  const auto norm = normalized_connectivity(C);
  std::vector<std::pair<int, int>> out;
  for (Eigen::Index i = 0; i < C.rows(); ++i) {
    for (Eigen::Index j = 0; j < C.cols(); ++j) {
      if (i != j && std::abs(static_cast<double>(norm(i, j))) > tau_conn) {
        out.emplace_back(static_cast<int>(i), static_cast<int>(j));
      }
    }
  }
  return out;
}

/// Scatters reduced rows back to the original index space; dropped rows are zero.
template <typename Derived>
MatrixX<typename Derived::Scalar> expand_rows(const Eigen::MatrixBase<Derived>& reduced,
                                              const std::vector<Eigen::Index>& kept, Eigen::Index original_size) {
  MatrixX<typename Derived::Scalar> out = MatrixX<typename Derived::Scalar>::Zero(original_size, reduced.cols());
  for (std::size_t i = 0; i < kept.size(); ++i) out.row(kept[i]) = reduced.row(static_cast<Eigen::Index>(i));
  return out;
}

template <typename Scalar>
struct PccaResult {
  StochasticLaplacian<Scalar> laplacian;
  SpectralResult<Scalar> spectrum;
  MembershipMatrix<Scalar> membership;
  MatrixX<Scalar> connectivity;
  bool vertex_pseudo_inverse_used = false;

  int k() const { return spectrum.k; }

  /// Memberships in the original state space; dropped states get zero rows.
  MatrixX<Scalar> full_chi() const {
    return expand_rows(membership.chi, laplacian.kept, laplacian.original_size);
  }
  MatrixX<Scalar> full_raw() const {
    return expand_rows(membership.raw, laplacian.kept, laplacian.original_size);
  }
};

/// Laplacian, spectrum, vertex search, memberships and connectivity in one pass.
template <typename Derived>
PccaResult<typename Derived::Scalar> pcca(const Eigen::MatrixBase<Derived>& W, double t_c) {
  using Scalar = typename Derived::Scalar;
  PccaResult<Scalar> out;
  out.laplacian = build_laplacian(W);
  if (out.laplacian.size() < 3) {
    throw NumericError("PCCA+ needs at least 3 states with positive degree, got " +
                       std::to_string(out.laplacian.size()));
  }
  out.spectrum = spectral_analysis(out.laplacian, t_c);
  const SimplexVertices vertices = find_simplex_vertices(out.spectrum.Y);
  out.vertex_pseudo_inverse_used = vertices.pseudo_inverse_used;
  out.membership = compute_memberships(out.spectrum.Y, vertices.indices);
  out.connectivity = connectivity(out.membership.chi, out.laplacian.L);
  return out;
}

}  // namespace optdisc
