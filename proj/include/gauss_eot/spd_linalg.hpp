#ifndef GAUSS_EOT_SPD_LINALG_HPP
#define GAUSS_EOT_SPD_LINALG_HPP

// Dense symmetric / symmetric-positive-definite matrix kernel.
//
// Every matrix function goes through a full symmetric eigendecomposition.
// Non-symmetric products such as (K0 K1)^{1/2} are never eigensolved
// directly; they are expressed through a similarity transform of a
// symmetric congruence so that all spectral work stays symmetric.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gauss_eot/errors.hpp"

namespace gauss_eot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace detail {

inline double parse_floor_env() {
  const char* raw = std::getenv("GAUSS_EOT_EPS_FLOOR");
  if (raw == nullptr || *raw == '\0') return 1e-12;
  char* end = nullptr;
  const double value = std::strtod(raw, &end);
  if (end == raw || *end != '\0' || !(value > 0.0) || !(value < 1.0)) {
    return 1e-12;
  }
  return value;
}

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() < 1) {
    std::ostringstream os;
    os << what << ": expected a non-empty square matrix, got " << m.rows()
       << "x" << m.cols();
    throw DimensionMismatch(os.str());
  }
}

}  // namespace detail

/// Relative eigenvalue floor for positive definiteness: a matrix is accepted
/// when lambda_min > eps_pd * lambda_max. Reads GAUSS_EOT_EPS_FLOOR once.
inline double default_eps_pd() {
  static const double floor = detail::parse_floor_env();
  return floor;
}

inline double frobenius(const Matrix& m) { return m.norm(); }

/// ||a - b||_F / ||b||_F, falling back to the absolute norm when b == 0.
inline double rel_frobenius(const Matrix& a, const Matrix& b) {
  const double denom = b.norm();
  const double diff = (a - b).norm();
  return denom > 0.0 ? diff / denom : diff;
}

/// Real symmetric matrix. Construction symmetrizes, so entries are exactly
/// mirrored. May be indefinite.
class SymMatrix {
 public:
  explicit SymMatrix(const Matrix& m) {
    detail::require_square(m, "SymMatrix");
    m_ = detail::symmetrized(m);
  }

  static SymMatrix identity(Index n) { return SymMatrix(Matrix::Identity(n, n)); }
  static SymMatrix diagonal(const Vector& d) { return SymMatrix(Matrix(d.asDiagonal())); }

  Index dim() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }
  double trace() const { return m_.trace(); }

 private:
  Matrix m_;
};

/// Symmetric positive-definite matrix with its eigendecomposition cached.
class SpdMatrix {
 public:
  explicit SpdMatrix(const SymMatrix& s, double floor = default_eps_pd())
      : sym_(s) {
    if (!s.matrix().allFinite()) {
      throw DegenerateMatrix("SpdMatrix: non-finite entries");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(s.matrix());
    if (es.info() != Eigen::Success) {
      throw DegenerateMatrix("SpdMatrix: eigendecomposition failed");
    }
    evals_ = es.eigenvalues();
    evecs_ = es.eigenvectors();
    check_floor(floor);
  }

  explicit SpdMatrix(const Matrix& m, double floor = default_eps_pd())
      : SpdMatrix(SymMatrix(m), floor) {}

  static SpdMatrix identity(Index n) { return SpdMatrix(SymMatrix::identity(n)); }
  static SpdMatrix diagonal(const Vector& d) { return SpdMatrix(SymMatrix::diagonal(d)); }

  /// Builds V diag(lambda) V^T from a known spectrum without re-solving.
  static SpdMatrix from_spectrum(const Matrix& vectors, const Vector& lambda,
                                 double floor = default_eps_pd()) {
    SpdMatrix out(SymMatrix(vectors * lambda.asDiagonal() * vectors.transpose()),
                  vectors, lambda);
    out.check_floor(floor);
    return out;
  }

  Index dim() const noexcept { return sym_.dim(); }
  const Matrix& matrix() const noexcept { return sym_.matrix(); }
  const SymMatrix& sym() const noexcept { return sym_; }
  /// Ascending eigenvalues.
  const Vector& eigenvalues() const noexcept { return evals_; }
  const Matrix& eigenvectors() const noexcept { return evecs_; }
  double min_eigenvalue() const { return evals_(0); }
  double max_eigenvalue() const { return evals_(evals_.size() - 1); }
  double trace() const { return sym_.trace(); }
  operator const SymMatrix&() const noexcept { return sym_; }

  /// V f(Lambda) V^T for a scalar function f, symmetrized.
  template <class F>
  Matrix spectral(F&& f) const {
    const Vector fl = evals_.unaryExpr(f);
    return detail::symmetrized(evecs_ * fl.asDiagonal() * evecs_.transpose());
  }

  /// Same as spectral() but keeps the result as an SPD value.
  template <class F>
  SpdMatrix spectral_spd(F&& f, double floor = default_eps_pd()) const {
    return from_spectrum(evecs_, evals_.unaryExpr(f), floor);
  }

 private:
  SpdMatrix(const SymMatrix& s, const Matrix& vectors, const Vector& lambda)
      : sym_(s), evals_(lambda.size()), evecs_(vectors.rows(), vectors.cols()) {
    // from_spectrum does not guarantee ascending order.
    std::vector<Index> order(static_cast<std::size_t>(lambda.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return lambda(a) < lambda(b); });
    for (Index k = 0; k < lambda.size(); ++k) {
      const Index src = order[static_cast<std::size_t>(k)];
      evals_(k) = lambda(src);
      evecs_.col(k) = vectors.col(src);
    }
  }

  void check_floor(double floor) const {
    if (!evals_.allFinite()) {
      throw DegenerateMatrix("SpdMatrix: non-finite eigenvalues");
    }
    const double lo = evals_.minCoeff();
    const double hi = evals_.maxCoeff();
    if (!(lo > 0.0) || !(lo > floor * hi)) {
      std::ostringstream os;
      os << "SpdMatrix: eigenvalue " << lo << " below floor " << floor
         << " x " << hi;
      throw DegenerateMatrix(os.str());
    }
  }

  SymMatrix sym_;
  Vector evals_;
  Matrix evecs_;
};

inline void require_same_dim(Index a, Index b, const char* what) {
  if (a != b) {
    std::ostringstream os;
    os << what << ": dimension " << a << " vs " << b;
    throw DimensionMismatch(os.str());
  }
}

inline SpdMatrix spd_sqrt(const SpdMatrix& k) {
  return k.spectral_spd([](double l) { return std::sqrt(l); });
}

inline SpdMatrix spd_inv_sqrt(const SpdMatrix& k) {
  return k.spectral_spd([](double l) { return 1.0 / std::sqrt(l); });
}

inline SpdMatrix spd_inverse(const SpdMatrix& k) {
  return k.spectral_spd([](double l) { return 1.0 / l; });
}

inline double spd_logdet(const SpdMatrix& k) {
  return k.eigenvalues().array().log().sum();
}

/// S K S for symmetric S, returned as SPD (valid whenever S is nonsingular).
inline SpdMatrix congruence(const SpdMatrix& s, const SpdMatrix& k) {
  require_same_dim(s.dim(), k.dim(), "congruence");
  return SpdMatrix(SymMatrix(s.matrix() * k.matrix() * s.matrix()));
}

/// (shift I + K0 K1)^{1/2} via K0^{1/2} (shift I + K0^{1/2} K1 K0^{1/2})^{1/2} K0^{-1/2}.
/// The result has real positive eigenvalues but is not symmetric in general.
inline Matrix shifted_product_sqrt(const SpdMatrix& k0, const SpdMatrix& k1,
                                   double shift) {
  require_same_dim(k0.dim(), k1.dim(), "shifted_product_sqrt");
  const SpdMatrix r0 = spd_sqrt(k0);
  const SpdMatrix r0_inv = spd_inv_sqrt(k0);
  const SpdMatrix inner = congruence(r0, k1);
  const Matrix root = inner.spectral([shift](double l) { return std::sqrt(shift + l); });
  return r0.matrix() * root * r0_inv.matrix();
}

/// (K0 K1)^{1/2}.
inline Matrix cross_sqrt(const SpdMatrix& k0, const SpdMatrix& k1) {
  return shifted_product_sqrt(k0, k1, 0.0);
}

/// Unique symmetric X with K X + X K = V.
inline SymMatrix solve_sylvester(const SpdMatrix& k, const SymMatrix& v) {
  require_same_dim(k.dim(), v.dim(), "solve_sylvester");
  const Matrix& q = k.eigenvectors();
  const Vector& l = k.eigenvalues();
  Matrix rotated = q.transpose() * v.matrix() * q;
  for (Index i = 0; i < rotated.rows(); ++i) {
    for (Index j = 0; j < rotated.cols(); ++j) {
      rotated(i, j) /= l(i) + l(j);
    }
  }
  return SymMatrix(q * rotated * q.transpose());
}

}  // namespace gauss_eot

#endif  // GAUSS_EOT_SPD_LINALG_HPP
