#ifndef GAUSS_EOT_GAUSSIAN_HPP
#define GAUSS_EOT_GAUSSIAN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>

#include "gauss_eot/spd_linalg.hpp"

namespace gauss_eot {

/// Non-degenerate multivariate normal N(mean, cov).
class Gaussian {
 public:
  Gaussian(Vector mean, SpdMatrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
    require_same_dim(mean_.size(), cov_.dim(), "Gaussian mean/cov");
    if (!mean_.allFinite()) throw InvalidArgument("Gaussian: non-finite mean");
  }

  Gaussian(const Vector& mean, const Matrix& cov) : Gaussian(mean, SpdMatrix(cov)) {}

  /// Scalar N(mean, variance).
  static Gaussian scalar(double mean, double variance) {
    return Gaussian(Vector::Constant(1, mean), Matrix::Constant(1, 1, variance));
  }

  static Gaussian standard(Index n) {
    return Gaussian(Vector::Zero(n), SpdMatrix::identity(n));
  }

  Index dim() const noexcept { return mean_.size(); }
  const Vector& mean() const noexcept { return mean_; }
  const SpdMatrix& cov() const noexcept { return cov_; }

 private:
  Vector mean_;
  SpdMatrix cov_;
};

inline void require_same_dim(const Gaussian& a, const Gaussian& b, const char* what) {
  require_same_dim(a.dim(), b.dim(), what);
}

inline Gaussian centered(const Gaussian& g) { return Gaussian(Vector::Zero(g.dim()), g.cov()); }

inline Gaussian shifted(const Gaussian& g, const Vector& by) {
  require_same_dim(g.dim(), by.size(), "shifted");
  return Gaussian(g.mean() + by, g.cov());
}

inline double log_density(const Gaussian& g, const Vector& x) {
  require_same_dim(g.dim(), x.size(), "log_density");
  const Vector d = g.cov().eigenvectors().transpose() * (x - g.mean());
  const double quad = (d.array().square() / g.cov().eigenvalues().array()).sum();
  const double n = static_cast<double>(g.dim());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + spd_logdet(g.cov()) + quad);
}

/// Differential entropy 1/2 log det(2 pi e K); independent of the mean.
inline double entropy(const Gaussian& g) {
  const double n = static_cast<double>(g.dim());
  return 0.5 * (n * std::log(2.0 * std::numbers::pi * std::numbers::e) + spd_logdet(g.cov()));
}

/// KL(g0 || g1) = 1/2 (Tr(K1^-1 K0) + dm^T K1^-1 dm - n + log(det K1 / det K0)).
inline double kl_divergence(const Gaussian& g0, const Gaussian& g1) {
  require_same_dim(g0, g1, "kl_divergence");
  if (g0.mean() == g1.mean() && g0.cov().matrix() == g1.cov().matrix()) return 0.0;
  const SpdMatrix k1_inv = spd_inverse(g1.cov());
  const Vector dm = g1.mean() - g0.mean();
  const double n = static_cast<double>(g0.dim());
  const double value = 0.5 * ((k1_inv.matrix() * g0.cov().matrix()).trace() +
                              dm.dot(k1_inv.matrix() * dm) - n +
                              spd_logdet(g1.cov()) - spd_logdet(g0.cov()));
  return std::max(0.0, value);
}

/// count x n matrix of draws, one per row; x = m + V diag(sqrt(lambda)) z.
inline Matrix sample(const Gaussian& g, Index count, std::mt19937_64& rng) {
  if (count < 1) throw InvalidArgument("sample: count must be >= 1");
  const Matrix factor = g.cov().eigenvectors() *
                        g.cov().eigenvalues().array().sqrt().matrix().asDiagonal();
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(count, g.dim());
  Vector z(g.dim());
  for (Index i = 0; i < count; ++i) {
    for (Index k = 0; k < g.dim(); ++k) z(k) = normal(rng);
    out.row(i) = (g.mean() + factor * z).transpose();
  }
  return out;
}

inline Matrix sample(const Gaussian& g, Index count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample(g, count, rng);
}

/// Squared 2-Wasserstein distance (Bures-Wasserstein closed form).
inline double w2_distance_sq(const Gaussian& g0, const Gaussian& g1) {
  require_same_dim(g0, g1, "w2_distance_sq");
  const SpdMatrix r1 = spd_sqrt(g1.cov());
  const SpdMatrix inner = congruence(r1, g0.cov());
  const double cross = inner.eigenvalues().array().sqrt().sum();
  const double value = (g0.mean() - g1.mean()).squaredNorm() + g0.cov().trace() +
                       g1.cov().trace() - 2.0 * cross;
  return std::max(0.0, value);
}

inline void require_unit_interval(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0)) {
    std::ostringstream os;
    os << what << ": t = " << t << " outside [0, 1]";
    throw TOutOfRange(os.str());
  }
}

/// McCann interpolant along the W2 geodesic.
inline Gaussian w2_geodesic(const Gaussian& g0, const Gaussian& g1, double t) {
  require_same_dim(g0, g1, "w2_geodesic");
  require_unit_interval(t, "w2_geodesic");
  const double s = 1.0 - t;
  const Matrix x = cross_sqrt(g0.cov(), g1.cov());
  const Matrix cov = s * s * g0.cov().matrix() + t * t * g1.cov().matrix() +
                     t * s * (x + x.transpose());
  return Gaussian(s * g0.mean() + t * g1.mean(), SpdMatrix(SymMatrix(cov)));
}

/// Joint Gaussian on (x, y) with marginals g0, g1 and cross-covariance
/// `cross` = Cov(y, x). Joint covariance [[K0, C^T], [C, K1]] must be SPD.
class GaussianCoupling {
 public:
  GaussianCoupling(Gaussian g0, Gaussian g1, Matrix cross)
      : g0_(std::move(g0)), g1_(std::move(g1)), cross_(std::move(cross)),
        joint_cov_(assemble(g0_, g1_, cross_)) {}

  const Gaussian& source() const noexcept { return g0_; }
  const Gaussian& target() const noexcept { return g1_; }
  const Matrix& cross() const noexcept { return cross_; }
  const SpdMatrix& joint_cov() const noexcept { return joint_cov_; }

  Gaussian joint() const {
    Vector m(2 * g0_.dim());
    m << g0_.mean(), g1_.mean();
    return Gaussian(m, joint_cov_);
  }

  /// K0 - C^T K1^{-1} C, the conditional covariance of x given y.
  SpdMatrix schur_complement() const {
    const SpdMatrix k1_inv = spd_inverse(g1_.cov());
    return SpdMatrix(SymMatrix(g0_.cov().matrix() -
                               cross_.transpose() * k1_inv.matrix() * cross_));
  }

  static GaussianCoupling independent(const Gaussian& g0, const Gaussian& g1) {
    return GaussianCoupling(g0, g1, Matrix::Zero(g1.dim(), g0.dim()));
  }

 private:
  static SpdMatrix assemble(const Gaussian& g0, const Gaussian& g1, const Matrix& c) {
    require_same_dim(g0, g1, "GaussianCoupling");
    const Index n = g0.dim();
    if (c.rows() != n || c.cols() != n) {
      throw DimensionMismatch("GaussianCoupling: cross block must be n x n");
    }
    Matrix joint(2 * n, 2 * n);
    joint << g0.cov().matrix(), c.transpose(), c, g1.cov().matrix();
    return SpdMatrix(SymMatrix(joint));
  }

  Gaussian g0_;
  Gaussian g1_;
  Matrix cross_;
  SpdMatrix joint_cov_;
};

struct KlIdentity {
  double kl_to_product;   ///< KL(gamma || mu0 (x) mu1)
  double entropy_gap;     ///< H(mu0) + H(mu1) - H(gamma)
  double difference;      ///< |kl_to_product - entropy_gap|
};

namespace detail {

inline bool same_gaussian(const Gaussian& a, const Gaussian& b, double tol) {
  if (a.dim() != b.dim()) return false;
  const double scale = 1.0 + b.cov().matrix().norm() + b.mean().norm();
  return (a.mean() - b.mean()).norm() <= tol * scale &&
         (a.cov().matrix() - b.cov().matrix()).norm() <= tol * scale;
}

}  // namespace detail

/// Evaluates both sides of KL(gamma || mu0 (x) mu1) = H(mu0) + H(mu1) - H(gamma).
inline KlIdentity kl_identity_check(const Gaussian& g0, const Gaussian& g1,
                                    const GaussianCoupling& plan) {
  if (!detail::same_gaussian(plan.source(), g0, 1e-12) ||
      !detail::same_gaussian(plan.target(), g1, 1e-12)) {
    throw MarginalMismatch("kl_identity_check: coupling marginals differ from inputs");
  }
  const Gaussian joint = plan.joint();
  const Gaussian product = GaussianCoupling::independent(g0, g1).joint();
  const double kl = kl_divergence(joint, product);
  const double gap = entropy(g0) + entropy(g1) - entropy(joint);
  return {kl, gap, std::abs(kl - gap)};
}

}  // namespace gauss_eot

#endif  // GAUSS_EOT_GAUSSIAN_HPP
