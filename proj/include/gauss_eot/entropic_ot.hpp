#ifndef GAUSS_EOT_ENTROPIC_OT_HPP
#define GAUSS_EOT_ENTROPIC_OT_HPP

// Closed-form entropy-regularized quadratic optimal transport between
// Gaussians: Schrodinger potentials, the optimal joint plan, the entropic
// cost, the entropic interpolant and the debiased Sinkhorn divergence.
//
// All quantities of the form (I + (16/eps^2) K_i K_j)^{1/2} are evaluated
// through the symmetric congruence K_i^{1/2} K_j K_i^{1/2}. Differences
// such as sqrt(1 + x) - 1 are evaluated as x / (1 + sqrt(1 + x)) so the
// large-epsilon regime keeps full relative precision.

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <utility>

#include "gauss_eot/gaussian.hpp"

namespace gauss_eot {

/// Strictly positive regularization strength.
class Epsilon {
 public:
  explicit Epsilon(double value) : value_(value) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      std::ostringstream os;
      os << "epsilon must be finite and > 0, got " << value;
      throw InvalidArgument(os.str());
    }
  }
  double value() const noexcept { return value_; }

 private:
  double value_;
};

inline constexpr double kSupportedEpsilonLo = 1e-3;
inline constexpr double kSupportedEpsilonHi = 1e6;
inline constexpr Index kSupportedDim = 100;

/// Non-empty when (eps, n) lies outside the range validated in double precision.
inline std::optional<std::string> conditioning_warning(const Epsilon& eps, Index n) {
  if (eps.value() < kSupportedEpsilonLo || eps.value() > kSupportedEpsilonHi ||
      n > kSupportedDim) {
    std::ostringstream os;
    os << "conditioning warning: epsilon = " << eps.value() << ", n = " << n
       << " outside the validated range [1e-3, 1e6], n <= 100";
    return os.str();
  }
  return std::nullopt;
}

/// Quadratic log-potentials of the optimal plan:
///   alpha(x) = exp(x^T source_quadratic x + a), beta(y) = exp(y^T target_quadratic y + b).
/// Only a + b is identifiable; the symmetric split a = b is used wherever a
/// single potential is evaluated. The plan and all costs are invariant under
/// a -> a + d, b -> b - d.
struct EntropicPotentials {
  SymMatrix source_quadratic;
  SymMatrix target_quadratic;
  double log_scale;  ///< a + b
  double epsilon;

  /// Kantorovich potential phi(x) = eps log alpha(x) in centered coordinates.
  double source_potential(const Vector& x) const {
    return epsilon * (x.dot(source_quadratic.matrix() * x) + 0.5 * log_scale);
  }
  double target_potential(const Vector& y) const {
    return epsilon * (y.dot(target_quadratic.matrix() * y) + 0.5 * log_scale);
  }
};

/// Optimal entropic plan with the potentials that generate it.
struct EntropicPlan {
  GaussianCoupling coupling;
  EntropicPotentials potentials;
  /// Relative Frobenius error of the assembled diagonal blocks against K0, K1
  /// before they were replaced by the exact marginals.
  double marginal_error;
};

namespace detail {

/// sqrt(1 + x) - 1 without cancellation.
inline double sqrt1pm1(double x) { return x / (1.0 + std::sqrt(1.0 + x)); }

/// Eigenvalues of K_a^{1/2} K_b K_a^{1/2} (shared with K_a K_b).
inline Vector pair_spectrum(const SpdMatrix& ka, const SpdMatrix& kb) {
  return congruence(spd_sqrt(ka), kb).eigenvalues();
}

/// Per-eigenvalue u = sqrt(1 + 16 lambda / eps^2) - 1, so M = I + N = (2 + u).
inline Vector root_excess(const Vector& lambda, double eps) {
  const double scale = 16.0 / (eps * eps);
  return lambda.unaryExpr([scale](double l) { return sqrt1pm1(scale * l); });
}

/// Tr M - log det M + n log 2 - 2n = sum(u - log1p(u / 2)).
inline double entropic_defect(const Vector& u) {
  double acc = 0.0;
  for (Index i = 0; i < u.size(); ++i) acc += u(i) - std::log1p(0.5 * u(i));
  return acc;
}

/// N_ij - I = (I + (16/eps^2) K_i^{1/2} K_j K_i^{1/2})^{1/2} - I, kept symmetric.
inline Matrix root_minus_identity(const SpdMatrix& ki, const SpdMatrix& kj, double eps) {
  const double scale = 16.0 / (eps * eps);
  return congruence(spd_sqrt(ki), kj).spectral(
      [scale](double l) { return sqrt1pm1(scale * l); });
}

inline void require_potentials_match(const Gaussian& g0, const Gaussian& g1,
                                     const EntropicPotentials& pot, const Epsilon& eps) {
  if (pot.source_quadratic.dim() != g0.dim() || pot.target_quadratic.dim() != g1.dim()) {
    throw PotentialMismatch("potentials dimension differs from the Gaussians");
  }
  if (pot.epsilon != eps.value()) {
    std::ostringstream os;
    os << "potentials solved for epsilon = " << pot.epsilon << ", evaluated at "
       << eps.value();
    throw PotentialMismatch(os.str());
  }
}

/// Precision matrix of alpha(x) beta(y) exp(-|x-y|^2/eps) mu0(x) mu1(y) for
/// centered marginals.
inline Matrix plan_precision(const SpdMatrix& k0, const SpdMatrix& k1, const Matrix& a,
                             const Matrix& b, double eps) {
  const Index n = k0.dim();
  const Matrix id = Matrix::Identity(n, n);
  Matrix p(2 * n, 2 * n);
  p << spd_inverse(k0).matrix() + (2.0 / eps) * id - 2.0 * a, -(2.0 / eps) * id,
      -(2.0 / eps) * id, spd_inverse(k1).matrix() + (2.0 / eps) * id - 2.0 * b;
  return symmetrized(p);
}

}  // namespace detail

/// Closed-form Schrodinger potentials:
///   A = 1/4 K0^{-1/2} (I + (4/eps) K0 - N01) K0^{-1/2}, B symmetric counterpart,
///   exp(a + b) = sqrt(det(M) / 2^n).
inline EntropicPotentials solve_potentials(const Gaussian& g0, const Gaussian& g1,
                                           const Epsilon& eps) {
  require_same_dim(g0, g1, "solve_potentials");
  const double e = eps.value();
  const Index n = g0.dim();
  const Matrix id = Matrix::Identity(n, n);
  const auto quadratic = [&](const SpdMatrix& ki, const SpdMatrix& kj) {
    const Matrix r = spd_inv_sqrt(ki).matrix();
    // 1/4 K^{-1/2}((4/eps) K - (N - I)) K^{-1/2} = (1/eps) I - 1/4 K^{-1/2}(N - I)K^{-1/2}
    return SymMatrix(id / e - 0.25 * r * detail::root_minus_identity(ki, kj, e) * r);
  };
  const Vector u = detail::root_excess(detail::pair_spectrum(g0.cov(), g1.cov()), e);
  double log_scale = 0.0;
  for (Index i = 0; i < u.size(); ++i) log_scale += 0.5 * std::log1p(0.5 * u(i));
  return EntropicPotentials{quadratic(g0.cov(), g1.cov()), quadratic(g1.cov(), g0.cov()),
                            log_scale, e};
}

/// Residuals of the Schrodinger fixed-point system
///   A = (1/eps) I + (1/eps^2) (B - (1/eps) I - 1/2 K1^{-1})^{-1}
///   B = (1/eps) I + (1/eps^2) (A - (1/eps) I - 1/2 K0^{-1})^{-1}
///   exp(a + b) = sqrt(det(2 K1) det((1/eps) I + 1/2 K1^{-1} - B))  (and the K0 twin),
/// returned as the largest relative mismatch.
inline double potential_system_residual(const Gaussian& g0, const Gaussian& g1,
                                        const EntropicPotentials& pot) {
  require_same_dim(g0, g1, "potential_system_residual");
  const double e = pot.epsilon;
  const Index n = g0.dim();
  const Matrix id = Matrix::Identity(n, n);
  const Matrix& a = pot.source_quadratic.matrix();
  const Matrix& b = pot.target_quadratic.matrix();
  const Matrix k0_inv = spd_inverse(g0.cov()).matrix();
  const Matrix k1_inv = spd_inverse(g1.cov()).matrix();
  const Matrix a_rhs = id / e + (b - id / e - 0.5 * k1_inv).inverse() / (e * e);
  const Matrix b_rhs = id / e + (a - id / e - 0.5 * k0_inv).inverse() / (e * e);
  const double r_a = rel_frobenius(a_rhs, a);
  const double r_b = rel_frobenius(b_rhs, b);
  const auto log_scale_from = [&](const SpdMatrix& k, const Matrix& kinv, const Matrix& q) {
    const SpdMatrix inner(SymMatrix(id / e + 0.5 * kinv - q));
    return 0.5 * (static_cast<double>(n) * std::log(2.0) + spd_logdet(k) + spd_logdet(inner));
  };
  const double s1 = log_scale_from(g1.cov(), k1_inv, b);
  const double s0 = log_scale_from(g0.cov(), k0_inv, a);
  const double denom = std::max(1.0, std::abs(pot.log_scale));
  const double r_s = std::max(std::abs(s1 - pot.log_scale), std::abs(s0 - pot.log_scale)) / denom;
  return std::max({r_a, r_b, r_s});
}

/// Optimal entropic plan assembled from the precision matrix of its density.
/// The returned coupling carries the exact marginals; the assembled blocks'
/// deviation from them is reported in marginal_error.
inline EntropicPlan entropic_plan(const Gaussian& g0, const Gaussian& g1, const Epsilon& eps) {
  EntropicPotentials pot = solve_potentials(g0, g1, eps);
  const Index n = g0.dim();
  const SpdMatrix precision(SymMatrix(detail::plan_precision(
      g0.cov(), g1.cov(), pot.source_quadratic.matrix(), pot.target_quadratic.matrix(),
      eps.value())));
  const Matrix joint = spd_inverse(precision).matrix();
  const double err = std::max(rel_frobenius(joint.topLeftCorner(n, n), g0.cov().matrix()),
                              rel_frobenius(joint.bottomRightCorner(n, n), g1.cov().matrix()));
  Matrix cross = joint.bottomLeftCorner(n, n);
  return EntropicPlan{GaussianCoupling(g0, g1, std::move(cross)), std::move(pot), err};
}

/// OT^eps(g0, g1) = |m0 - m1|^2 + Tr K0 + Tr K1
///                  - (eps/2)(Tr M - log det M + n log 2 - 2n).
inline double ot_eps(const Gaussian& g0, const Gaussian& g1, const Epsilon& eps) {
  require_same_dim(g0, g1, "ot_eps");
  const double e = eps.value();
  const Vector u = detail::root_excess(detail::pair_spectrum(g0.cov(), g1.cov()), e);
  return (g0.mean() - g1.mean()).squaredNorm() + g0.cov().trace() + g1.cov().trace() -
         0.5 * e * detail::entropic_defect(u);
}

/// Entropic Kantorovich dual at phi = eps log alpha, psi = eps log beta:
///   E_mu0[phi] + E_mu1[psi] - eps (E_{mu0 x mu1}[exp((phi + psi - d^2)/eps)] - 1).
/// The potentials act on centered coordinates; |m0 - m1|^2 is added on top.
/// Returns -inf when the exponential moment diverges.
inline double dual_objective(const Gaussian& g0, const Gaussian& g1,
                             const EntropicPotentials& pot, const Epsilon& eps) {
  require_same_dim(g0, g1, "dual_objective");
  detail::require_potentials_match(g0, g1, pot, eps);
  const double e = eps.value();
  const Matrix& a = pot.source_quadratic.matrix();
  const Matrix& b = pot.target_quadratic.matrix();
  const double linear = e * ((g0.cov().matrix() * a).trace() + (g1.cov().matrix() * b).trace() +
                             pot.log_scale);
  const Matrix p = detail::plan_precision(g0.cov(), g1.cov(), a, b, e);
  Eigen::SelfAdjointEigenSolver<Matrix> es(p, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success || !(es.eigenvalues().minCoeff() > 0.0)) {
    return -std::numeric_limits<double>::infinity();
  }
  const double logdet_p = es.eigenvalues().array().log().sum();
  const double log_moment =
      pot.log_scale - 0.5 * (spd_logdet(g0.cov()) + spd_logdet(g1.cov()) + logdet_p);
  return (g0.mean() - g1.mean()).squaredNorm() + linear - e * std::expm1(log_moment);
}

/// Primal entropic objective of an arbitrary Gaussian coupling:
///   E_gamma|x - y|^2 + eps KL(gamma || mu0 (x) mu1)
/// = |m0 - m1|^2 + Tr K0 + Tr K1 - 2 Tr C + (eps/2) log(det K0 det K1 / det Gamma).
inline double plan_objective(const GaussianCoupling& plan, const Epsilon& eps) {
  const Gaussian& g0 = plan.source();
  const Gaussian& g1 = plan.target();
  return (g0.mean() - g1.mean()).squaredNorm() + g0.cov().trace() + g1.cov().trace() -
         2.0 * plan.cross().trace() +
         0.5 * eps.value() *
             (spd_logdet(g0.cov()) + spd_logdet(g1.cov()) - spd_logdet(plan.joint_cov()));
}

/// Closed-form solution of eps^2 K0 - eps^2 S - 4 S K1 S = 0:
///   S = (eps/8) K1^{-1/2} (-eps I + (eps^2 I + 16 K1^{1/2} K0 K1^{1/2})^{1/2}) K1^{-1/2}.
inline SpdMatrix riccati_schur(const Gaussian& g0, const Gaussian& g1, const Epsilon& eps) {
  require_same_dim(g0, g1, "riccati_schur");
  const double e = eps.value();
  const SpdMatrix r1 = spd_sqrt(g1.cov());
  const SpdMatrix r1_inv = spd_inv_sqrt(g1.cov());
  // -eps + sqrt(eps^2 + 16 l) = 16 l / (eps + sqrt(eps^2 + 16 l))
  const Matrix middle = congruence(r1, g0.cov()).spectral(
      [e](double l) { return 16.0 * l / (e + std::sqrt(e * e + 16.0 * l)); });
  return SpdMatrix(SymMatrix((e / 8.0) * r1_inv.matrix() * middle * r1_inv.matrix()));
}

/// ||eps^2 K0 - eps^2 S - 4 S K1 S||_F / ||eps^2 K0||_F.
inline double riccati_residual(const Gaussian& g0, const Gaussian& g1, const SpdMatrix& s,
                               const Epsilon& eps) {
  require_same_dim(g0, g1, "riccati_residual");
  require_same_dim(g0.dim(), s.dim(), "riccati_residual");
  const double e2 = eps.value() * eps.value();
  const Matrix& k0 = g0.cov().matrix();
  const Matrix res = e2 * k0 - e2 * s.matrix() - 4.0 * s.matrix() * g1.cov().matrix() * s.matrix();
  return res.norm() / (e2 * k0.norm());
}

/// Cross-covariance maximizing Tr C on the fiber {C : K0 - C^T K1^{-1} C = S}
/// at the Riccati solution: C = K1^{1/2} (K1^{1/2} (K0 - S) K1^{1/2})^{1/2} K1^{-1/2}.
inline Matrix riccati_cross(const Gaussian& g0, const Gaussian& g1, const Epsilon& eps) {
  const SpdMatrix s = riccati_schur(g0, g1, eps);
  const SpdMatrix r1 = spd_sqrt(g1.cov());
  const SpdMatrix r1_inv = spd_inv_sqrt(g1.cov());
  const SpdMatrix gap(SymMatrix(g0.cov().matrix() - s.matrix()));
  const SpdMatrix root = spd_sqrt(congruence(r1, gap));
  return r1.matrix() * root.matrix() * r1_inv.matrix();
}

/// Entropic displacement interpolant N(m_t, K_t) with
///   K_t = (1-t)^2 K0 + t^2 K1 + t(1-t)[(eps^2/16 I + K0 K1)^{1/2} + (eps^2/16 I + K1 K0)^{1/2}],
///   m_t = (1-t) m0 + t m1.
inline Gaussian entropic_interpolate(const Gaussian& g0, const Gaussian& g1, const Epsilon& eps,
                                     double t) {
  require_same_dim(g0, g1, "entropic_interpolate");
  require_unit_interval(t, "entropic_interpolate");
  const double e = eps.value();
  const double s = 1.0 - t;
  const Matrix x = shifted_product_sqrt(g0.cov(), g1.cov(), e * e / 16.0);
  const Matrix cov = s * s * g0.cov().matrix() + t * t * g1.cov().matrix() +
                     t * s * (x + x.transpose());
  return Gaussian(s * g0.mean() + t * g1.mean(), SpdMatrix(SymMatrix(cov)));
}

/// The three algebraically equivalent covariance expressions of the
/// interpolant; the first two are singular at t in {0, 1}.
struct InterpolantForms {
  Matrix from_target;  ///< built around K1^{-1/2} and N10
  Matrix from_source;  ///< built around K0^{-1/2} and N01
  Matrix symmetric;    ///< production expression
};

inline InterpolantForms interpolant_forms(const Gaussian& g0, const Gaussian& g1,
                                          const Epsilon& eps, double t) {
  require_same_dim(g0, g1, "interpolant_forms");
  if (!(t > 0.0 && t < 1.0)) {
    std::ostringstream os;
    os << "interpolant_forms: t = " << t << " must lie strictly inside (0, 1)";
    throw TOutOfRange(os.str());
  }
  const double e = eps.value();
  const Index n = g0.dim();
  const Matrix id = Matrix::Identity(n, n);
  const auto form = [&](const SpdMatrix& kj, const SpdMatrix& ki, double w) {
    // (w^2 eps^2/16) Kj^{-1/2} (-I + ((4(1-w)/(w eps)) Kj + Nji)^2) Kj^{-1/2}
    const Matrix r = spd_inv_sqrt(kj).matrix();
    const Matrix nji = id + detail::root_minus_identity(kj, ki, e);
    const Matrix inner = (4.0 * (1.0 - w) / (w * e)) * kj.matrix() + nji;
    return Matrix(detail::symmetrized((w * w * e * e / 16.0) * r * (inner * inner - id) * r));
  };
  return InterpolantForms{form(g1.cov(), g0.cov(), 1.0 - t), form(g0.cov(), g1.cov(), t),
                          entropic_interpolate(g0, g1, eps, t).cov().matrix()};
}

/// Largest relative Frobenius discrepancy between the three interpolant forms.
inline double interpolant_forms_agree(const Gaussian& g0, const Gaussian& g1, const Epsilon& eps,
                                      double t) {
  const InterpolantForms f = interpolant_forms(g0, g1, eps, t);
  return std::max({rel_frobenius(f.from_target, f.symmetric),
                   rel_frobenius(f.from_source, f.symmetric),
                   rel_frobenius(f.from_target, f.from_source)});
}

/// Debiased Sinkhorn divergence
///   S = |m0 - m1|^2 + (eps/4)(Tr(M00 - 2 M01 + M11) + log(det^2 M01 / (det M00 det M11))).
inline double sinkhorn_div(const Gaussian& g0, const Gaussian& g1, const Epsilon& eps) {
  require_same_dim(g0, g1, "sinkhorn_div");
  const double e = eps.value();
  const auto parts = [e](const SpdMatrix& a, const SpdMatrix& b) {
    const Vector u = detail::root_excess(detail::pair_spectrum(a, b), e);
    double trace_part = 0.0;
    double log_part = 0.0;
    for (Index i = 0; i < u.size(); ++i) {
      trace_part += u(i);
      log_part += std::log1p(0.5 * u(i));
    }
    return std::pair{trace_part, log_part};
  };
  const auto [t00, l00] = parts(g0.cov(), g0.cov());
  const auto [t01, l01] = parts(g0.cov(), g1.cov());
  const auto [t11, l11] = parts(g1.cov(), g1.cov());
  // The constant 2 + log 2 per eigenvalue cancels between the three terms.
  const double bracket = (t00 - 2.0 * t01 + t11) + (2.0 * l01 - l00 - l11);
  return (g0.mean() - g1.mean()).squaredNorm() + 0.25 * e * bracket;
}

/// |OT^eps - W2^2|.
inline double limit_w2_gap(const Gaussian& g0, const Gaussian& g1, const Epsilon& eps) {
  return std::abs(ot_eps(g0, g1, eps) - w2_distance_sq(g0, g1));
}

struct MmdGaps {
  double ot_gap;        ///< |OT^eps - (|dm|^2 + Tr K0 + Tr K1)|
  double sinkhorn_gap;  ///< |S^eps - |dm|^2|
};

inline MmdGaps limit_mmd_gap(const Gaussian& g0, const Gaussian& g1, const Epsilon& eps) {
  const double dm2 = (g0.mean() - g1.mean()).squaredNorm();
  return MmdGaps{std::abs(ot_eps(g0, g1, eps) - (dm2 + g0.cov().trace() + g1.cov().trace())),
                 std::abs(sinkhorn_div(g0, g1, eps) - dm2)};
}

/// ||LHS - RHS||_F / ||LHS||_F for the SPD identity
///   (4/eps) D^{1/2} (I + (I + (16/eps^2) D^{1/2} C D^{1/2})^{1/2})^{-1} D^{1/2}
///   = I - (eps/4) C^{-1/2} (I + (4/eps) C - (I + (16/eps^2) C^{1/2} D C^{1/2})^{1/2}) C^{-1/2}.
/// Both sides are evaluated exactly as written.
inline double lemma_identity_residual(const SpdMatrix& c, const SpdMatrix& d, const Epsilon& eps) {
  require_same_dim(c.dim(), d.dim(), "lemma_identity_residual");
  const double e = eps.value();
  const double scale = 16.0 / (e * e);
  const Index n = c.dim();
  const Matrix id = Matrix::Identity(n, n);
  const auto root = [scale](const SpdMatrix& x, const SpdMatrix& y) {
    return congruence(spd_sqrt(x), y).spectral(
        [scale](double l) { return std::sqrt(1.0 + scale * l); });
  };
  const Matrix rd = spd_sqrt(d).matrix();
  const Matrix lhs = (4.0 / e) * rd * (id + root(d, c)).inverse() * rd;
  const Matrix rc_inv = spd_inv_sqrt(c).matrix();
  const Matrix rhs = id - (e / 4.0) * rc_inv * (id + (4.0 / e) * c.matrix() - root(c, d)) * rc_inv;
  return rel_frobenius(rhs, lhs);
}

}  // namespace gauss_eot

#endif  // GAUSS_EOT_ENTROPIC_OT_HPP
