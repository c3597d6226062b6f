#ifndef GAUSS_EOT_ORACLE_HPP
#define GAUSS_EOT_ORACLE_HPP

// Reference machinery that does not use any of the closed forms: grid
// discretization of Gaussians, a log-domain Sinkhorn-Knopp solver for the
// entropic problem between discrete measures, and Monte-Carlo estimators.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "gauss_eot/entropic_ot.hpp"

namespace gauss_eot {

/// Weighted point cloud; support is m x n with one point per row.
class DiscreteMeasure {
 public:
  DiscreteMeasure(Matrix support, Vector weights)
      : support_(std::move(support)), weights_(std::move(weights)) {
    if (support_.rows() < 1 || support_.cols() < 1) {
      throw DimensionMismatch("DiscreteMeasure: empty support");
    }
    require_same_dim(support_.rows(), weights_.size(), "DiscreteMeasure weights");
    if (!support_.allFinite()) throw InvalidArgument("DiscreteMeasure: non-finite support");
    if (!(weights_.array() > 0.0).all() || !weights_.allFinite()) {
      throw InvalidArgument("DiscreteMeasure: weights must be finite and > 0");
    }
    weights_ /= weights_.sum();
    require_distinct();
  }

  Index size() const noexcept { return support_.rows(); }
  Index dim() const noexcept { return support_.cols(); }
  const Matrix& support() const noexcept { return support_; }
  const Vector& weights() const noexcept { return weights_; }

  Vector mean() const { return support_.transpose() * weights_; }
  Matrix covariance() const {
    const Matrix centered = support_.rowwise() - mean().transpose();
    return centered.transpose() * weights_.asDiagonal() * centered;
  }

 private:
  void require_distinct() const {
    std::vector<Index> order(static_cast<std::size_t>(size()));
    std::iota(order.begin(), order.end(), Index{0});
    const auto less = [&](Index a, Index b) {
      for (Index k = 0; k < dim(); ++k) {
        if (support_(a, k) != support_(b, k)) return support_(a, k) < support_(b, k);
      }
      return false;
    };
    std::sort(order.begin(), order.end(), less);
    for (std::size_t i = 1; i < order.size(); ++i) {
      if (!less(order[i - 1], order[i])) {
        throw InvalidArgument("DiscreteMeasure: repeated support point");
      }
    }
  }

  Matrix support_;
  Vector weights_;
};

struct GridAxis {
  double lo;
  double hi;
  Index count;
};

/// Axis-aligned tensor grid.
struct GridSpec {
  std::vector<GridAxis> axes;

  static constexpr Index kMinNodesPerAxis = 16;

  void validate() const {
    if (axes.empty()) throw InvalidArgument("GridSpec: no axes");
    for (const GridAxis& a : axes) {
      if (a.count < kMinNodesPerAxis) {
        throw InvalidArgument("GridSpec: at least 16 nodes per axis");
      }
      if (!(a.hi > a.lo)) throw InvalidArgument("GridSpec: hi must exceed lo");
    }
  }

  Index node_count() const {
    Index total = 1;
    for (const GridAxis& a : axes) total *= a.count;
    return total;
  }

  /// Symmetric box of +/- k_sigma marginal standard deviations around the mean.
  static GridSpec covering(const Gaussian& g, Index count, double k_sigma) {
    GridSpec spec;
    for (Index i = 0; i < g.dim(); ++i) {
      const double half = k_sigma * std::sqrt(g.cov().matrix()(i, i));
      spec.axes.push_back({g.mean()(i) - half, g.mean()(i) + half, count});
    }
    return spec;
  }
};

/// Node count and coverage used when an oracle builds per-measure grids.
struct GridResolution {
  Index count = 512;
  double sigma_cover = 8.0;
};

inline constexpr double kDefaultRequiredCoverage = 6.0;

namespace detail {

inline Matrix grid_nodes(const GridSpec& spec) {
  const Index n = static_cast<Index>(spec.axes.size());
  Matrix nodes(spec.node_count(), n);
  std::vector<Index> idx(static_cast<std::size_t>(n), 0);
  for (Index row = 0; row < nodes.rows(); ++row) {
    for (Index k = 0; k < n; ++k) {
      const GridAxis& a = spec.axes[static_cast<std::size_t>(k)];
      const Index i = idx[static_cast<std::size_t>(k)];
      const double h = (a.hi - a.lo) / static_cast<double>(a.count - 1);
      nodes(row, k) = i == a.count - 1 ? a.hi : a.lo + static_cast<double>(i) * h;
    }
    // Last axis varies fastest.
    for (Index k = n - 1; k >= 0; --k) {
      auto& i = idx[static_cast<std::size_t>(k)];
      if (++i < spec.axes[static_cast<std::size_t>(k)].count) break;
      i = 0;
    }
  }
  return nodes;
}

inline void require_coverage(const Gaussian& g, const GridSpec& spec, double k_sigma) {
  require_same_dim(g.dim(), static_cast<Index>(spec.axes.size()), "discretize");
  for (Index i = 0; i < g.dim(); ++i) {
    const GridAxis& a = spec.axes[static_cast<std::size_t>(i)];
    // Support function of the k-sigma ellipsoid along axis i.
    const double reach = k_sigma * std::sqrt(g.cov().matrix()(i, i));
    const double slack = 1e-12 * (std::abs(a.lo) + std::abs(a.hi) + reach);
    if (a.lo > g.mean()(i) - reach + slack || a.hi < g.mean()(i) + reach - slack) {
      std::ostringstream os;
      os << "discretize: axis " << i << " [" << a.lo << ", " << a.hi << "] covers fewer than "
         << k_sigma << " standard deviations";
      throw CoverageError(os.str());
    }
  }
}

inline DiscreteMeasure discretize_on(const Gaussian& g, const Matrix& nodes) {
  Vector logw(nodes.rows());
  for (Index i = 0; i < nodes.rows(); ++i) logw(i) = log_density(g, nodes.row(i).transpose());
  const double top = logw.maxCoeff();
  return DiscreteMeasure(nodes, (logw.array() - top).exp().matrix());
}

inline double log_sum_exp(const double* values, Index count, const double* shift) {
  double top = -std::numeric_limits<double>::infinity();
  for (Index k = 0; k < count; ++k) top = std::max(top, values[k] + shift[k]);
  if (!std::isfinite(top)) return top;
  double acc = 0.0;
  for (Index k = 0; k < count; ++k) acc += std::exp(values[k] + shift[k] - top);
  return top + std::log(acc);
}

}  // namespace detail

/// Weights proportional to the density at the grid nodes, renormalized.
inline DiscreteMeasure discretize(const Gaussian& g, const GridSpec& spec,
                                  double k_sigma = kDefaultRequiredCoverage) {
  spec.validate();
  detail::require_coverage(g, spec, k_sigma);
  return detail::discretize_on(g, detail::grid_nodes(spec));
}

struct SinkhornOptions {
  double tol = 1e-9;  ///< on max(L1 row error, L1 column error)
  int max_iters = 100000;
  bool log_domain = true;
};

/// Scalings of gamma_ij = u_i k_ij v_j mu_i nu_j, stored as logarithms.
struct SinkhornState {
  Vector log_u;
  Vector log_v;
  double epsilon = 0.0;
  double marginal_err = 0.0;
  int iterations = 0;

  Vector scaling_u() const { return log_u.array().exp(); }
  Vector scaling_v() const { return log_v.array().exp(); }
};

struct SinkhornResult {
  SinkhornState state;
  Matrix plan;
  double cost = 0.0;       ///< transport + eps * kl
  double transport = 0.0;  ///< sum gamma_ij |x_i - y_j|^2
  double kl = 0.0;         ///< KL(gamma || mu (x) nu)
};

inline Matrix squared_distances(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
  require_same_dim(mu.dim(), nu.dim(), "squared_distances");
  const Vector x2 = mu.support().rowwise().squaredNorm();
  const Vector y2 = nu.support().rowwise().squaredNorm();
  Matrix c = -2.0 * mu.support() * nu.support().transpose();
  c.colwise() += x2;
  c.rowwise() += y2.transpose();
  return c.cwiseMax(0.0);
}

/// Plan, marginal error and primal value of the scalings (log_u, log_v).
inline SinkhornResult sinkhorn_evaluate(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                        double eps, SinkhornState state) {
  const Matrix cost = squared_distances(mu, nu);
  SinkhornResult out;
  out.plan.resize(mu.size(), nu.size());
  for (Index j = 0; j < nu.size(); ++j) {
    for (Index i = 0; i < mu.size(); ++i) {
      const double log_ratio = state.log_u(i) + state.log_v(j) - cost(i, j) / eps;
      const double g = std::exp(log_ratio) * mu.weights()(i) * nu.weights()(j);
      out.plan(i, j) = g;
      out.transport += g * cost(i, j);
      out.kl += g * log_ratio;
    }
  }
  const double row_err = (out.plan.rowwise().sum() - mu.weights()).lpNorm<1>();
  const double col_err = (out.plan.colwise().sum().transpose() - nu.weights()).lpNorm<1>();
  state.marginal_err = std::max(row_err, col_err);
  out.cost = out.transport + eps * out.kl;
  out.state = std::move(state);
  return out;
}

/// Alternating scaling u <- 1/(K (v nu)), v <- 1/(K^T (u mu)) with Gibbs kernel
/// exp(-|x - y|^2 / eps). Returns the primal value E_gamma[d^2] + eps KL(gamma || mu (x) nu).
inline SinkhornResult sinkhorn_knopp(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                     double eps, const SinkhornOptions& opts = {}) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidArgument("sinkhorn_knopp: eps must be > 0");
  require_same_dim(mu.dim(), nu.dim(), "sinkhorn_knopp");
  const Index m0 = mu.size();
  const Index m1 = nu.size();
  const Matrix log_k = -squared_distances(mu, nu) / eps;  // m0 x m1, column j contiguous
  const Matrix log_k_t = log_k.transpose();                // m1 x m0, column i contiguous
  const Vector log_mu = mu.weights().array().log();
  const Vector log_nu = nu.weights().array().log();

  SinkhornState state;
  state.epsilon = eps;
  state.log_u = Vector::Zero(m0);
  state.log_v = Vector::Zero(m1);

  Vector shift_v(m1);
  Vector shift_u(m0);
  Vector next_u(m0);
  Matrix kernel;
  // std::exp, not the vectorized Eigen exp, which clamps instead of reaching zero.
  if (!opts.log_domain) kernel = log_k.unaryExpr([](double x) { return std::exp(x); });
  const auto vanished = [](const Vector& s) {
    return !s.allFinite() || !(s.array() >= std::numeric_limits<double>::min()).all();
  };

  const auto update_u = [&]() {
    if (opts.log_domain) {
      shift_v = state.log_v + log_nu;
      for (Index i = 0; i < m0; ++i) {
        next_u(i) = -detail::log_sum_exp(log_k_t.col(i).data(), m1, shift_v.data());
      }
    } else {
      const Vector s = kernel * (state.log_v + log_nu).array().exp().matrix();
      if (vanished(s)) {
        throw NumericalUnderflow("sinkhorn_knopp: kernel row sums vanished; use log domain");
      }
      next_u = -s.array().log();
    }
  };
  const auto update_v = [&]() {
    if (opts.log_domain) {
      shift_u = state.log_u + log_mu;
      for (Index j = 0; j < m1; ++j) {
        state.log_v(j) = -detail::log_sum_exp(log_k.col(j).data(), m0, shift_u.data());
      }
    } else {
      const Vector s = kernel.transpose() * (state.log_u + log_mu).array().exp().matrix();
      if (vanished(s)) {
        throw NumericalUnderflow("sinkhorn_knopp: kernel column sums vanished; use log domain");
      }
      state.log_v = -s.array().log();
    }
  };

  update_v();
  double err = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= opts.max_iters; ++it) {
    update_u();
    // Columns are exact after update_v; row sums are mu_i exp(log_u_i - next_u_i).
    err = 0.0;
    for (Index i = 0; i < m0; ++i) {
      err += std::abs(mu.weights()(i) * std::expm1(state.log_u(i) - next_u(i)));
    }
    state.iterations = it;
    if (err <= opts.tol) break;
    state.log_u = next_u;
    update_v();
  }
  state.marginal_err = err;
  SinkhornResult out = sinkhorn_evaluate(mu, nu, eps, std::move(state));
  if (!(out.state.marginal_err <= opts.tol)) {
    IterationReport report;
    report.iterations = out.state.iterations;
    report.final_residual = out.state.marginal_err;
    std::ostringstream os;
    os << "sinkhorn_knopp: marginal error " << out.state.marginal_err << " after "
       << out.state.iterations << " iterations";
    throw NotConverged(os.str(), std::move(report));
  }
  return out;
}

/// Discretizes both Gaussians on their own covering grids and solves.
inline SinkhornResult oracle_solve(const Gaussian& g0, const Gaussian& g1, double eps,
                                   const GridResolution& res = {},
                                   const SinkhornOptions& opts = {}) {
  const DiscreteMeasure mu = discretize(g0, GridSpec::covering(g0, res.count, res.sigma_cover));
  const DiscreteMeasure nu = discretize(g1, GridSpec::covering(g1, res.count, res.sigma_cover));
  return sinkhorn_knopp(mu, nu, eps, opts);
}

inline double oracle_ot_eps(const Gaussian& g0, const Gaussian& g1, double eps,
                            const GridResolution& res = {}, const SinkhornOptions& opts = {}) {
  return oracle_solve(g0, g1, eps, res, opts).cost;
}

/// t OT(a, nu) + (1 - t) OT(b, nu) - OT(t a + (1 - t) b, nu) on a grid shared
/// by a and b. Positive for a != b by strict convexity.
inline double convexity_probe(const Gaussian& g0a, const Gaussian& g0b, const Gaussian& g1,
                              double t, double eps, const GridResolution& res = {},
                              const SinkhornOptions& opts = {}) {
  if (!(t > 0.0 && t < 1.0)) throw TOutOfRange("convexity_probe: t must lie in (0, 1)");
  require_same_dim(g0a, g0b, "convexity_probe");
  const GridSpec sa = GridSpec::covering(g0a, res.count, res.sigma_cover);
  const GridSpec sb = GridSpec::covering(g0b, res.count, res.sigma_cover);
  GridSpec shared;
  for (std::size_t k = 0; k < sa.axes.size(); ++k) {
    shared.axes.push_back({std::min(sa.axes[k].lo, sb.axes[k].lo),
                           std::max(sa.axes[k].hi, sb.axes[k].hi), res.count});
  }
  const DiscreteMeasure a = discretize(g0a, shared);
  const DiscreteMeasure b = discretize(g0b, shared);
  const DiscreteMeasure mix(a.support(), t * a.weights() + (1.0 - t) * b.weights());
  const DiscreteMeasure nu = discretize(g1, GridSpec::covering(g1, res.count, res.sigma_cover));
  const double ot_a = sinkhorn_knopp(a, nu, eps, opts).cost;
  const double ot_b = sinkhorn_knopp(b, nu, eps, opts).cost;
  const double ot_mix = sinkhorn_knopp(mix, nu, eps, opts).cost;
  return t * ot_a + (1.0 - t) * ot_b - ot_mix;
}

struct McEstimate {
  double estimate;
  double std_err;
};

/// Monte-Carlo E_gamma|x - y|^2 from joint samples plus the exact
/// eps KL(gamma || mu0 (x) mu1) from log-determinants.
inline McEstimate mc_entropic_cost(const GaussianCoupling& plan, double eps, Index samples,
                                   std::uint64_t seed) {
  if (!(eps > 0.0)) throw InvalidArgument("mc_entropic_cost: eps must be > 0");
  if (samples < 2) throw InvalidArgument("mc_entropic_cost: need at least 2 samples");
  const Index n = plan.source().dim();
  const Matrix draws = sample(plan.joint(), samples, seed);
  const Vector d2 = (draws.leftCols(n) - draws.rightCols(n)).rowwise().squaredNorm();
  const double mean = d2.mean();
  const double var = (d2.array() - mean).square().sum() / static_cast<double>(samples - 1);
  const double kl = 0.5 * (spd_logdet(plan.source().cov()) + spd_logdet(plan.target().cov()) -
                           spd_logdet(plan.joint_cov()));
  return McEstimate{mean + eps * kl, std::sqrt(var / static_cast<double>(samples))};
}

}  // namespace gauss_eot

#endif  // GAUSS_EOT_ORACLE_HPP
