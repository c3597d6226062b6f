#ifndef GAUSS_EOT_BARYCENTER_HPP
#define GAUSS_EOT_BARYCENTER_HPP

// Fixed-point solvers for Gaussian barycenters under W2, entropic OT and the
// Sinkhorn divergence. The barycenter mean is always sum_i w_i m_i; only the
// covariance is iterated.

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gauss_eot/entropic_ot.hpp"

namespace gauss_eot {

/// Gaussians with nonnegative weights, normalized to sum to one.
class WeightedPopulation {
 public:
  WeightedPopulation(std::vector<Gaussian> members, std::vector<double> weights)
      : members_(std::move(members)), weights_(std::move(weights)) {
    if (members_.empty()) throw InvalidArgument("population must have at least one member");
    if (members_.size() != weights_.size()) {
      throw DimensionMismatch("population: member and weight counts differ");
    }
    double total = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw InvalidArgument("population: weights must be finite and >= 0");
      }
      total += w;
    }
    if (!(total > 0.0)) throw InvalidArgument("population: weights sum to zero");
    for (double& w : weights_) w /= total;
    for (const Gaussian& g : members_) {
      require_same_dim(g, members_.front(), "population member");
    }
  }

  /// Equal weights.
  explicit WeightedPopulation(std::vector<Gaussian> members)
      : WeightedPopulation(members, std::vector<double>(members.size(), 1.0)) {}

  const std::vector<Gaussian>& members() const noexcept { return members_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  std::size_t size() const noexcept { return members_.size(); }
  Index dim() const { return members_.front().dim(); }

 private:
  std::vector<Gaussian> members_;
  std::vector<double> weights_;
};

enum class InitKind { EuclideanMeanCov, FirstMember, Custom };

struct FixedPointConfig {
  int max_iters = 500;
  double tol = 1e-10;  ///< on ||K - F(K)||_F / ||K||_F
  double damping = 1.0;
  InitKind init = InitKind::EuclideanMeanCov;
  std::optional<SpdMatrix> custom_init;

  void validate() const {
    if (max_iters < 1) throw InvalidArgument("max_iters must be >= 1");
    if (!(tol > 0.0)) throw InvalidArgument("tol must be > 0");
    if (!(damping > 0.0 && damping <= 1.0)) throw InvalidArgument("damping must lie in (0, 1]");
    if (init == InitKind::Custom && !custom_init) {
      throw InvalidArgument("custom init requested without a matrix");
    }
  }
};

struct BarycenterResult {
  Gaussian barycenter;
  IterationReport report;
};

enum class BarycenterKind { W2, Entropic, Sinkhorn };

inline const char* to_string(BarycenterKind kind) {
  switch (kind) {
    case BarycenterKind::W2: return "w2";
    case BarycenterKind::Entropic: return "entropic";
    case BarycenterKind::Sinkhorn: return "sinkhorn";
  }
  return "?";
}

inline Vector barycenter_mean(const WeightedPopulation& pop) {
  Vector m = Vector::Zero(pop.dim());
  for (std::size_t i = 0; i < pop.size(); ++i) m += pop.weights()[i] * pop.members()[i].mean();
  return m;
}

/// K -> sum_i w_i (K^{1/2} K_i K^{1/2})^{1/2}
inline SpdMatrix w2_barycenter_map(const WeightedPopulation& pop, const SpdMatrix& k) {
  const SpdMatrix r = spd_sqrt(k);
  Matrix acc = Matrix::Zero(k.dim(), k.dim());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const double w = pop.weights()[i];
    if (w == 0.0) continue;
    acc += w * spd_sqrt(congruence(r, pop.members()[i].cov())).matrix();
  }
  return SpdMatrix(SymMatrix(acc));
}

/// K -> (eps/4) sum_i w_i (-I + (I + (16/eps^2) K^{1/2} K_i K^{1/2})^{1/2})
inline SpdMatrix entropic_barycenter_map(const WeightedPopulation& pop, const Epsilon& eps,
                                         const SpdMatrix& k) {
  Matrix acc = Matrix::Zero(k.dim(), k.dim());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const double w = pop.weights()[i];
    if (w == 0.0) continue;
    acc += w * detail::root_minus_identity(k, pop.members()[i].cov(), eps.value());
  }
  return SpdMatrix(SymMatrix(0.25 * eps.value() * acc));
}

/// K -> (eps/4) (-I + (sum_i w_i (I + (16/eps^2) K^{1/2} K_i K^{1/2})^{1/2})^2)^{1/2}
inline SpdMatrix sinkhorn_barycenter_map(const WeightedPopulation& pop, const Epsilon& eps,
                                         const SpdMatrix& k) {
  // With D = sum_i w_i (N_i - I): (I + D)^2 - I = 2D + D^2.
  Matrix d = Matrix::Zero(k.dim(), k.dim());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const double w = pop.weights()[i];
    if (w == 0.0) continue;
    d += w * detail::root_minus_identity(k, pop.members()[i].cov(), eps.value());
  }
  const SpdMatrix inner(SymMatrix(2.0 * d + d * d));
  return SpdMatrix(SymMatrix(0.25 * eps.value() * spd_sqrt(inner).matrix()));
}

/// sum_i w_i cost(N(0, K), N(0, K_i)) for the barycenter notion `kind`.
inline double barycenter_objective(BarycenterKind kind, const WeightedPopulation& pop,
                                   const std::optional<Epsilon>& eps, const SpdMatrix& k) {
  const Gaussian candidate(Vector::Zero(k.dim()), k);
  double total = 0.0;
  for (std::size_t i = 0; i < pop.size(); ++i) {
    const Gaussian member = centered(pop.members()[i]);
    double cost = 0.0;
    switch (kind) {
      case BarycenterKind::W2: cost = w2_distance_sq(candidate, member); break;
      case BarycenterKind::Entropic: cost = ot_eps(candidate, member, eps.value()); break;
      case BarycenterKind::Sinkhorn: cost = sinkhorn_div(candidate, member, eps.value()); break;
    }
    total += pop.weights()[i] * cost;
  }
  return total;
}

namespace detail {

inline SpdMatrix initial_covariance(const WeightedPopulation& pop, const FixedPointConfig& cfg) {
  switch (cfg.init) {
    case InitKind::FirstMember: return pop.members().front().cov();
    case InitKind::Custom:
      require_same_dim(cfg.custom_init->dim(), pop.dim(), "custom init");
      return *cfg.custom_init;
    case InitKind::EuclideanMeanCov: break;
  }
  Matrix acc = Matrix::Zero(pop.dim(), pop.dim());
  for (std::size_t i = 0; i < pop.size(); ++i) {
    acc += pop.weights()[i] * pop.members()[i].cov().matrix();
  }
  return SpdMatrix(SymMatrix(acc));
}

inline BarycenterResult solve_fixed_point(
    const WeightedPopulation& pop, const FixedPointConfig& cfg, const char* label,
    const std::function<SpdMatrix(const SpdMatrix&)>& map) {
  cfg.validate();
  // Iterates whose smallest eigenvalue drops below eps_pd times the
  // population scale are treated as collapsed.
  double scale = 0.0;
  for (const Gaussian& g : pop.members()) scale = std::max(scale, g.cov().max_eigenvalue());
  const double collapse_floor = default_eps_pd() * scale;

  IterationReport report;
  SpdMatrix k = initial_covariance(pop, cfg);
  for (int it = 0; it < cfg.max_iters; ++it) {
    SpdMatrix fk = [&] {
      try {
        return map(k);
      } catch (const DegenerateMatrix& ex) {
        std::ostringstream os;
        os << label << ": iterate became degenerate at iteration " << it + 1 << " ("
           << ex.what() << ")";
        throw DegenerateMatrix(os.str());
      }
    }();
    const double r = rel_frobenius(fk.matrix(), k.matrix());
    report.iterations = it + 1;
    report.residuals.push_back(r);
    report.final_residual = r;
    report.min_eigenvalue = k.min_eigenvalue();
    if (r <= cfg.tol) {
      report.converged = true;
      return BarycenterResult{Gaussian(barycenter_mean(pop), std::move(k)), std::move(report)};
    }
    if (cfg.damping < 1.0) {
      fk = SpdMatrix(SymMatrix((1.0 - cfg.damping) * k.matrix() + cfg.damping * fk.matrix()));
    }
    if (fk.min_eigenvalue() <= collapse_floor) {
      std::ostringstream os;
      os << label << ": iterate collapsed (lambda_min = " << fk.min_eigenvalue()
         << ") at iteration " << it + 1;
      throw DegenerateMatrix(os.str());
    }
    k = std::move(fk);
  }
  std::ostringstream os;
  os << label << ": no convergence in " << cfg.max_iters << " iterations (residual "
     << report.final_residual << ", lambda_min " << report.min_eigenvalue << ")";
  throw NotConverged(os.str(), std::move(report));
}

}  // namespace detail

inline BarycenterResult w2_barycenter(const WeightedPopulation& pop,
                                      const FixedPointConfig& cfg = {}) {
  return detail::solve_fixed_point(pop, cfg, "w2_barycenter",
                                   [&](const SpdMatrix& k) { return w2_barycenter_map(pop, k); });
}

inline BarycenterResult entropic_barycenter(const WeightedPopulation& pop, const Epsilon& eps,
                                            const FixedPointConfig& cfg = {}) {
  return detail::solve_fixed_point(pop, cfg, "entropic_barycenter", [&](const SpdMatrix& k) {
    return entropic_barycenter_map(pop, eps, k);
  });
}

inline BarycenterResult sinkhorn_barycenter(const WeightedPopulation& pop, const Epsilon& eps,
                                            const FixedPointConfig& cfg = {}) {
  return detail::solve_fixed_point(pop, cfg, "sinkhorn_barycenter", [&](const SpdMatrix& k) {
    return sinkhorn_barycenter_map(pop, eps, k);
  });
}

inline SpdMatrix barycenter_map(BarycenterKind kind, const WeightedPopulation& pop,
                                const std::optional<Epsilon>& eps, const SpdMatrix& k) {
  switch (kind) {
    case BarycenterKind::W2: return w2_barycenter_map(pop, k);
    case BarycenterKind::Entropic: return entropic_barycenter_map(pop, eps.value(), k);
    case BarycenterKind::Sinkhorn: return sinkhorn_barycenter_map(pop, eps.value(), k);
  }
  throw InvalidArgument("unknown barycenter kind");
}

/// Dispatches on kind; eps is required for Entropic and Sinkhorn.
inline BarycenterResult barycenter(BarycenterKind kind, const WeightedPopulation& pop,
                                   const std::optional<Epsilon>& eps,
                                   const FixedPointConfig& cfg = {}) {
  if (kind != BarycenterKind::W2 && !eps) {
    throw InvalidArgument("entropic and sinkhorn barycenters need epsilon");
  }
  switch (kind) {
    case BarycenterKind::W2: return w2_barycenter(pop, cfg);
    case BarycenterKind::Entropic: return entropic_barycenter(pop, *eps, cfg);
    case BarycenterKind::Sinkhorn: return sinkhorn_barycenter(pop, *eps, cfg);
  }
  throw InvalidArgument("unknown barycenter kind");
}

/// One cell of a barycentric span; exactly one of result / error is set.
struct SpanCell {
  Index row = 0;  ///< index along v
  Index col = 0;  ///< index along u
  double u = 0.0;
  double v = 0.0;
  std::array<double, 4> weights{};
  std::optional<BarycenterResult> result;
  std::string error;
};

struct SpanGrid {
  Index cells_per_side = 0;
  std::vector<SpanCell> cells;  ///< row-major: index = row * cells_per_side + col

  const SpanCell& at(Index row, Index col) const {
    return cells.at(static_cast<std::size_t>(row * cells_per_side + col));
  }
  bool all_converged() const {
    for (const SpanCell& c : cells) {
      if (!c.result || !c.result->report.converged) return false;
    }
    return true;
  }
};

/// Bilinear weights over the unit square: corners ordered (0,0), (1,0), (0,1), (1,1) in (u, v).
inline std::array<double, 4> bilinear_weights(double u, double v) {
  return {(1.0 - u) * (1.0 - v), u * (1.0 - v), (1.0 - u) * v, u * v};
}

/// Barycenters of four corner Gaussians over a cells_per_side^2 grid of
/// bilinear weights. Solver failures are recorded per cell.
inline SpanGrid barycentric_span(const std::array<Gaussian, 4>& corners, Index cells_per_side,
                                 BarycenterKind kind, const std::optional<Epsilon>& eps,
                                 const FixedPointConfig& cfg = {}) {
  if (cells_per_side < 2) throw InvalidArgument("barycentric_span: grid must be >= 2");
  if (kind != BarycenterKind::W2 && !eps) {
    throw InvalidArgument("barycentric_span: epsilon required");
  }
  for (const Gaussian& g : corners) require_same_dim(g, corners[0], "barycentric_span corner");
  SpanGrid grid;
  grid.cells_per_side = cells_per_side;
  const double step = 1.0 / static_cast<double>(cells_per_side - 1);
  for (Index row = 0; row < cells_per_side; ++row) {
    for (Index col = 0; col < cells_per_side; ++col) {
      SpanCell cell;
      cell.row = row;
      cell.col = col;
      cell.u = col == cells_per_side - 1 ? 1.0 : static_cast<double>(col) * step;
      cell.v = row == cells_per_side - 1 ? 1.0 : static_cast<double>(row) * step;
      cell.weights = bilinear_weights(cell.u, cell.v);
      try {
        const WeightedPopulation pop({corners.begin(), corners.end()},
                                     {cell.weights.begin(), cell.weights.end()});
        cell.result = barycenter(kind, pop, eps, cfg);
      } catch (const Error& ex) {
        std::ostringstream os;
        os << "cell (" << row << ", " << col << "): " << ex.what();
        cell.error = os.str();
      }
      grid.cells.push_back(std::move(cell));
    }
  }
  return grid;
}

}  // namespace gauss_eot

#endif  // GAUSS_EOT_BARYCENTER_HPP
