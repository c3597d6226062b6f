#ifndef GAUSS_EOT_CLI_HPP
#define GAUSS_EOT_CLI_HPP

// Command implementations behind the gauss-eot executable. Each command
// builds a Table; run() parses arguments, writes the table and maps errors
// to exit codes (0 ok, 1 math or validation failure, 2 config or parse error).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gauss_eot/io.hpp"
#include "gauss_eot/oracle.hpp"

namespace gauss_eot::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2 };

/// Invalid flag combination or value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct EpsilonSweep {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;
  bool log_spaced = false;

  /// "lo:hi:count" or "lo:hi:count:log" / "lo:hi:count:lin".
  static EpsilonSweep parse(const std::string& text) {
    std::vector<std::string> parts;
    std::stringstream in(text);
    for (std::string p; std::getline(in, p, ':');) parts.push_back(p);
    if (parts.size() != 3 && parts.size() != 4) {
      throw ConfigError("--epsilon-sweep: expected lo:hi:count[:log|lin], got '" + text + "'");
    }
    EpsilonSweep s;
    try {
      s.lo = parse_double(parts[0], "--epsilon-sweep lo");
      s.hi = parse_double(parts[1], "--epsilon-sweep hi");
      s.count = static_cast<int>(parse_double(parts[2], "--epsilon-sweep count"));
    } catch (const ParseError& ex) {
      throw ConfigError(ex.what());
    }
    if (parts.size() == 4) {
      if (parts[3] == "log") {
        s.log_spaced = true;
      } else if (parts[3] != "lin") {
        throw ConfigError("--epsilon-sweep: spacing must be 'log' or 'lin'");
      }
    }
    if (!(s.lo < s.hi)) throw ConfigError("--epsilon-sweep: lo must be < hi");
    if (s.count < 2) throw ConfigError("--epsilon-sweep: count must be >= 2");
    if (s.lo < 0.0) throw ConfigError("--epsilon-sweep: epsilon must be >= 0");
    if (s.log_spaced && !(s.lo > 0.0)) throw ConfigError("--epsilon-sweep: log spacing needs lo > 0");
    return s;
  }

  std::vector<double> values() const {
    std::vector<double> out;
    for (int k = 0; k < count; ++k) {
      const double f = static_cast<double>(k) / static_cast<double>(count - 1);
      double v = log_spaced ? lo * std::pow(hi / lo, f) : lo + f * (hi - lo);
      if (k == 0) v = lo;
      if (k == count - 1) v = hi;
      out.push_back(v);
    }
    return out;
  }
};

/// "lo:hi:count" grid for density columns.
struct AxisRange {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;

  static AxisRange parse(const std::string& text) {
    const auto bad = [&] {
      return ConfigError("--density-grid: expected lo:hi:count with lo < hi and count >= 2, got '" +
                         text + "'");
    };
    std::vector<std::string> parts;
    std::stringstream in(text);
    for (std::string p; std::getline(in, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw bad();
    AxisRange r;
    try {
      r.lo = parse_double(parts[0], "--density-grid lo");
      r.hi = parse_double(parts[1], "--density-grid hi");
      r.count = static_cast<int>(parse_double(parts[2], "--density-grid count"));
    } catch (const ParseError&) {
      throw bad();
    }
    if (!(r.lo < r.hi) || r.count < 2) throw bad();
    return r;
  }

  double at(int k) const {
    if (k == count - 1) return hi;
    return lo + static_cast<double>(k) * (hi - lo) / static_cast<double>(count - 1);
  }
};

enum class Command { Distance, Sinkhorn, Interpolate, Barycenter, Span, Limits, Validate };
enum class Format { Csv, Json };

struct RunConfig {
  Command command = Command::Distance;
  std::vector<std::string> inputs;
  std::vector<double> epsilons;  ///< sorted ascending; 0 selects the unregularized path
  int t_grid = 11;
  std::string output;
  Format format = Format::Csv;
  std::uint64_t seed = 0;

  Index grid = 0;  ///< oracle nodes per axis; 0 picks 512 in 1D and 48 in 2D
  double sigma_cover = 8.0;
  std::optional<double> tol;
  std::optional<int> max_iters;
  double damping = 1.0;

  BarycenterKind kind = BarycenterKind::Sinkhorn;
  Index cells = 5;
  std::optional<AxisRange> density_grid;

  std::optional<std::string> fixtures;
  double tol_scale = 1.0;
  std::optional<double> w2_threshold;
};

/// Table plus the exit status the command wants and report lines.
struct CommandResult {
  Table table;
  int status = kOk;
  std::vector<std::string> notes;
};

namespace detail {

inline std::string fmt(double x) { return format_double(x); }

inline std::pair<Gaussian, Gaussian> load_pair(const RunConfig& cfg) {
  if (cfg.inputs.size() != 2) {
    throw ConfigError("expected exactly two Gaussian files, got " +
                      std::to_string(cfg.inputs.size()));
  }
  Gaussian g0 = load_gaussian(cfg.inputs[0]);
  Gaussian g1 = load_gaussian(cfg.inputs[1]);
  if (g0.dim() != g1.dim()) {
    throw ConfigError(cfg.inputs[1] + ": dimension " + std::to_string(g1.dim()) + " differs from " +
                      cfg.inputs[0] + " (" + std::to_string(g0.dim()) + ")");
  }
  return {std::move(g0), std::move(g1)};
}

inline WeightedPopulation load_single_population(const RunConfig& cfg) {
  if (cfg.inputs.size() != 1) throw ConfigError("expected exactly one population file");
  return load_population(cfg.inputs[0]);
}

inline FixedPointConfig fixed_point_config(const RunConfig& cfg) {
  FixedPointConfig fp;
  if (cfg.tol) fp.tol = *cfg.tol;
  if (cfg.max_iters) fp.max_iters = *cfg.max_iters;
  fp.damping = cfg.damping;
  try {
    fp.validate();
  } catch (const InvalidArgument& ex) {
    throw ConfigError(ex.what());
  }
  return fp;
}

inline SinkhornOptions sinkhorn_options(const RunConfig& cfg) {
  SinkhornOptions opts;
  if (cfg.tol) opts.tol = *cfg.tol;
  if (cfg.max_iters) opts.max_iters = *cfg.max_iters;
  if (!(opts.tol > 0.0)) throw ConfigError("--tol must be > 0");
  if (opts.max_iters < 1) throw ConfigError("--max-iters must be >= 1");
  return opts;
}

inline GridResolution resolution(const RunConfig& cfg, Index dim) {
  if (dim > 2) throw ConfigError("grid oracle supports n <= 2; got n = " + std::to_string(dim));
  GridResolution res;
  res.count = cfg.grid > 0 ? cfg.grid : (dim == 1 ? 512 : 48);
  res.sigma_cover = cfg.sigma_cover;
  if (res.count < GridSpec::kMinNodesPerAxis) throw ConfigError("--grid must be >= 16");
  if (!(res.sigma_cover >= kDefaultRequiredCoverage)) {
    throw ConfigError("--sigma-cover must be >= 6");
  }
  return res;
}

inline void require_positive_epsilons(const RunConfig& cfg, const char* command) {
  for (double e : cfg.epsilons) {
    if (!(e > 0.0)) {
      throw ConfigError(std::string(command) + ": epsilon must be > 0 (got " + fmt(e) + ")");
    }
  }
}

/// W2 barycenter when eps == 0, otherwise the requested kind.
inline std::pair<BarycenterKind, std::optional<Epsilon>> resolve_kind(BarycenterKind kind,
                                                                      double eps) {
  if (eps == 0.0) return {BarycenterKind::W2, std::nullopt};
  return {kind, Epsilon(eps)};
}

inline Matrix random_rotation(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix a(n, n);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ();
  const Vector d = qr.matrixQR().diagonal();
  for (Index k = 0; k < n; ++k) {
    if (d(k) < 0.0) q.col(k) = -q.col(k);
  }
  return q;
}

/// Eigenvalues log-uniform in [lo, hi] under a random rotation.
inline SpdMatrix random_spd(Index n, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Vector lambda(n);
  for (Index k = 0; k < n; ++k) lambda(k) = lo * std::pow(hi / lo, unit(rng));
  const Matrix q = random_rotation(n, rng);
  return SpdMatrix(SymMatrix(q * lambda.asDiagonal() * q.transpose()));
}

inline Gaussian random_gaussian(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector m(n);
  for (Index k = 0; k < n; ++k) m(k) = normal(rng);
  return Gaussian(m, random_spd(n, rng, 0.2, 5.0));
}

inline Matrix random_unit_symmetric(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix e(n, n);
  for (Index i = 0; i < e.size(); ++i) e.data()[i] = normal(rng);
  e = 0.5 * (e + e.transpose());
  return e / e.norm();
}

inline Matrix random_unit(Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix e(n, n);
  for (Index i = 0; i < e.size(); ++i) e.data()[i] = normal(rng);
  return e / e.norm();
}

}  // namespace detail

inline CommandResult cmd_distance(const RunConfig& cfg) {
  const auto [g0, g1] = detail::load_pair(cfg);
  CommandResult res{Table({"epsilon", "w2_sq", "ot_eps", "sinkhorn_div"}), kOk, {}};
  const double w2 = w2_distance_sq(g0, g1);
  for (double e : cfg.epsilons) {
    if (e == 0.0) {
      res.table.add_row({e, w2, w2, w2});
      continue;
    }
    const Epsilon eps(e);
    res.table.add_row({e, w2, ot_eps(g0, g1, eps), sinkhorn_div(g0, g1, eps)});
  }
  return res;
}

inline CommandResult cmd_sinkhorn(const RunConfig& cfg) {
  const auto [g0, g1] = detail::load_pair(cfg);
  detail::require_positive_epsilons(cfg, "sinkhorn");
  const GridResolution grid = detail::resolution(cfg, g0.dim());
  const SinkhornOptions opts = detail::sinkhorn_options(cfg);
  CommandResult res{Table({"epsilon", "nodes", "oracle_ot_eps", "ot_eps", "rel_err", "iterations",
                           "marginal_err"}),
                    kOk,
                    {}};
  for (double e : cfg.epsilons) {
    const SinkhornResult r = oracle_solve(g0, g1, e, grid, opts);
    const double cf = ot_eps(g0, g1, Epsilon(e));
    res.table.add_row({e, static_cast<long long>(r.plan.rows()), r.cost, cf,
                       std::abs(r.cost - cf) / std::abs(cf),
                       static_cast<long long>(r.state.iterations), r.state.marginal_err});
  }
  return res;
}

inline CommandResult cmd_interpolate(const RunConfig& cfg) {
  const auto [g0, g1] = detail::load_pair(cfg);
  if (cfg.t_grid < 2) throw ConfigError("--t-grid must be >= 2");
  if (cfg.density_grid && g0.dim() != 1) {
    throw ConfigError("--density-grid is only available for one-dimensional inputs");
  }
  std::vector<std::string> cols{"epsilon", "t"};
  for (const std::string& c : gaussian_columns(g0.dim())) cols.push_back(c);
  if (cfg.density_grid) {
    for (int k = 0; k < cfg.density_grid->count; ++k) cols.push_back("pdf_" + std::to_string(k));
  }
  CommandResult res{Table(cols), kOk, {}};
  if (cfg.density_grid) {
    const AxisRange& r = *cfg.density_grid;
    res.table.add_comment("pdf_k evaluated at x = " + detail::fmt(r.lo) + " + k * (" +
                          detail::fmt(r.hi) + " - " + detail::fmt(r.lo) + ") / " +
                          std::to_string(r.count - 1));
  }
  for (double e : cfg.epsilons) {
    for (int k = 0; k < cfg.t_grid; ++k) {
      const double t =
          k == cfg.t_grid - 1 ? 1.0 : static_cast<double>(k) / static_cast<double>(cfg.t_grid - 1);
      const Gaussian g = e == 0.0 ? w2_geodesic(g0, g1, t) : entropic_interpolate(g0, g1, Epsilon(e), t);
      std::vector<Table::Cell> row{e, t};
      append_gaussian(row, g);
      if (cfg.density_grid) {
        for (int j = 0; j < cfg.density_grid->count; ++j) {
          row.emplace_back(std::exp(log_density(g, Vector::Constant(1, cfg.density_grid->at(j)))));
        }
      }
      res.table.add_row(std::move(row));
    }
  }
  return res;
}

inline CommandResult cmd_barycenter(const RunConfig& cfg) {
  const WeightedPopulation pop = detail::load_single_population(cfg);
  const FixedPointConfig fp = detail::fixed_point_config(cfg);
  std::vector<std::string> cols{"kind", "epsilon", "status", "iterations", "residual"};
  for (const std::string& c : gaussian_columns(pop.dim())) cols.push_back(c);
  CommandResult res{Table(cols), kOk, {}};
  for (double e : cfg.epsilons) {
    const auto [kind, eps] = detail::resolve_kind(cfg.kind, e);
    std::vector<Table::Cell> row{std::string(to_string(kind)), e};
    try {
      const BarycenterResult r = barycenter(kind, pop, eps, fp);
      row.insert(row.end(), {std::string("converged"), static_cast<long long>(r.report.iterations),
                             r.report.final_residual});
      append_gaussian(row, r.barycenter);
    } catch (const NotConverged& ex) {
      row.insert(row.end(), {std::string("not_converged"),
                             static_cast<long long>(ex.report().iterations),
                             ex.report().final_residual});
      append_missing_gaussian(row, pop.dim());
      res.notes.push_back(ex.what());
      res.status = kFailure;
    } catch (const DegenerateMatrix& ex) {
      row.insert(row.end(), {std::string("degenerate"), -1LL, std::nan("")});
      append_missing_gaussian(row, pop.dim());
      res.notes.push_back(ex.what());
      res.status = kFailure;
    }
    res.table.add_row(std::move(row));
  }
  return res;
}

inline CommandResult cmd_span(const RunConfig& cfg) {
  const WeightedPopulation pop = detail::load_single_population(cfg);
  if (pop.size() != 4) {
    throw ConfigError(cfg.inputs[0] + ": span needs exactly 4 corner members, got " +
                      std::to_string(pop.size()));
  }
  if (cfg.cells < 2) throw ConfigError("--cells must be >= 2");
  const FixedPointConfig fp = detail::fixed_point_config(cfg);
  const std::array<Gaussian, 4> corners{pop.members()[0], pop.members()[1], pop.members()[2],
                                        pop.members()[3]};
  std::vector<std::string> cols{"kind", "epsilon", "row", "col", "u", "v", "w_0", "w_1", "w_2",
                                "w_3", "status", "iterations", "residual"};
  for (const std::string& c : gaussian_columns(pop.dim())) cols.push_back(c);
  CommandResult res{Table(cols), kOk, {}};
  res.table.add_comment("corners (u, v) = (0, 0), (1, 0), (0, 1), (1, 1) in file order");
  for (double e : cfg.epsilons) {
    const auto [kind, eps] = detail::resolve_kind(cfg.kind, e);
    const SpanGrid grid = barycentric_span(corners, cfg.cells, kind, eps, fp);
    for (const SpanCell& cell : grid.cells) {
      std::vector<Table::Cell> row{std::string(to_string(kind)), e,
                                   static_cast<long long>(cell.row),
                                   static_cast<long long>(cell.col), cell.u, cell.v};
      for (double w : cell.weights) row.emplace_back(w);
      if (cell.result) {
        row.insert(row.end(), {std::string("converged"),
                               static_cast<long long>(cell.result->report.iterations),
                               cell.result->report.final_residual});
        append_gaussian(row, cell.result->barycenter);
      } else {
        row.insert(row.end(), {std::string("failed"), -1LL, std::nan("")});
        append_missing_gaussian(row, pop.dim());
        res.notes.push_back(cell.error);
        res.status = kFailure;
      }
      res.table.add_row(std::move(row));
    }
  }
  return res;
}

inline CommandResult cmd_limits(const RunConfig& cfg) {
  const auto [g0, g1] = detail::load_pair(cfg);
  detail::require_positive_epsilons(cfg, "limits");
  CommandResult res{Table({"epsilon", "ot_eps", "gap_w2", "gap_sinkhorn_mmd", "gap_ot_mmd"}), kOk,
                    {}};
  const double w2 = w2_distance_sq(g0, g1);
  for (double e : cfg.epsilons) {
    const Epsilon eps(e);
    const MmdGaps mmd = limit_mmd_gap(g0, g1, eps);
    const double ot = ot_eps(g0, g1, eps);
    res.table.add_row({e, ot, std::abs(ot - w2), mmd.sinkhorn_gap, mmd.ot_gap});
  }
  const double threshold = cfg.w2_threshold ? *cfg.w2_threshold : 1e-2 * (1.0 + w2);
  const double smallest_gap = limit_w2_gap(g0, g1, Epsilon(cfg.epsilons.front()));
  std::ostringstream os;
  os << "limits: gap_w2 at epsilon " << detail::fmt(cfg.epsilons.front()) << " is "
     << detail::fmt(smallest_gap) << " (threshold " << detail::fmt(threshold) << ")";
  res.notes.push_back(os.str());
  if (!(smallest_gap < threshold)) res.status = kFailure;
  return res;
}

/// Pair of Gaussians with a regularization, as used by the validate battery.
struct ValidationFixture {
  std::string name;
  Gaussian source;
  Gaussian target;
  double epsilon;
};

namespace detail {

inline std::vector<ValidationFixture> builtin_grid_fixtures() {
  struct Row {
    double m0, k0, m1, k1, eps;
  };
  const Row rows[] = {{0.0, 1.0, 0.0, 1.0, 2.0},    {0.0, 0.5, 0.0, 2.0, 0.5},
                      {0.0, 0.1, 1.0, 2.0, 1.0},    {0.0, 1.0, 0.0, 20.0, 5.0},
                      {0.0, 0.25, -1.0, 5.0, 20.0}, {0.0, 3.0, 2.0, 0.15, 0.5}};
  std::vector<ValidationFixture> out;
  int k = 0;
  for (const Row& r : rows) {
    out.push_back({"grid" + std::to_string(k++), Gaussian::scalar(r.m0, r.k0),
                   Gaussian::scalar(r.m1, r.k1), r.eps});
  }
  return out;
}

inline std::vector<ValidationFixture> builtin_pair_fixtures(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ValidationFixture> out;
  for (int k = 0; k < 12; ++k) {
    const Index n = 1 + k % 5;
    Gaussian g0 = random_gaussian(n, rng);
    Gaussian g1 = random_gaussian(n, rng);
    const double eps = 0.1 * std::pow(100.0, unit(rng));
    out.push_back({"pair" + std::to_string(k), std::move(g0), std::move(g1), eps});
  }
  return out;
}

inline std::vector<ValidationFixture> fixtures_from_json(const Json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected an array");
  std::vector<ValidationFixture> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string w = where + "[" + std::to_string(i) + "]";
    Gaussian g0 =
        gaussian_from_json(gauss_eot::detail::json_field(j[i], "source", w), w + ".source");
    Gaussian g1 =
        gaussian_from_json(gauss_eot::detail::json_field(j[i], "target", w), w + ".target");
    if (g0.dim() != g1.dim()) throw ParseError(w + ": source and target dimensions differ");
    const double eps = gauss_eot::detail::json_number(
        gauss_eot::detail::json_field(j[i], "epsilon", w), w + ".epsilon");
    if (!(eps > 0.0)) throw ParseError(w + ".epsilon: must be > 0");
    out.push_back({w, std::move(g0), std::move(g1), eps});
  }
  return out;
}

class Battery {
 public:
  Battery(Table& table, double scale) : table_(table), scale_(scale) {}

  /// Passes when value < base_tol * scale.
  void below(const std::string& check, const std::string& group, const std::string& fixture,
             double value, double base_tol) {
    const double tol = base_tol * scale_;
    record(check, group, fixture, value, tol, value < tol);
  }

  /// Passes when value > 0; these margins do not scale.
  void positive(const std::string& check, const std::string& group, const std::string& fixture,
                double value) {
    record(check, group, fixture, value, 0.0, value > 0.0);
  }

  void error(const std::string& check, const std::string& group, const std::string& fixture,
             const std::string& what) {
    table_.add_row({check, group, fixture, std::nan(""), std::nan(""), std::string("error")});
    ++failed_;
    notes_.push_back(check + " " + fixture + ": " + what);
  }

  int passed() const { return passed_; }
  int failed() const { return failed_; }
  const std::vector<std::string>& notes() const { return notes_; }

 private:
  void record(const std::string& check, const std::string& group, const std::string& fixture,
              double value, double tol, bool ok) {
    table_.add_row({check, group, fixture, value, tol, std::string(ok ? "pass" : "fail")});
    ok ? ++passed_ : ++failed_;
  }

  Table& table_;
  double scale_;
  int passed_ = 0;
  int failed_ = 0;
  std::vector<std::string> notes_;
};

template <class F>
void guarded(Battery& b, const std::string& check, const std::string& group,
             const std::string& fixture, F&& body) {
  try {
    body();
  } catch (const Error& ex) {
    b.error(check, group, fixture, ex.what());
  }
}

inline void run_closed_form_checks(Battery& b, const ValidationFixture& f, std::mt19937_64& rng) {
  const std::string cf = "closed_form";
  const Epsilon eps(f.epsilon);
  const Gaussian c0 = centered(f.source);
  const Gaussian c1 = centered(f.target);
  const Index n = f.source.dim();
  constexpr double kStep = 1e-2;

  guarded(b, "duality_gap", cf, f.name, [&] {
    const double ot = ot_eps(c0, c1, eps);
    const EntropicPotentials pot = solve_potentials(c0, c1, eps);
    b.below("duality_gap", cf, f.name,
            std::abs(dual_objective(c0, c1, pot, eps) - ot) / (1.0 + std::abs(ot)), 1e-9);
    EntropicPotentials bumped = pot;
    bumped.source_quadratic =
        SymMatrix(pot.source_quadratic.matrix() + kStep * random_unit_symmetric(n, rng));
    b.positive("dual_below_perturbed", cf, f.name, ot - dual_objective(c0, c1, bumped, eps));
    const EntropicPlan plan = entropic_plan(c0, c1, eps);
    Matrix cross = plan.coupling.cross() + kStep * random_unit(n, rng);
    b.positive("plan_above_perturbed", cf, f.name,
               plan_objective(GaussianCoupling(c0, c1, cross), eps) - ot);
  });
  guarded(b, "riccati_residual", cf, f.name, [&] {
    const SpdMatrix s = riccati_schur(f.source, f.target, eps);
    b.below("riccati_residual", cf, f.name, riccati_residual(f.source, f.target, s, eps), 1e-8);
    const EntropicPlan plan = entropic_plan(f.source, f.target, eps);
    b.below("riccati_schur_match", cf, f.name,
            rel_frobenius(plan.coupling.schur_complement().matrix(), s.matrix()), 1e-8);
  });
  guarded(b, "lemma_identity", cf, f.name, [&] {
    b.below("lemma_identity", cf, f.name, lemma_identity_residual(f.source.cov(), f.target.cov(), eps),
            1e-9);
  });
  guarded(b, "sinkhorn_self", cf, f.name, [&] {
    b.below("sinkhorn_self", cf, f.name, std::abs(sinkhorn_div(f.source, f.source, eps)), 1e-10);
  });
  guarded(b, "sinkhorn_combination", cf, f.name, [&] {
    const double s = sinkhorn_div(f.source, f.target, eps);
    const double combo = ot_eps(f.source, f.target, eps) -
                         0.5 * (ot_eps(f.source, f.source, eps) + ot_eps(f.target, f.target, eps));
    b.below("sinkhorn_combination", cf, f.name, std::abs(s - combo) / (1.0 + std::abs(s)), 1e-9);
  });
  guarded(b, "interpolant_forms", cf, f.name, [&] {
    double worst = 0.0;
    for (int k = 1; k <= 9; ++k) {
      worst = std::max(worst, interpolant_forms_agree(f.source, f.target, eps, 0.1 * k));
    }
    b.below("interpolant_forms", cf, f.name, worst, 1e-8);
  });
  guarded(b, "kl_identity", cf, f.name, [&] {
    const EntropicPlan plan = entropic_plan(f.source, f.target, eps);
    b.below("kl_identity", cf, f.name, kl_identity_check(f.source, f.target, plan.coupling).difference,
            1e-9);
  });
}

}  // namespace detail

inline CommandResult cmd_validate(const RunConfig& cfg) {
  if (!(cfg.tol_scale > 0.0)) throw ConfigError("--tol-scale must be > 0");
  std::vector<ValidationFixture> grid_fixtures = detail::builtin_grid_fixtures();
  std::vector<ValidationFixture> pair_fixtures = detail::builtin_pair_fixtures(cfg.seed);
  if (cfg.fixtures) {
    const Json j = gauss_eot::detail::read_json_file(*cfg.fixtures);
    if (!j.is_object()) throw ParseError(*cfg.fixtures + ": expected an object");
    if (j.contains("oracle")) {
      grid_fixtures = detail::fixtures_from_json(j["oracle"], *cfg.fixtures + ".oracle");
    }
    if (j.contains("pairs")) {
      pair_fixtures = detail::fixtures_from_json(j["pairs"], *cfg.fixtures + ".pairs");
    }
  }
  const SinkhornOptions opts = detail::sinkhorn_options(cfg);
  CommandResult res{Table({"check", "group", "fixture", "value", "tolerance", "status"}), kOk, {}};
  detail::Battery battery(res.table, cfg.tol_scale);
  for (const ValidationFixture& f : grid_fixtures) {
    detail::guarded(battery, "oracle_rel_err", "grid", f.name, [&] {
      const GridResolution grid = detail::resolution(cfg, f.source.dim());
      const double cf = ot_eps(f.source, f.target, Epsilon(f.epsilon));
      const double oracle = oracle_ot_eps(f.source, f.target, f.epsilon, grid, opts);
      battery.below("oracle_rel_err", "grid", f.name, std::abs(oracle - cf) / std::abs(cf), 2e-2);
    });
  }
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  for (const ValidationFixture& f : pair_fixtures) detail::run_closed_form_checks(battery, f, rng);
  std::ostringstream os;
  os << "validate: " << battery.passed() << " passed, " << battery.failed() << " failed";
  res.notes = battery.notes();
  res.notes.push_back(os.str());
  if (battery.failed() > 0) res.status = kFailure;
  return res;
}

inline CommandResult dispatch(const RunConfig& cfg) {
  switch (cfg.command) {
    case Command::Distance: return cmd_distance(cfg);
    case Command::Sinkhorn: return cmd_sinkhorn(cfg);
    case Command::Interpolate: return cmd_interpolate(cfg);
    case Command::Barycenter: return cmd_barycenter(cfg);
    case Command::Span: return cmd_span(cfg);
    case Command::Limits: return cmd_limits(cfg);
    case Command::Validate: return cmd_validate(cfg);
  }
  throw ConfigError("unknown command");
}

namespace detail {

inline std::vector<double> default_epsilons(Command c) {
  switch (c) {
    case Command::Distance:
    case Command::Interpolate: return {0.01, 1.0, 2.0, 5.0, 20.0};
    case Command::Limits: return EpsilonSweep{1e-3, 1e6, 10, true}.values();
    default: return {1.0};
  }
}

inline std::vector<double> parse_epsilon_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  for (std::string p; std::getline(in, p, ',');) {
    double v = 0.0;
    try {
      v = parse_double(p, "--epsilon");
    } catch (const ParseError& ex) {
      throw ConfigError(ex.what());
    }
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("--epsilon: values must be >= 0");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("--epsilon: empty list");
  return out;
}

}  // namespace detail

/// Parses argv-style arguments (args[0] is the program name), runs the
/// command and writes the table to --output or `out`. Report lines go to
/// `out` when a file was written, otherwise to `err`.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Closed-form entropic optimal transport between Gaussians", "gauss-eot"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string epsilon_list;
  std::string epsilon_sweep;
  std::string format = "csv";
  std::string kind = "sinkhorn";
  std::string density_grid;

  struct Spec {
    const char* name;
    Command command;
    const char* help;
  };
  const Spec specs[] = {
      {"distance", Command::Distance, "W2^2, OT^eps and S^eps for a pair"},
      {"sinkhorn", Command::Sinkhorn, "grid Sinkhorn-Knopp oracle against the closed form"},
      {"interpolate", Command::Interpolate, "entropic displacement interpolation table"},
      {"barycenter", Command::Barycenter, "barycenter of a weighted population"},
      {"span", Command::Span, "barycentric span of four corner Gaussians"},
      {"limits", Command::Limits, "epsilon sweep of the small and large epsilon gaps"},
      {"validate", Command::Validate, "closed-form and grid oracle battery"},
  };
  for (const Spec& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->callback([&cfg, c = s.command] { cfg.command = c; });
    const bool takes_files = s.command != Command::Validate;
    if (takes_files) {
      sub->add_option("inputs", cfg.inputs, "input JSON files")->required()->check(CLI::ExistingFile);
    }
    sub->add_option("--output,-o", cfg.output, "output path (default stdout)");
    sub->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--seed", cfg.seed, "random seed");
    if (s.command != Command::Validate) {
      auto* e = sub->add_option("--epsilon", epsilon_list, "comma-separated epsilon values");
      sub->add_option("--epsilon-sweep", epsilon_sweep, "lo:hi:count[:log]")->excludes(e);
    }
    if (s.command == Command::Sinkhorn || s.command == Command::Validate ||
        s.command == Command::Barycenter || s.command == Command::Span) {
      sub->add_option("--tol", cfg.tol, "iteration tolerance");
      sub->add_option("--max-iters", cfg.max_iters, "iteration budget");
    }
    if (s.command == Command::Sinkhorn || s.command == Command::Validate) {
      sub->add_option("--grid", cfg.grid, "oracle nodes per axis");
      sub->add_option("--sigma-cover", cfg.sigma_cover, "grid half-width in standard deviations");
    }
    if (s.command == Command::Interpolate) {
      sub->add_option("--t-grid", cfg.t_grid, "number of t values including endpoints");
      sub->add_option("--density-grid", density_grid, "lo:hi:count density columns (n = 1)");
    }
    if (s.command == Command::Barycenter || s.command == Command::Span) {
      sub->add_option("--kind", kind, "w2, entropic or sinkhorn")
          ->check(CLI::IsMember({"w2", "entropic", "sinkhorn"}));
      sub->add_option("--damping", cfg.damping, "fixed-point damping in (0, 1]");
    }
    if (s.command == Command::Span) sub->add_option("--cells", cfg.cells, "cells per side");
    if (s.command == Command::Limits) {
      sub->add_option("--w2-threshold", cfg.w2_threshold, "bound on gap_w2 at the smallest epsilon");
    }
    if (s.command == Command::Validate) {
      sub->add_option("--fixtures", cfg.fixtures, "fixture JSON file")->check(CLI::ExistingFile);
      sub->add_option("--tol-scale", cfg.tol_scale, "multiplier on every tolerance");
    }
  }

  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    cfg.format = format == "json" ? Format::Json : Format::Csv;
    cfg.kind = kind == "w2" ? BarycenterKind::W2
               : kind == "entropic" ? BarycenterKind::Entropic
                                    : BarycenterKind::Sinkhorn;
    if (!epsilon_list.empty()) {
      cfg.epsilons = detail::parse_epsilon_list(epsilon_list);
    } else if (!epsilon_sweep.empty()) {
      cfg.epsilons = EpsilonSweep::parse(epsilon_sweep).values();
    } else {
      cfg.epsilons = detail::default_epsilons(cfg.command);
    }
    std::sort(cfg.epsilons.begin(), cfg.epsilons.end());
    if (!density_grid.empty()) cfg.density_grid = AxisRange::parse(density_grid);

    const CommandResult res = dispatch(cfg);
    std::ostream* report = &err;
    std::ofstream file;
    std::ostream* sink = &out;
    if (!cfg.output.empty()) {
      file.open(cfg.output);
      if (!file) throw ConfigError(cfg.output + ": cannot open for writing");
      sink = &file;
      report = &out;
    }
    if (cfg.format == Format::Json) {
      res.table.write_json(*sink);
    } else {
      res.table.write_csv(*sink);
    }
    for (const std::string& line : res.notes) *report << line << '\n';
    return res.status;
  } catch (const ConfigError& ex) {
    err << "config error: " << ex.what() << '\n';
    return kConfigError;
  } catch (const ParseError& ex) {
    err << "parse error: " << ex.what() << '\n';
    return kConfigError;
  } catch (const Error& ex) {
    err << "error: " << ex.what() << '\n';
    return kFailure;
  }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return run(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace gauss_eot::cli

#endif  // GAUSS_EOT_CLI_HPP
