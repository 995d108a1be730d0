#include "trace/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Dense>

#include "trace/error.hpp"
#include "trace/numeric.hpp"
#include "trace/special.hpp"

namespace trace {

namespace {

// ----------------------------------------------------------------------------
// Shared helpers
// ----------------------------------------------------------------------------

double quantile_sorted(std::span<const double> sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = p * static_cast<double>(n - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double w = h - static_cast<double>(lo);
  return (1.0 - w) * sorted[lo] + w * sorted[hi];
}

std::vector<double> center_by_user(std::span<const double> y,
                                   std::span<const std::string> user) {
  std::map<std::string, std::pair<double, std::size_t>> agg;
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto& [sum, count] = agg[user[i]];
    sum += y[i];
    ++count;
  }
  std::vector<double> centered(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto& [sum, count] = agg[user[i]];
    centered[i] = y[i] - sum / static_cast<double>(count);
  }
  return centered;
}

std::size_t distinct_count(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return static_cast<std::size_t>(std::unique(v.begin(), v.end()) - v.begin());
}

// ----------------------------------------------------------------------------
// LME sufficient statistics (per-user blocks make V-inverse closed form)
// ----------------------------------------------------------------------------

struct GroupSuff {
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
};

struct LmeData {
  std::vector<GroupSuff> groups;
  std::size_t n_obs = 0;
};

LmeData build_lme_data(std::span<const double> x, std::span<const double> y,
                       std::span<const std::string> user) {
  if (x.size() != y.size() || x.size() != user.size()) {
    throw DataError("fit_lme_single: column lengths differ");
  }
  if (x.size() < 3) throw DataError("fit_lme_single needs at least 3 observations");
  std::map<std::string, GroupSuff> by_user;
  for (std::size_t i = 0; i < x.size(); ++i) {
    GroupSuff& g = by_user[user[i]];
    g.n += 1.0;
    g.sx += x[i];
    g.sy += y[i];
    g.sxx += x[i] * x[i];
    g.sxy += x[i] * y[i];
    g.syy += y[i] * y[i];
  }
  if (by_user.size() < 2) throw DataError("fit_lme_single needs at least 2 users");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  if (var == 0.0) throw NumericError("fit_lme_single: constant feature");

  LmeData data;
  data.n_obs = x.size();
  for (const auto& [_, g] : by_user) data.groups.push_back(g);
  return data;
}

struct LmeEval {
  double criterion = std::numeric_limits<double>::infinity();
  double beta0 = 0, beta1 = 0, se1 = 0, sigma_e2 = 0;
};

LmeEval eval_lme(const LmeData& data, double lambda) {
  double a00 = 0, a01 = 0, a11 = 0, b0 = 0, b1 = 0, yvy = 0, logdet_v = 0;
  for (const GroupSuff& g : data.groups) {
    const double a = lambda / (1.0 + lambda * g.n);
    a00 += g.n - a * g.n * g.n;
    a01 += g.sx - a * g.n * g.sx;
    a11 += g.sxx - a * g.sx * g.sx;
    b0 += g.sy - a * g.n * g.sy;
    b1 += g.sxy - a * g.sx * g.sy;
    yvy += g.syy - a * g.sy * g.sy;
    logdet_v += std::log1p(lambda * g.n);
  }
  const double det = a00 * a11 - a01 * a01;
  if (!(det > 0.0)) throw NumericError("fit_lme_single: singular design");

  LmeEval e;
  e.beta1 = (a00 * b1 - a01 * b0) / det;
  e.beta0 = (a11 * b0 - a01 * b1) / det;
  const double rvr = yvy - 2.0 * (e.beta0 * b0 + e.beta1 * b1) + e.beta0 * e.beta0 * a00 +
                     2.0 * e.beta0 * e.beta1 * a01 + e.beta1 * e.beta1 * a11;
  const double dof = static_cast<double>(data.n_obs) - 2.0;
  e.sigma_e2 = std::max(rvr / dof, 1e-300);
  e.criterion = dof * std::log(e.sigma_e2) + logdet_v + std::log(det);
  e.se1 = std::sqrt(e.sigma_e2 * a00 / det);
  return e;
}

}  // namespace

double lme_reml_criterion(std::span<const double> feature, std::span<const double> rating,
                          std::span<const std::string> user, double lambda) {
  return eval_lme(build_lme_data(feature, rating, user), lambda).criterion;
}

LmeFit fit_lme_single(std::span<const double> feature, std::span<const double> rating,
                      std::span<const std::string> user) {
  const LmeData data = build_lme_data(feature, rating, user);

  // Golden-section search on log lambda; the boundary lambda = 0 (no user
  // effect: plain least squares) competes as an explicit candidate.
  const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
  double lo = std::log(1e-6), hi = std::log(1e6);
  double c = hi - golden * (hi - lo);
  double d = lo + golden * (hi - lo);
  double fc = eval_lme(data, std::exp(c)).criterion;
  double fd = eval_lme(data, std::exp(d)).criterion;
  for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
    if (fc < fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - golden * (hi - lo);
      fc = eval_lme(data, std::exp(c)).criterion;
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + golden * (hi - lo);
      fd = eval_lme(data, std::exp(d)).criterion;
    }
  }
  double best_lambda = std::exp(0.5 * (lo + hi));
  double best = eval_lme(data, best_lambda).criterion;
  for (double candidate : {0.0, 1e-6, 1e6}) {
    const double crit = eval_lme(data, candidate).criterion;
    if (crit < best) {
      best = crit;
      best_lambda = candidate;
    }
  }

  const LmeEval e = eval_lme(data, best_lambda);
  LmeFit fit;
  fit.beta0 = e.beta0;
  fit.beta = e.beta1;
  fit.se = e.se1;
  fit.z = e.se1 > 0.0 ? e.beta1 / e.se1 : 0.0;
  fit.p = normal_two_sided_p(fit.z);
  fit.sigma_e2 = e.sigma_e2;
  fit.sigma_u2 = best_lambda * e.sigma_e2;
  fit.lambda = best_lambda;
  fit.n_obs = data.n_obs;
  fit.n_users = data.groups.size();
  return fit;
}

// ============================================================================
// B-spline basis
// ============================================================================

BsplineBasis BsplineBasis::from_quantiles(std::span<const double> x, int interior_knots) {
  if (x.empty()) throw DataError("BsplineBasis: empty data");
  std::vector<double> sorted(x.begin(), x.end());
  std::sort(sorted.begin(), sorted.end());
  const double lo = sorted.front(), hi = sorted.back();
  if (!(hi > lo)) throw NumericError("BsplineBasis: constant data");

  std::vector<double> interior;
  for (int i = 1; i <= interior_knots; ++i) {
    const double q =
        quantile_sorted(sorted, static_cast<double>(i) / static_cast<double>(interior_knots + 1));
    if (q > lo && q < hi && (interior.empty() || q > interior.back())) interior.push_back(q);
  }

  BsplineBasis basis;
  basis.knots.assign(4, lo);
  basis.knots.insert(basis.knots.end(), interior.begin(), interior.end());
  basis.knots.insert(basis.knots.end(), 4, hi);
  return basis;
}

std::vector<double> BsplineBasis::row(double x) const {
  const int k = size();
  const double lo = knots[3];
  const double hi = knots[static_cast<std::size_t>(k)];
  x = std::clamp(x, lo, hi);

  int span;
  if (x >= hi) {
    span = k - 1;
  } else {
    const auto it = std::upper_bound(knots.begin() + 3, knots.begin() + k + 1, x);
    span = static_cast<int>(it - knots.begin()) - 1;
    span = std::clamp(span, 3, k - 1);
  }

  // Cox-de Boor recursion for the four nonzero cubic basis values.
  double values[4] = {1.0, 0.0, 0.0, 0.0};
  double left[4], right[4];
  for (int j = 1; j <= 3; ++j) {
    left[j] = x - knots[static_cast<std::size_t>(span + 1 - j)];
    right[j] = knots[static_cast<std::size_t>(span + j)] - x;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double ratio = denom != 0.0 ? values[r] / denom : 0.0;
      values[r] = saved + right[r + 1] * ratio;
      saved = left[j - r] * ratio;
    }
    values[j] = saved;
  }

  std::vector<double> out(static_cast<std::size_t>(k), 0.0);
  for (int i = 0; i <= 3; ++i) out[static_cast<std::size_t>(span - 3 + i)] = values[i];
  return out;
}

// ============================================================================
// Penalized spline fit
// ============================================================================

namespace {

Eigen::MatrixXd design_matrix(const BsplineBasis& basis, std::span<const double> x) {
  const int k = basis.size();
  Eigen::MatrixXd b(static_cast<Eigen::Index>(x.size()), k);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::vector<double> row = basis.row(x[i]);
    for (int j = 0; j < k; ++j) b(static_cast<Eigen::Index>(i), j) = row[static_cast<std::size_t>(j)];
  }
  return b;
}

std::vector<double> greville_abscissae(const BsplineBasis& basis) {
  const int k = basis.size();
  std::vector<double> xi(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    xi[static_cast<std::size_t>(i)] =
        (basis.knots[static_cast<std::size_t>(i + 1)] +
         basis.knots[static_cast<std::size_t>(i + 2)] +
         basis.knots[static_cast<std::size_t>(i + 3)]) /
        3.0;
  }
  return xi;
}

// Second-order difference penalty in divided-difference form over the
// Greville abscissae. Knots sit at quantiles (non-uniform), and this form
// keeps the penalty null space equal to the functions linear in x, so heavy
// smoothing converges to the straight-line fit. For uniform knots it reduces
// to the plain [1, -2, 1] stencil up to scale.
Eigen::MatrixXd second_difference_penalty(const BsplineBasis& basis) {
  const int k = basis.size();
  const std::vector<double> xi = greville_abscissae(basis);
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(k - 2, k);
  for (int i = 0; i < k - 2; ++i) {
    const double h0 = xi[static_cast<std::size_t>(i + 1)] - xi[static_cast<std::size_t>(i)];
    const double h1 = xi[static_cast<std::size_t>(i + 2)] - xi[static_cast<std::size_t>(i + 1)];
    if (!(h0 > 0.0) || !(h1 > 0.0)) throw NumericError("degenerate knot spacing");
    d(i, i) = 1.0 / h0;
    d(i, i + 1) = -(1.0 / h0 + 1.0 / h1);
    d(i, i + 2) = 1.0 / h1;
  }
  return d.transpose() * d;
}

struct PenalizedSolve {
  Eigen::VectorXd coef;
  double sse = 0.0;
  double tr_h = 0.0;
};

PenalizedSolve solve_penalized(const Eigen::MatrixXd& b, const Eigen::MatrixXd& btb,
                               const Eigen::VectorXd& bty, const Eigen::VectorXd& y,
                               const Eigen::MatrixXd& penalty) {
  const Eigen::Index k = btb.rows();
  // Tiny ridge keeps the system positive definite when the basis is rank
  // deficient on the data at hand (e.g. interpolation regimes).
  const double ridge = 1e-12 * (btb.trace() / static_cast<double>(k) + 1.0);
  Eigen::MatrixXd a = btb + penalty + ridge * Eigen::MatrixXd::Identity(k, k);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw NumericError("penalized solve failed");
  PenalizedSolve out;
  out.coef = ldlt.solve(bty);
  out.tr_h = ldlt.solve(btb).trace();
  out.sse = (y - b * out.coef).squaredNorm();
  return out;
}

std::vector<double> default_smooth_grid() {
  std::vector<double> grid;
  for (double e = -6.0; e <= 8.0 + 1e-9; e += 0.25) grid.push_back(std::pow(10.0, e));
  return grid;
}

std::vector<double> default_screen_grid() {
  return {1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1e3, 1e4};
}

}  // namespace

PsplineFitResult fit_pspline(const BsplineBasis& basis, std::span<const double> x,
                             std::span<const double> y, double lambda) {
  if (x.size() != y.size()) throw DataError("fit_pspline: length mismatch");
  if (x.empty()) throw DataError("fit_pspline: empty data");
  const Eigen::MatrixXd b = design_matrix(basis, x);
  const Eigen::MatrixXd btb = b.transpose() * b;
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::VectorXd bty = b.transpose() * yv;
  const Eigen::MatrixXd penalty = lambda * second_difference_penalty(basis);
  const PenalizedSolve s = solve_penalized(b, btb, bty, yv, penalty);

  PsplineFitResult out;
  out.coefficients.assign(s.coef.data(), s.coef.data() + s.coef.size());
  out.sse = s.sse;
  out.tr_h = s.tr_h;
  const double n = static_cast<double>(x.size());
  const double denom = n - s.tr_h;
  out.gcv = denom > 0.5 ? n * s.sse / (denom * denom) : std::numeric_limits<double>::infinity();
  return out;
}

double pspline_eval(const BsplineBasis& basis, std::span<const double> coefficients, double x) {
  const std::vector<double> row = basis.row(x);
  double v = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) v += row[i] * coefficients[i];
  return v;
}

SmoothFit fit_smooth_single(std::span<const double> feature, std::span<const double> rating,
                            std::span<const std::string> user, const SmoothOptions& options) {
  if (feature.size() != rating.size() || feature.size() != user.size()) {
    throw DataError("fit_smooth_single: column lengths differ");
  }
  if (feature.size() < 20) throw DataError("fit_smooth_single needs at least 20 observations");
  const std::size_t distinct = distinct_count({feature.begin(), feature.end()});
  if (distinct < 4) throw DataError("fit_smooth_single needs at least 4 distinct values");

  SmoothFit fit;
  int interior = options.interior_knots;
  if (distinct < static_cast<std::size_t>(interior) + 2) {
    interior = static_cast<int>(distinct) - 2;
    fit.warnings.push_back("interior knots reduced to " + std::to_string(interior) +
                           " (only " + std::to_string(distinct) + " distinct values)");
  }

  const std::vector<double> centered = center_by_user(rating, user);
  const BsplineBasis basis = BsplineBasis::from_quantiles(feature, interior);
  const int k = basis.size();

  const Eigen::MatrixXd b = design_matrix(basis, feature);
  const Eigen::MatrixXd btb = b.transpose() * b;
  const Eigen::VectorXd yv =
      Eigen::Map<const Eigen::VectorXd>(centered.data(), static_cast<Eigen::Index>(centered.size()));
  const Eigen::VectorXd bty = b.transpose() * yv;
  const Eigen::MatrixXd base_penalty = second_difference_penalty(basis);

  const std::vector<double> grid =
      options.lambda_grid.empty() ? default_smooth_grid() : options.lambda_grid;
  const double n = static_cast<double>(feature.size());

  // Ascending scan; ties resolve to the larger lambda (the smoother fit).
  // Effective dof are charged at gcv_gamma per fitted dof in the denominator.
  double best_gcv = std::numeric_limits<double>::infinity();
  double best_lambda = grid.front();
  PenalizedSolve best_solve;
  for (double lambda : grid) {
    const PenalizedSolve s = solve_penalized(b, btb, bty, yv, lambda * base_penalty);
    const double denom = n - options.gcv_gamma * s.tr_h;
    const double gcv =
        denom > 0.5 ? n * s.sse / (denom * denom) : std::numeric_limits<double>::infinity();
    if (gcv <= best_gcv + 1e-12 * (1.0 + std::abs(best_gcv))) {
      best_gcv = gcv;
      best_lambda = lambda;
      best_solve = s;
    }
  }

  fit.knots = basis.knots;
  fit.coefficients.assign(best_solve.coef.data(), best_solve.coef.data() + best_solve.coef.size());
  fit.lambda = best_lambda;
  fit.edf = std::clamp(best_solve.tr_h - 1.0, 1.0, static_cast<double>(k));

  // Approximate F-test against the straight line on the same centered data.
  double sse_lin;
  {
    const double mx = mean_of(feature);
    const double my = mean_of(centered);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < feature.size(); ++i) {
      sxy += (feature[i] - mx) * (centered[i] - my);
      sxx += (feature[i] - mx) * (feature[i] - mx);
    }
    const double slope = sxy / sxx;
    sse_lin = 0.0;
    for (std::size_t i = 0; i < feature.size(); ++i) {
      const double r = centered[i] - (my + slope * (feature[i] - mx));
      sse_lin += r * r;
    }
  }
  // df1 is floored at one: with fractional dof barely above the linear fit,
  // the raw ratio explodes off tiny selection-induced SSE drops and the test
  // runs far above its nominal level.
  const double df1 = std::max(best_solve.tr_h - 2.0, 1.0);
  const double df2 = n - best_solve.tr_h;
  if (best_solve.tr_h - 2.0 < 1e-6 || df2 <= 0.0 || sse_lin <= best_solve.sse) {
    fit.p_nonlinear = 1.0;
  } else if (best_solve.sse <= 1e-300) {
    fit.p_nonlinear = sse_lin > 1e-12 ? 0.0 : 1.0;
  } else {
    const double f = ((sse_lin - best_solve.sse) / df1) / (best_solve.sse / df2);
    fit.p_nonlinear = f_survival(f, df1, df2);
  }
  return fit;
}

// ============================================================================
// Correlation pruning
// ============================================================================

PruneResult prune_pairs(const FeatureTable& table) {
  PruneResult result;
  const std::size_t d = table.columns.size();
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i + 1; j < d; ++j) {
      std::vector<double> xi, xj;
      for (const TableRow& row : table.rows) {
        if (row.values[i] && row.values[j]) {
          xi.push_back(*row.values[i]);
          xj.push_back(*row.values[j]);
        }
      }
      const std::string pair_name = table.columns[i] + ", " + table.columns[j];
      if (xi.size() < 3) {
        result.warnings.push_back("pair (" + pair_name + ") dropped: only " +
                                  std::to_string(xi.size()) + " complete rows");
        continue;
      }
      const double r = pearson(xi, xj);
      if (std::isnan(r)) {
        result.warnings.push_back("pair (" + pair_name +
                                  ") dropped: constant column, correlation undefined");
        continue;
      }
      if (std::abs(r) > 0.7) continue;  // strictly "exceeds"; r == 0.7 stays
      result.retained.push_back({table.columns[i], table.columns[j], r});
    }
  }
  return result;
}

// ============================================================================
// Tensor-product interaction screening
// ============================================================================

namespace {

struct TensorFit {
  Eigen::VectorXd coef;  // Ka * Kb, a-major
  double gcv = std::numeric_limits<double>::infinity();
  double lambda_a = 0.0, lambda_b = 0.0;
};

Eigen::MatrixXd tensor_design(const Eigen::MatrixXd& ba, const Eigen::MatrixXd& bb) {
  const Eigen::Index n = ba.rows();
  const Eigen::Index ka = ba.cols(), kb = bb.cols();
  Eigen::MatrixXd b(n, ka * kb);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index p = 0; p < ka; ++p) {
      for (Eigen::Index q = 0; q < kb; ++q) b(i, p * kb + q) = ba(i, p) * bb(i, q);
    }
  }
  return b;
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

}  // namespace

ScreenResult screen_interactions(const FeatureTable& table,
                                 std::span<const FeaturePairCorrelation> pairs,
                                 const ScreenOptions& options) {
  if (table.rows.size() < options.min_rows) {
    throw DataError("screen_interactions needs at least " + std::to_string(options.min_rows) +
                    " observations");
  }
  if (options.grid_size < 2) throw DataError("grid_size must be at least 2");
  const std::vector<double> grid =
      options.lambda_grid.empty() ? default_screen_grid() : options.lambda_grid;

  struct PairOutcome {
    std::optional<InteractionCandidate> candidate;
    std::string warning;
  };
  std::vector<PairOutcome> outcomes(pairs.size());
  std::vector<std::string> failures(pairs.size());

#pragma omp parallel for schedule(dynamic)
  for (std::int64_t pi = 0; pi < static_cast<std::int64_t>(pairs.size()); ++pi) {
    try {
      const FeaturePairCorrelation& pair = pairs[static_cast<std::size_t>(pi)];
      PairOutcome& outcome = outcomes[static_cast<std::size_t>(pi)];
      const auto ia = table.column_index(pair.feature_a);
      const auto ib = table.column_index(pair.feature_b);
      if (!ia || !ib) throw DataError("unknown feature in pair (" + pair.feature_a + ", " +
                                      pair.feature_b + ")");
      std::vector<double> xa, xb, y;
      std::vector<std::string> users;
      for (const TableRow& row : table.rows) {
        if (row.values[*ia] && row.values[*ib] && row.satisfaction) {
          xa.push_back(*row.values[*ia]);
          xb.push_back(*row.values[*ib]);
          y.push_back(*row.satisfaction);
          users.push_back(row.user_id);
        }
      }
      if (xa.size() < options.min_rows) {
        outcome.warning = "pair (" + pair.feature_a + ", " + pair.feature_b + ") skipped: only " +
                          std::to_string(xa.size()) + " complete rows";
        continue;
      }
      const std::size_t da = distinct_count(xa);
      const std::size_t db = distinct_count(xb);
      if (da < static_cast<std::size_t>(options.marginal_basis) ||
          db < static_cast<std::size_t>(options.marginal_basis)) {
        outcome.warning = "pair (" + pair.feature_a + ", " + pair.feature_b +
                          ") skipped: a margin is near-constant";
        continue;
      }

      const std::vector<double> centered = center_by_user(y, users);
      const int interior = options.marginal_basis - 4;
      const BsplineBasis basis_a = BsplineBasis::from_quantiles(xa, interior);
      const BsplineBasis basis_b = BsplineBasis::from_quantiles(xb, interior);
      const Eigen::MatrixXd ba = design_matrix(basis_a, xa);
      const Eigen::MatrixXd bb = design_matrix(basis_b, xb);
      const Eigen::MatrixXd b = tensor_design(ba, bb);
      const Eigen::Index ka = ba.cols(), kb = bb.cols();

      const Eigen::MatrixXd btb = b.transpose() * b;
      const Eigen::VectorXd yv =
          Eigen::Map<const Eigen::VectorXd>(centered.data(), static_cast<Eigen::Index>(centered.size()));
      const Eigen::VectorXd bty = b.transpose() * yv;
      const Eigen::MatrixXd pen_a =
          kron(second_difference_penalty(basis_a), Eigen::MatrixXd::Identity(kb, kb));
      const Eigen::MatrixXd pen_b =
          kron(Eigen::MatrixXd::Identity(ka, ka), second_difference_penalty(basis_b));
      const double n = static_cast<double>(xa.size());

      TensorFit best;
      for (double la : grid) {
        for (double lb : grid) {
          const PenalizedSolve s = solve_penalized(b, btb, bty, yv, la * pen_a + lb * pen_b);
          const double denom = n - s.tr_h;
          const double gcv =
              denom > 0.5 ? n * s.sse / (denom * denom) : std::numeric_limits<double>::infinity();
          if (gcv <= best.gcv + 1e-12 * (1.0 + std::abs(best.gcv))) {
            best.gcv = gcv;
            best.lambda_a = la;
            best.lambda_b = lb;
            best.coef = s.coef;
          }
        }
      }

      // Fitted smooth on a lattice spanning the central mass of each margin.
      InteractionCandidate cand;
      cand.feature_a = pair.feature_a;
      cand.feature_b = pair.feature_b;
      cand.pearson_r = pair.r;
      std::vector<double> sa(xa), sb(xb);
      std::sort(sa.begin(), sa.end());
      std::sort(sb.begin(), sb.end());
      const double a_lo = quantile_sorted(sa, 0.05), a_hi = quantile_sorted(sa, 0.95);
      const double b_lo = quantile_sorted(sb, 0.05), b_hi = quantile_sorted(sb, 0.95);
      for (int g = 0; g < options.grid_size; ++g) {
        const double w = static_cast<double>(g) / static_cast<double>(options.grid_size - 1);
        cand.grid_a.push_back(a_lo + w * (a_hi - a_lo));
        cand.grid_b.push_back(b_lo + w * (b_hi - b_lo));
      }
      double smin = std::numeric_limits<double>::infinity();
      double smax = -std::numeric_limits<double>::infinity();
      for (double av : cand.grid_a) {
        const std::vector<double> ra = basis_a.row(av);
        for (double bv : cand.grid_b) {
          const std::vector<double> rb = basis_b.row(bv);
          double f = 0.0;
          for (Eigen::Index p = 0; p < ka; ++p) {
            for (Eigen::Index q = 0; q < kb; ++q) {
              f += best.coef(p * kb + q) * ra[static_cast<std::size_t>(p)] *
                   rb[static_cast<std::size_t>(q)];
            }
          }
          cand.surface.push_back(f);
          smin = std::min(smin, f);
          smax = std::max(smax, f);
        }
      }
      cand.effect_size = smax - smin;
      outcome.candidate = std::move(cand);
    } catch (const std::exception& e) {
      failures[static_cast<std::size_t>(pi)] = e.what();
    }
  }
  for (const std::string& e : failures) {
    if (!e.empty()) throw NumericError(e);
  }

  ScreenResult result;
  for (PairOutcome& outcome : outcomes) {
    if (outcome.candidate) result.candidates.push_back(std::move(*outcome.candidate));
    if (!outcome.warning.empty()) result.warnings.push_back(outcome.warning);
  }
  std::stable_sort(result.candidates.begin(), result.candidates.end(),
                   [](const InteractionCandidate& a, const InteractionCandidate& b) {
                     if (a.effect_size != b.effect_size) return a.effect_size > b.effect_size;
                     if (a.feature_a != b.feature_a) return a.feature_a < b.feature_a;
                     return a.feature_b < b.feature_b;
                   });
  return result;
}

// ============================================================================
// Surface emission
// ============================================================================

std::string surface_to_text(const InteractionCandidate& candidate) {
  std::ostringstream out;
  for (std::size_t i = 0; i < candidate.grid_a.size(); ++i) {
    for (std::size_t j = 0; j < candidate.grid_b.size(); ++j) {
      out << format_double(candidate.grid_a[i]) << ' ' << format_double(candidate.grid_b[j])
          << ' ' << format_double(candidate.surface[i * candidate.grid_b.size() + j]) << '\n';
    }
  }
  return out.str();
}

void emit_surface(const InteractionCandidate& candidate, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out << surface_to_text(candidate);
  if (!out) throw DataError("failed writing '" + path + "'");
}

// ============================================================================
// Whole-table analysis
// ============================================================================

std::vector<FeatureEffect> analyze_features(const FeatureTable& table,
                                            const SmoothOptions& options) {
  std::vector<FeatureEffect> effects(table.columns.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t j = 0; j < static_cast<std::int64_t>(table.columns.size()); ++j) {
    FeatureEffect& effect = effects[static_cast<std::size_t>(j)];
    effect.feature = table.columns[static_cast<std::size_t>(j)];
    std::vector<double> x, y;
    std::vector<std::string> users;
    for (const TableRow& row : table.rows) {
      if (row.values[static_cast<std::size_t>(j)] && row.satisfaction) {
        x.push_back(*row.values[static_cast<std::size_t>(j)]);
        y.push_back(*row.satisfaction);
        users.push_back(row.user_id);
      }
    }
    try {
      effect.lme = fit_lme_single(x, y, users);
    } catch (const Error& e) {
      effect.note = e.what();
      continue;
    }
    try {
      effect.smooth = fit_smooth_single(x, y, users, options);
    } catch (const Error& e) {
      effect.note = e.what();
    }
  }
  return effects;
}

std::string effects_to_csv(std::span<const FeatureEffect> effects) {
  std::ostringstream out;
  out << "feature,beta,se,p_linear,p_nonlinear,significance\n";
  for (const FeatureEffect& e : effects) {
    out << e.feature << ',';
    if (e.lme) {
      out << format_double(e.lme->beta) << ',' << format_double(e.lme->se) << ','
          << format_double(e.lme->p) << ',';
    } else {
      out << ",,,";
    }
    if (e.smooth) out << format_double(e.smooth->p_nonlinear);
    out << ',';
    if (e.lme) {
      const double p = e.lme->p;
      out << (p < 0.001 ? "***" : p < 0.01 ? "**" : p < 0.05 ? "*" : "");
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace trace
