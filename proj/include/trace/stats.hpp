#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trace/table.hpp"

namespace trace {

// ============================================================================
// Per-feature linear mixed-effects model (random user intercept, REML)
// ============================================================================

struct LmeFit {
  double beta0 = 0.0;     // intercept
  double beta = 0.0;      // feature coefficient
  double se = 0.0;        // standard error of beta
  double z = 0.0;         // Wald z
  double p = 1.0;         // two-sided normal p (approximate)
  double sigma_u2 = 0.0;  // user-intercept variance
  double sigma_e2 = 0.0;  // residual variance
  double lambda = 0.0;    // sigma_u2 / sigma_e2 at the REML optimum
  std::size_t n_obs = 0;
  std::size_t n_users = 0;
};

// rating = b0 + b*feature + u_user + e, random intercepts per user. The
// variance ratio is profiled by a 1-D REML search (golden section on
// log lambda over [1e-6, 1e6], lambda = 0 checked explicitly); fixed effects
// come from GLS at the optimum.
LmeFit fit_lme_single(std::span<const double> feature, std::span<const double> rating,
                      std::span<const std::string> user);

// REML criterion (-2 restricted log-likelihood up to a constant) at a given
// variance ratio; exposed so tests can verify the profile optimum.
double lme_reml_criterion(std::span<const double> feature, std::span<const double> rating,
                          std::span<const std::string> user, double lambda);

// ============================================================================
// Penalized cubic B-spline smooth (nonlinearity test)
// ============================================================================

// Clamped cubic B-spline basis with interior knots at quantiles.
struct BsplineBasis {
  std::vector<double> knots;  // full clamped knot vector, size K + 4

  int size() const { return static_cast<int>(knots.size()) - 4; }
  // Basis values at x (x clamped to the boundary knots).
  std::vector<double> row(double x) const;

  static BsplineBasis from_quantiles(std::span<const double> x, int interior_knots);
};

struct PsplineFitResult {
  std::vector<double> coefficients;
  double sse = 0.0;
  double tr_h = 0.0;  // trace of the hat matrix
  double gcv = 0.0;
};

// Penalized least squares with a second-order difference penalty at a fixed
// smoothing parameter.
PsplineFitResult fit_pspline(const BsplineBasis& basis, std::span<const double> x,
                             std::span<const double> y, double lambda);

double pspline_eval(const BsplineBasis& basis, std::span<const double> coefficients, double x);

struct SmoothOptions {
  int interior_knots = 10;
  std::vector<double> lambda_grid;  // empty = default log grid 1e-6..1e8
  // GCV charges gcv_gamma effective dof per fitted dof, guarding against
  // undersmoothing; together with the floored numerator dof it keeps the
  // nonlinearity F-test near its nominal level.
  double gcv_gamma = 1.7;
};

struct SmoothFit {
  std::vector<double> knots;
  std::vector<double> coefficients;
  double lambda = 0.0;
  // Effective degrees of freedom of the smooth with the intercept excluded:
  // a fully linear fit reports 1.
  double edf = 1.0;
  double p_nonlinear = 1.0;  // approximate F-test of smooth vs linear
  std::vector<std::string> warnings;
};

// Ratings are centered per user first (random-intercept absorption), then
// smoothed against the feature; lambda by GCV, ties resolved to the smoother
// fit. This is a documented approximation of a full mixed-model smooth.
SmoothFit fit_smooth_single(std::span<const double> feature, std::span<const double> rating,
                            std::span<const std::string> user, const SmoothOptions& options = {});

// ============================================================================
// Interaction screening
// ============================================================================

struct FeaturePairCorrelation {
  std::string feature_a;
  std::string feature_b;
  double r = 0.0;
};

struct PruneResult {
  std::vector<FeaturePairCorrelation> retained;  // |r| <= 0.7, column order
  std::vector<std::string> warnings;
};

// All unordered feature-column pairs whose Pearson correlation (complete rows
// only) does not exceed 0.7 in absolute value; exactly 0.7 is retained.
// Constant columns and pairs with fewer than 3 complete rows are dropped with
// a warning.
PruneResult prune_pairs(const FeatureTable& table);

struct InteractionCandidate {
  std::string feature_a;
  std::string feature_b;
  double pearson_r = 0.0;
  double effect_size = 0.0;       // max - min of the fitted surface
  std::vector<double> grid_a;     // lattice over [5th, 95th] percentile
  std::vector<double> grid_b;
  std::vector<double> surface;    // row-major grid_a x grid_b
};

struct ScreenOptions {
  int grid_size = 20;
  int marginal_basis = 8;            // basis functions per margin
  std::vector<double> lambda_grid;   // empty = coarse default 1e-3..1e4
  std::size_t min_rows = 50;
};

struct ScreenResult {
  std::vector<InteractionCandidate> candidates;  // descending effect size
  std::vector<std::string> warnings;
};

// Per pair: user-centered ratings regressed on a tensor-product cubic
// B-spline surface with per-margin difference penalties (GCV per margin on a
// coarse grid); effect size is the fitted surface's range over the lattice.
ScreenResult screen_interactions(const FeatureTable& table,
                                 std::span<const FeaturePairCorrelation> pairs,
                                 const ScreenOptions& options = {});

// Plain-text surface rows "x1 x2 value", lexicographic, byte-deterministic.
void emit_surface(const InteractionCandidate& candidate, const std::string& path);
std::string surface_to_text(const InteractionCandidate& candidate);

// ============================================================================
// Whole-table per-feature analysis (drives the stats command)
// ============================================================================

struct FeatureEffect {
  std::string feature;
  std::optional<LmeFit> lme;
  std::optional<SmoothFit> smooth;
  std::string note;  // why a fit is absent (constant column, too few rows...)
};

std::vector<FeatureEffect> analyze_features(const FeatureTable& table,
                                            const SmoothOptions& options = {});

// CSV: feature, beta, se, p_linear, p_nonlinear, significance stars.
std::string effects_to_csv(std::span<const FeatureEffect> effects);

}  // namespace trace
