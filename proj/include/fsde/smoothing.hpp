#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fsde/matrices.hpp"
#include "fsde/parallel.hpp"
#include "fsde/stats.hpp"

namespace fsde {

/// A scalar test function with an exact gradient.
struct TestFunction {
  std::function<double(const Eigen::VectorXd&)> value;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
  bool bounded = true;
  bool smooth = true;
  double sup_norm = 1.0;
};

/// f(y) = 1 / (1 + exp(-lambda u.(y - center))), ||f||_inf = 1. Steep
/// members stand in for bounded measurable indicators.
inline TestFunction sigmoid_function(const Eigen::VectorXd& u, const Eigen::VectorXd& center,
                                     double lambda) {
  TestFunction f;
  f.value = [u, center, lambda](const Eigen::VectorXd& y) {
    return 1.0 / (1.0 + std::exp(-lambda * u.dot(y - center)));
  };
  f.gradient = [u, center, lambda](const Eigen::VectorXd& y) {
    double s = 1.0 / (1.0 + std::exp(-lambda * u.dot(y - center)));
    return Eigen::VectorXd(lambda * s * (1.0 - s) * u);
  };
  f.bounded = true;
  f.smooth = true;
  f.sup_norm = 1.0;
  return f;
}

inline TestFunction constant_function(double c) {
  TestFunction f;
  f.value = [c](const Eigen::VectorXd&) { return c; };
  f.gradient = [](const Eigen::VectorXd& y) { return Eigen::VectorXd(Eigen::VectorXd::Zero(y.size())); };
  f.sup_norm = std::abs(c);
  return f;
}

inline TestFunction linear_function(const Eigen::VectorXd& u) {
  TestFunction f;
  f.value = [u](const Eigen::VectorXd& y) { return u.dot(y); };
  f.gradient = [u](const Eigen::VectorXd&) { return u; };
  f.bounded = false;
  f.sup_norm = std::numeric_limits<double>::infinity();
  return f;
}

struct SmoothingConfig {
  int grid_size = 1 << 10;
  int substeps = 4;
  int threads = 0;
  FbmMethod method = FbmMethod::Circulant;
  double max_exclusion_rate = 1e-3;
};

struct PtEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::size_t n_used = 0;
  std::size_t n_excluded = 0;
};

namespace detail {

/// Per-path values of f(X^{eps,x}_1) at several initial points, all stencil
/// points sharing one driving path (common random numbers). A path that
/// fails at any stencil point is excluded as a whole.
inline std::vector<std::vector<double>> crn_values(const TestFunction& f,
                                                   const VectorFieldSystem& sys,
                                                   const std::vector<Eigen::VectorXd>& points,
                                                   double epsilon, double H, std::size_t n_paths,
                                                   std::uint64_t seed, const SmoothingConfig& cfg) {
  FbmSampler sampler(H, cfg.grid_size, sys.d, cfg.method);
  std::vector<std::vector<double>> vals(points.size(),
                                        std::vector<double>(n_paths, std::numeric_limits<double>::quiet_NaN()));
  parallel_for(n_paths, cfg.threads, [&](std::size_t i) {
    FbmPath path = sampler.sample(seed, i);
    std::vector<double> row(points.size());
    try {
      for (std::size_t p = 0; p < points.size(); ++p) {
        FlowBundle b = integrate(sys, path, points[p], epsilon, cfg.substeps, FlowMode::StateOnly);
        row[p] = f.value(b.X.row(b.cells).transpose());
      }
    } catch (const IntegrationBlowup&) {
      return;  // leaves NaN markers
    }
    for (std::size_t p = 0; p < points.size(); ++p) vals[p][i] = row[p];
  });
  return vals;
}

}  // namespace detail

/// Monte Carlo P_t f(x) = E f(X^x_t), realized through the rescaled system
/// at eps = t integrated over [0,1] (equality in law).
inline PtEstimate estimate_pt(const TestFunction& f, const VectorFieldSystem& sys,
                              const Eigen::VectorXd& x, double t, double H, std::size_t n_paths,
                              std::uint64_t seed, const SmoothingConfig& cfg = {}) {
  if (!(t > 0.0 && t <= 1.0)) throw std::domain_error("estimate_pt: t must be in (0,1]");
  auto vals = detail::crn_values(f, sys, {x}, t, H, n_paths, seed, cfg);
  std::vector<double> good;
  good.reserve(n_paths);
  for (double v : vals[0])
    if (!std::isnan(v)) good.push_back(v);
  MeanStderr ms = mean_stderr(good);
  return {ms.mean, ms.stderr_, good.size(), n_paths - good.size()};
}

inline double default_fd_step(double t, double H) { return 1e-2 * std::pow(t, H); }

/// Nested central finite differences of x -> P_t f(x) along bracket
/// directions, with common random numbers across the stencil. k = 1 uses the
/// two-point central stencil, k = 2 the four-point cross stencil.
inline PtEstimate directional_derivative(const TestFunction& f, const VectorFieldSystem& sys,
                                         const Eigen::VectorXd& x, double t, double H,
                                         const std::vector<Word>& words, double h,
                                         std::size_t n_paths, std::uint64_t seed,
                                         const SmoothingConfig& cfg = {}) {
  if (words.empty() || words.size() > 2)
    throw std::invalid_argument("directional_derivative: k must be 1 or 2");
  if (h <= 0.0) h = default_fd_step(t, H);

  std::vector<Eigen::VectorXd> dirs;
  std::vector<double> norms;
  for (const Word& w : words) {
    Eigen::VectorXd v = sys.bracket(w).eval(x);
    double nv = v.norm();
    if (nv == 0.0) return {0.0, 0.0, n_paths, 0};  // derivative along the zero direction
    dirs.push_back(v / nv);
    norms.push_back(nv);
  }

  std::vector<Eigen::VectorXd> points;
  if (words.size() == 1) {
    points = {x + h * dirs[0], x - h * dirs[0]};
  } else {
    points = {x + h * dirs[0] + h * dirs[1], x + h * dirs[0] - h * dirs[1],
              x - h * dirs[0] + h * dirs[1], x - h * dirs[0] - h * dirs[1]};
  }
  auto vals = detail::crn_values(f, sys, points, t, H, n_paths, seed, cfg);

  std::vector<double> diffs;
  diffs.reserve(n_paths);
  std::size_t excluded = 0;
  for (std::size_t i = 0; i < n_paths; ++i) {
    if (std::isnan(vals[0][i])) {
      ++excluded;
      continue;
    }
    double d;
    if (words.size() == 1)
      d = norms[0] * (vals[0][i] - vals[1][i]) / (2.0 * h);
    else
      d = norms[0] * norms[1] * (vals[0][i] - vals[1][i] - vals[2][i] + vals[3][i]) /
          (4.0 * h * h);
    diffs.push_back(d);
  }
  if (static_cast<double>(excluded) > cfg.max_exclusion_rate * static_cast<double>(n_paths))
    throw std::runtime_error("directional_derivative: stencil exclusion rate above threshold");
  MeanStderr ms = mean_stderr(diffs);
  return {ms.mean, ms.stderr_, diffs.size(), excluded};
}

struct ExponentFit {
  std::vector<double> t_grid;
  std::vector<double> estimates;
  std::vector<double> stderrs;
  std::vector<bool> usable;          // estimate exceeds 3x its standard error
  std::vector<double> normalized;    // t^{H sum|I_j|} |estimate| / ||f||_inf
  int sum_word_length = 0;
  LineFit fit;                       // log|estimate| vs log t over usable cells
  double sup_normalized = 0.0;       // the bounded-constant diagnostic
  bool degenerate = false;           // fewer than 3 usable cells
};

/// Log-log slope of |directional derivative| vs t. Small-t estimates come
/// from the rescaled system at eps = t on a fixed [0,1] grid, so resolution
/// is constant across the t-grid; the same seed reuses one path ensemble for
/// every (t, stencil point). Pass h = 0 for the default step t^H * 1e-2.
inline ExponentFit fit_exponent(const TestFunction& f, const VectorFieldSystem& sys,
                                const Eigen::VectorXd& x, double H,
                                const std::vector<Word>& words, const std::vector<double>& t_grid,
                                double h, std::size_t n_paths, std::uint64_t seed,
                                const SmoothingConfig& cfg = {}) {
  if (t_grid.size() < 5) throw std::invalid_argument("fit_exponent: need at least 5 t-cells");
  ExponentFit out;
  out.t_grid = t_grid;
  for (const Word& w : words) out.sum_word_length += static_cast<int>(w.length());
  std::vector<double> lx, ly;
  for (double t : t_grid) {
    double step = h > 0.0 ? h : default_fd_step(t, H);
    PtEstimate est = directional_derivative(f, sys, x, t, H, words, step, n_paths, seed, cfg);
    out.estimates.push_back(est.estimate);
    out.stderrs.push_back(est.stderr_);
    bool use = std::abs(est.estimate) > 3.0 * est.stderr_;
    out.usable.push_back(use);
    double norm_val = std::isfinite(f.sup_norm) && f.sup_norm > 0.0
                          ? std::pow(t, H * out.sum_word_length) * std::abs(est.estimate) / f.sup_norm
                          : 0.0;
    out.normalized.push_back(norm_val);
    out.sup_normalized = std::max(out.sup_normalized, norm_val);
    if (use && est.estimate != 0.0) {
      lx.push_back(std::log(t));
      ly.push_back(std::log(std::abs(est.estimate)));
    }
  }
  if (lx.size() < 3) {
    out.degenerate = true;
    return out;
  }
  out.fit = fit_line(lx, ly);
  return out;
}

struct IbpReport {
  // one residual per path: the max over I of the relative mismatch between
  // the M^{-1} D^{(J)} sum and the left side
  std::vector<double> residual_direct;     // lhs = grad f . J_{0->1} V^eps_{[I]}(x0)
  std::vector<double> residual_transport;  // lhs through the transport identity at t = 1
  std::size_t n_excluded = 0;              // integration failures
  std::size_t n_below_floor = 0;           // lambda_min(M) under the floor
  double median_direct = 0.0;
  double median_transport = 0.0;
};

struct IbpConfig {
  int grid_size = 1 << 12;
  int substeps = 4;
  int threads = 0;
  FbmMethod method = FbmMethod::Circulant;
  double floor_factor = 1e-10;
};

/// Pathwise check of the integration-by-parts identity
///   V^eps_{[I]} f(X^{eps,x}_1) = sum_J (M^eps)^{-1}_{I,J} D^{(J)} f(X^{eps,x}_1):
/// builds the Malliavin kernel of f(X_1) by chain rule, pairs it with the
/// beta rows in H, solves the M system, and compares against the left side
/// evaluated both directly and through the transport identity.
inline IbpReport ibp_identity_check(const TestFunction& f, const VectorFieldSystem& sys,
                                    const Eigen::VectorXd& x, double epsilon, double H,
                                    std::size_t n_paths, std::uint64_t seed,
                                    const IbpConfig& cfg = {}) {
  FbmSampler sampler(H, cfg.grid_size, sys.d, cfg.method);
  HWeights weights(H, cfg.grid_size);
  const auto A = static_cast<Eigen::Index>(sys.words.size());

  std::vector<double> rdir(n_paths, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> rtrans(n_paths, std::numeric_limits<double>::quiet_NaN());
  std::vector<int> floor_flag(n_paths, 0);

  parallel_for(n_paths, cfg.threads, [&](std::size_t i) {
    FlowBundle b;
    try {
      FbmPath path = sampler.sample(seed, i);
      b = integrate(sys, path, x, epsilon, cfg.substeps, FlowMode::Full);
    } catch (const IntegrationBlowup&) {
      return;
    }
    Eigen::MatrixXd M = malliavin_matrix(b, sys.words, weights);
    double lmin = min_eigenvalue(M);
    if (lmin < cfg.floor_factor * M.trace()) {
      floor_flag[i] = 1;
      return;
    }
    MalliavinKernel ker = malliavin_kernel(b, sys);
    Eigen::VectorXd xend = b.X.row(b.cells);
    Eigen::VectorXd grad = f.gradient(xend);

    StepFunction g = StepFunction::zero(b.cells, sys.d);
    for (int j = 0; j < sys.d; ++j) g.values.col(j) = ker.rows[j] * grad;

    Eigen::VectorXd Dv(A);
    for (Eigen::Index j = 0; j < A; ++j) {
      StepFunction bj = beta_step_function(b, sys.words, sys.words.word(static_cast<std::size_t>(j)));
      Dv[j] = weights.inner(g, bj);
    }
    Eigen::VectorXd v = M.ldlt().solve(Dv);

    Eigen::MatrixXd Jend = b.jacobian(b.cells);
    Eigen::MatrixXd betaEnd = b.beta(b.cells);
    Eigen::MatrixXd frame(sys.n, A);
    for (Eigen::Index j = 0; j < A; ++j) {
      const Word& w = sys.words.word(static_cast<std::size_t>(j));
      frame.col(j) =
          std::pow(epsilon, static_cast<double>(w.length()) * H) * sys.bracket(w).eval(x);
    }
    double worst_dir = 0.0, worst_trans = 0.0;
    for (Eigen::Index ii = 0; ii < A; ++ii) {
      double lhs_dir = grad.dot(Jend * frame.col(ii));
      Eigen::VectorXd transported = frame * betaEnd.row(ii).transpose();
      double lhs_trans = grad.dot(Jend * transported);
      worst_dir = std::max(worst_dir, std::abs(v[ii] - lhs_dir) / (1.0 + std::abs(lhs_dir)));
      worst_trans =
          std::max(worst_trans, std::abs(v[ii] - lhs_trans) / (1.0 + std::abs(lhs_trans)));
    }
    rdir[i] = worst_dir;
    rtrans[i] = worst_trans;
  });

  IbpReport rep;
  for (std::size_t i = 0; i < n_paths; ++i) {
    if (floor_flag[i]) {
      ++rep.n_below_floor;
      continue;
    }
    if (std::isnan(rdir[i])) {
      ++rep.n_excluded;
      continue;
    }
    rep.residual_direct.push_back(rdir[i]);
    rep.residual_transport.push_back(rtrans[i]);
  }
  if (!rep.residual_direct.empty()) {
    rep.median_direct = median(rep.residual_direct);
    rep.median_transport = median(rep.residual_transport);
  }
  return rep;
}

}  // namespace fsde
