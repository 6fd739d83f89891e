#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "fsde/cm_space.hpp"
#include "fsde/fbm.hpp"
#include "fsde/flow.hpp"
#include "fsde/parallel.hpp"
#include "fsde/signature.hpp"
#include "fsde/stats.hpp"
#include "fsde/vfields.hpp"

namespace fsde {

/// The H-space element attached to frame word J: the d-vector step function
/// s -> (beta^{J,eps}_{(j)}(s))_{j=1..d}, i.e. the single-letter rows of
/// column J. Cell values are taken at the left grid endpoint.
inline StepFunction beta_step_function(const FlowBundle& b, const WordIndex& words, const Word& J) {
  const auto A = static_cast<Eigen::Index>(words.size());
  const auto jcol = static_cast<Eigen::Index>(words.index(J));
  int d = 0;
  while (d < static_cast<int>(words.size()) && words.word(d).length() == 1) ++d;
  StepFunction f = StepFunction::zero(b.cells, d);
  for (int k = 0; k < b.cells; ++k)
    for (int j = 0; j < d; ++j) f.values(k, j) = b.betaflat(k, j * A + jcol);
  return f;
}

/// M^eps_{I,J}(x) = <beta^{I,eps} 1_{[0,1]}, beta^{J,eps} 1_{[0,1]}>_H,
/// rows/columns in the words enumeration order.
inline Eigen::MatrixXd malliavin_matrix(const FlowBundle& b, const WordIndex& words,
                                        const HWeights& w) {
  if (b.mode != FlowMode::Full) throw std::invalid_argument("malliavin_matrix: need a full bundle");
  if (b.cells != w.grid_size()) throw std::invalid_argument("malliavin_matrix: grid mismatch");
  const auto A = static_cast<Eigen::Index>(words.size());
  std::vector<StepFunction> cols;
  cols.reserve(words.size());
  std::vector<Eigen::MatrixXd> applied(words.size());
  for (std::size_t j = 0; j < words.size(); ++j) {
    cols.push_back(beta_step_function(b, words, words.word(j)));
    const Eigen::MatrixXd& v = cols.back().values;
    applied[j].resize(v.rows(), v.cols());
    for (int c = 0; c < v.cols(); ++c) applied[j].col(c) = w.apply(v.col(c));
  }
  Eigen::MatrixXd M(A, A);
  for (Eigen::Index i = 0; i < A; ++i)
    for (Eigen::Index j = i; j < A; ++j) {
      double s = 0.0;
      for (int c = 0; c < cols[i].values.cols(); ++c)
        s += cols[static_cast<std::size_t>(i)].values.col(c).dot(
            applied[static_cast<std::size_t>(j)].col(c));
      M(i, j) = s;
      M(j, i) = s;
    }
  return M;
}

/// Smallest eigenvalue of a symmetric matrix (the infimum of the quadratic
/// form over the unit sphere).
inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("min_eigenvalue: not square");
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("min_eigenvalue: matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

/// Weighted variant: infimum of a'Ma over the ellipsoid a'Da = 1 with D a
/// positive diagonal (the T^{2|I|H+1} weighting), as a generalized
/// eigenvalue problem.
inline double min_eigenvalue_weighted(const Eigen::MatrixXd& m, const Eigen::VectorXd& diag) {
  if (diag.minCoeff() <= 0.0)
    throw std::invalid_argument("min_eigenvalue_weighted: weights must be positive");
  Eigen::VectorXd inv_sqrt = diag.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd scaled = inv_sqrt.asDiagonal() * m * inv_sqrt.asDiagonal();
  return min_eigenvalue(scaled);
}

/// G_{I,J} = int_0^1 B^I_t B^J_t dt by composite trapezoid quadrature, over
/// the columns of a grid-sampled value matrix.
inline Eigen::MatrixXd gram_l2(const Eigen::MatrixXd& values_at_times) {
  const int T = static_cast<int>(values_at_times.rows()) - 1;
  if (T < 1) throw std::invalid_argument("gram_l2: need at least one cell");
  Eigen::VectorXd wq = Eigen::VectorXd::Constant(T + 1, 1.0 / T);
  wq[0] *= 0.5;
  wq[T] *= 0.5;
  return values_at_times.transpose() * wq.asDiagonal() * values_at_times;
}

struct GramL2 {
  WordIndex words;
  Eigen::MatrixXd entries;
};

inline GramL2 gram_l2(const SignaturePath& sig) {
  return {sig.words, gram_l2(sig.values)};
}

struct InverseMomentRow {
  double epsilon = 0.0;
  double estimate = 0.0;
  double stderr_ = 0.0;
  std::size_t n_used = 0;
  std::size_t n_excluded = 0;   // failed integrations
  std::size_t n_below_floor = 0;  // lambda_min under the positivity floor
  double lambda_min_min = 0.0;  // smallest lambda_min seen across used paths
};

struct InverseMomentConfig {
  int grid_size = 1 << 10;
  int substeps = 4;
  int threads = 0;
  double floor_factor = 1e-10;
  FbmMethod method = FbmMethod::Circulant;
};

/// Monte Carlo E[ lambda_min(M^eps(x))^{-p} ] across a grid of epsilons,
/// with the same driving paths reused for every epsilon.
inline std::vector<InverseMomentRow> inverse_moment_estimate(
    const VectorFieldSystem& sys, const Eigen::VectorXd& x, double H,
    const std::vector<double>& epsilons, double p, std::size_t n_paths, std::uint64_t seed,
    const InverseMomentConfig& cfg = {}) {
  if (p < 0.0) throw std::invalid_argument("inverse_moment_estimate: p must be >= 0");
  FbmSampler sampler(H, cfg.grid_size, sys.d, cfg.method);
  HWeights weights(H, cfg.grid_size);
  std::vector<InverseMomentRow> out;
  for (double eps : epsilons) {
    std::vector<double> lam(n_paths, std::numeric_limits<double>::quiet_NaN());
    std::vector<double> tr(n_paths, 0.0);
    parallel_for(n_paths, cfg.threads, [&](std::size_t i) {
      try {
        FbmPath path = sampler.sample(seed, i);
        FlowBundle b = integrate(sys, path, x, eps, cfg.substeps, FlowMode::Full);
        Eigen::MatrixXd M = malliavin_matrix(b, sys.words, weights);
        lam[i] = min_eigenvalue(M);
        tr[i] = M.trace();
      } catch (const IntegrationBlowup&) {
        lam[i] = std::numeric_limits<double>::quiet_NaN();
      }
    });
    InverseMomentRow row;
    row.epsilon = eps;
    std::vector<double> vals;
    vals.reserve(n_paths);
    double lmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_paths; ++i) {
      if (std::isnan(lam[i])) {
        ++row.n_excluded;
        continue;
      }
      if (lam[i] < cfg.floor_factor * tr[i]) {
        ++row.n_below_floor;
        continue;
      }
      lmin = std::min(lmin, lam[i]);
      vals.push_back(std::pow(lam[i], -p));
    }
    MeanStderr ms = mean_stderr(vals);
    row.estimate = ms.mean;
    row.stderr_ = ms.stderr_;
    row.n_used = vals.size();
    row.lambda_min_min = vals.empty() ? 0.0 : lmin;
    out.push_back(row);
  }
  return out;
}

struct SmallBallRow {
  double epsilon = 0.0;
  std::size_t hits = 0;
  std::size_t n = 0;
  double p_hat = 0.0;
  WilsonInterval wilson;
};

struct SmallBallResult {
  std::vector<SmallBallRow> rows;
  LineFit fit;           // log p vs log eps, weighted, cells with >= 5 hits
  std::size_t n_usable = 0;
  bool degenerate = false;  // all probabilities 0 or 1 on the grid
};

struct SmallBallConfig {
  int grid_size = 1 << 12;
  int threads = 0;
  std::size_t min_hits = 5;
  FbmMethod method = FbmMethod::Circulant;
};

/// P(||sum_I a_I B^I||_inf < eps) across an epsilon grid, with Wilson score
/// intervals and a weighted log-log slope fit.
inline SmallBallResult small_ball_estimate(int d, int m, const std::map<Word, double>& coeffs,
                                           double H, const std::vector<double>& eps_grid,
                                           std::size_t n_paths, std::uint64_t seed,
                                           const SmallBallConfig& cfg = {}) {
  double norm2 = 0.0;
  for (const auto& [w, c] : coeffs) norm2 += c * c;
  if (std::abs(norm2 - 1.0) > 1e-8)
    throw std::invalid_argument("small_ball_estimate: coefficients must have unit norm");
  FbmSampler sampler(H, cfg.grid_size, d, cfg.method);
  std::vector<double> sups(n_paths);
  parallel_for(n_paths, cfg.threads, [&](std::size_t i) {
    FbmPath path = sampler.sample(seed, i);
    SignaturePath sig = compute_signature(path, m);
    sups[i] = linear_combination_supnorm(sig, coeffs);
  });

  SmallBallResult out;
  std::vector<double> lx, ly, lw;
  bool any_mid = false;
  for (double eps : eps_grid) {
    SmallBallRow row;
    row.epsilon = eps;
    row.n = n_paths;
    for (double s : sups)
      if (s < eps) ++row.hits;
    row.p_hat = static_cast<double>(row.hits) / static_cast<double>(n_paths);
    row.wilson = wilson_interval(row.hits, n_paths);
    if (row.hits > 0 && row.hits < n_paths) any_mid = true;
    if (row.hits >= cfg.min_hits && row.hits < n_paths) {
      lx.push_back(std::log(eps));
      ly.push_back(std::log(row.p_hat));
      lw.push_back(static_cast<double>(row.hits));  // ~ 1/var(log p_hat)
    }
    out.rows.push_back(row);
  }
  out.degenerate = !any_mid;
  out.n_usable = lx.size();
  if (!out.degenerate && lx.size() >= 2) out.fit = fit_line(lx, ly, lw);
  return out;
}

/// Truncated series for the classical Brownian two-sided small-ball
/// probability P(sup_{[0,1]} |W| < eps).
inline double brownian_smallball_series(double eps, int terms = 100) {
  if (eps <= 0.0) return 0.0;
  double s = 0.0;
  for (int k = 0; k < terms; ++k) {
    double a = static_cast<double>(2 * k + 1);
    double term = std::pow(-1.0, k) / a * std::exp(-a * a * M_PI * M_PI / (8.0 * eps * eps));
    s += term;
    if (std::abs(term) < 1e-18) break;
  }
  return 4.0 / M_PI * s;
}

}  // namespace fsde
