#pragma once

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "fsde/csvio.hpp"
#include "fsde/fbm.hpp"

namespace fsde {

/// Piecewise-constant R^d-valued function on the uniform grid of [0,1];
/// values.row(k) is the value on [k/N, (k+1)/N).
struct StepFunction {
  int grid_size = 0;
  Eigen::MatrixXd values;  // N x d

  static StepFunction zero(int N, int d) { return {N, Eigen::MatrixXd::Zero(N, d)}; }

  /// Indicator of [0,t) in one component; t must be grid aligned.
  static StepFunction indicator(int N, int d, int component, double t) {
    StepFunction f = zero(N, d);
    int cells = static_cast<int>(std::llround(t * N));
    if (std::abs(t * N - cells) > 1e-9) throw std::invalid_argument("indicator: t must be grid aligned");
    for (int k = 0; k < cells; ++k) f.values(k, component) = 1.0;
    return f;
  }
};

/// The increment-covariance quadratic form realizing the Cameron-Martin
/// inner product on step functions:
///   <f,g> = sum_{k,l} sum_j f_j[k] g_j[l] Cov(dB_k, dB_l),
/// with Cov(dB_k, dB_l) = N^{-2H} * fgn_autocov(k-l, H). The Toeplitz
/// structure is applied through a circulant FFT embedding; an O(N^2) direct
/// path is kept for cross-checks. One instance per (H,N), shared read-only.
class HWeights {
 public:
  HWeights(double H, int N) : H_(H), N_(N) {
    if (!(H > 0.0 && H < 1.0)) throw std::domain_error("HWeights: H must be in (0,1)");
    if (N < 1) throw std::invalid_argument("HWeights: N must be >= 1");
    gamma_.resize(N);
    double scale = std::pow(static_cast<double>(N), -2.0 * H);
    for (int k = 0; k < N; ++k) gamma_[k] = scale * fgn_autocov(k, H);
    build_spectrum();
  }

  double hurst() const { return H_; }
  int grid_size() const { return N_; }
  const Eigen::VectorXd& first_row() const { return gamma_; }

  /// Toeplitz matrix-vector product T v with T_{kl} = gamma(|k-l|).
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    if (v.size() != N_) throw std::invalid_argument("HWeights::apply: grid mismatch");
    if (N_ <= 64) return apply_direct(v);
    const int M = 2 * N_;
    std::vector<std::complex<double>> in(M, {0.0, 0.0}), out(M);
    for (int k = 0; k < N_; ++k) in[k] = v[k];
    thread_local Eigen::FFT<double> fft;
    fft.fwd(out, in);
    for (int k = 0; k < M; ++k) out[k] *= spectrum_[k];
    std::vector<std::complex<double>> back(M);
    fft.inv(back, out);
    Eigen::VectorXd res(N_);
    for (int k = 0; k < N_; ++k) res[k] = back[k].real();
    return res;
  }

  Eigen::VectorXd apply_direct(const Eigen::VectorXd& v) const {
    Eigen::VectorXd res = Eigen::VectorXd::Zero(N_);
    for (int k = 0; k < N_; ++k)
      for (int l = 0; l < N_; ++l) res[k] += gamma_[std::abs(k - l)] * v[l];
    return res;
  }

  double inner(const StepFunction& f, const StepFunction& g) const {
    if (f.grid_size != N_ || g.grid_size != N_)
      throw std::invalid_argument("HWeights::inner: grid mismatch");
    if (f.values.cols() != g.values.cols())
      throw std::invalid_argument("HWeights::inner: dimension mismatch");
    double s = 0.0;
    for (int j = 0; j < f.values.cols(); ++j)
      s += f.values.col(j).dot(apply(g.values.col(j)));
    return s;
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("HWeights::save: cannot open " + path.string());
    out << "fsde-hweights 1 " << format_full(H_) << " " << N_ << "\n";
    for (int k = 0; k < N_; ++k) out << format_full(gamma_[k]) << "\n";
  }

  static HWeights load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("HWeights::load: cannot open " + path.string());
    std::string tag;
    int version = 0, N = 0;
    double H = 0.0;
    in >> tag >> version >> H >> N;
    if (tag != "fsde-hweights" || version != 1)
      throw std::runtime_error("HWeights::load: bad header in " + path.string());
    HWeights w(H, N);
    for (int k = 0; k < N; ++k) in >> w.gamma_[k];
    w.build_spectrum();
    return w;
  }

 private:
  void build_spectrum() {
    const int M = 2 * N_;
    std::vector<std::complex<double>> c(M, {0.0, 0.0});
    for (int k = 0; k < N_; ++k) c[k] = gamma_[k];
    for (int k = 1; k < N_; ++k) c[M - k] = gamma_[k];
    Eigen::FFT<double> fft;
    spectrum_.resize(M);
    fft.fwd(spectrum_, c);
  }

  double H_;
  int N_;
  Eigen::VectorXd gamma_;
  std::vector<std::complex<double>> spectrum_;
};

inline double inner_h(const StepFunction& f, const StepFunction& g, const HWeights& w) {
  return w.inner(f, g);
}

inline double norm_h(const StepFunction& f, const HWeights& w) {
  return std::sqrt(std::max(0.0, w.inner(f, f)));
}

/// Discrete L2[0,1] norm of a step function.
inline double l2_norm(const StepFunction& f) {
  return std::sqrt(f.values.squaredNorm() / f.grid_size);
}

/// Step restriction of a grid function ((N+1) x d values at grid points):
/// the cell value is the left endpoint value.
inline StepFunction step_from_grid_function(const Eigen::MatrixXd& grid_values) {
  StepFunction f;
  f.grid_size = static_cast<int>(grid_values.rows()) - 1;
  f.values = grid_values.topRows(f.grid_size);
  return f;
}

struct InterpolationReport {
  bool degenerate = false;
  double h_norm = 0.0;
  double sup = 0.0;
  double l2 = 0.0;
  double holder = 0.0;
  // ||f||_H >= C ||f||_inf^{3+1/g} / ||f||_g^{2+1/g}  (H > 1/2 branch):
  // the empirical constant h_norm * holder^{2+1/g} / sup^{3+1/g}.
  double interpolation_constant = 0.0;
  bool interpolation_applicable = false;
  // ||f||_inf <= 2 max{ ||f||_L2, ||f||_L2^{2g/(2g+1)} ||f||_g^{1/(2g+1)} }
  double supbound_rhs = 0.0;
  bool supbound_holds = false;
  // ||f||_H >= C ||f||_L2 (H <= 1/2 use): empirical ratio.
  double l2_ratio = 0.0;
};

/// Evaluates both interpolation inequalities on a grid function. Reports
/// empirical ratios; never asserts a specific constant.
inline InterpolationReport check_interpolation(const Eigen::MatrixXd& grid_values, double H,
                                               double gamma, const HWeights& w) {
  InterpolationReport r;
  r.sup = sup_norm(grid_values);
  if (r.sup == 0.0) {
    r.degenerate = true;
    return r;
  }
  StepFunction f = step_from_grid_function(grid_values);
  r.h_norm = norm_h(f, w);
  r.l2 = l2_norm(f);
  r.holder = holder_norm(grid_values, gamma);
  r.interpolation_applicable = (H > 0.5) && (gamma > H - 0.5);
  if (r.interpolation_applicable && r.holder > 0.0) {
    r.interpolation_constant =
        r.h_norm * std::pow(r.holder, 2.0 + 1.0 / gamma) / std::pow(r.sup, 3.0 + 1.0 / gamma);
  }
  double alt = std::pow(r.l2, 2.0 * gamma / (2.0 * gamma + 1.0)) *
               std::pow(r.holder, 1.0 / (2.0 * gamma + 1.0));
  r.supbound_rhs = 2.0 * std::max(r.l2, alt);
  r.supbound_holds = r.sup <= r.supbound_rhs * (1.0 + 1e-12);
  r.l2_ratio = r.l2 > 0.0 ? r.h_norm / r.l2 : 0.0;
  return r;
}

}  // namespace fsde
