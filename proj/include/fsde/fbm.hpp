#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "fsde/rng.hpp"

namespace fsde {

/// R(t,s) = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2 on [0,1].
inline double fbm_covariance(double s, double t, double H) {
  if (!(H > 0.0 && H < 1.0)) throw std::domain_error("fbm_covariance: H must be in (0,1)");
  if (s < 0.0 || s > 1.0 || t < 0.0 || t > 1.0)
    throw std::domain_error("fbm_covariance: times must be in [0,1]");
  return 0.5 * (std::pow(s, 2.0 * H) + std::pow(t, 2.0 * H) - std::pow(std::abs(t - s), 2.0 * H));
}

/// Autocovariance of unit-spacing fractional Gaussian noise at lag k.
inline double fgn_autocov(int k, double H) {
  double a = std::abs(static_cast<double>(k));
  return 0.5 * (std::pow(a + 1.0, 2.0 * H) - 2.0 * std::pow(a, 2.0 * H) +
                std::pow(std::abs(a - 1.0), 2.0 * H));
}

/// One d-dimensional fBm sample on the uniform grid {k/N}, values[0] = 0.
struct FbmPath {
  double hurst = 0.5;
  int grid_size = 0;                 // number of cells N
  Eigen::MatrixXd values;            // (N+1) x d
  double t(int k) const { return static_cast<double>(k) / grid_size; }
  int dim() const { return static_cast<int>(values.cols()); }
  Eigen::RowVectorXd increment(int cell) const { return values.row(cell + 1) - values.row(cell); }
};

enum class FbmMethod { Cholesky, Circulant };

inline const char* to_string(FbmMethod m) {
  return m == FbmMethod::Cholesky ? "cholesky" : "circulant";
}

/// Exact sampler for stationary fGn increments, cumulative-summed to fBm.
/// Both methods realize the exact Gaussian law of the grid restriction, and
/// path i of a run depends only on (seed, i).
class FbmSampler {
 public:
  FbmSampler(double H, int N, int d, FbmMethod method)
      : H_(H), N_(N), d_(d), method_(method) {
    if (!(H > 0.25 && H < 1.0)) throw std::domain_error("FbmSampler: H must be in (1/4,1)");
    if (N < 1) throw std::invalid_argument("FbmSampler: N must be >= 1");
    if (d < 1) throw std::invalid_argument("FbmSampler: d must be >= 1");
    scale_ = std::pow(static_cast<double>(N), -H);
    if (method_ == FbmMethod::Circulant) {
      if ((N & (N - 1)) != 0)
        throw std::invalid_argument("FbmSampler: circulant method needs N to be a power of two");
      build_circulant();
      if (!circulant_ok_) {
        fell_back_ = true;
        method_ = FbmMethod::Cholesky;
      }
    }
    if (method_ == FbmMethod::Cholesky) build_cholesky();
  }

  double hurst() const { return H_; }
  int grid_size() const { return N_; }
  int dim() const { return d_; }
  FbmMethod method() const { return method_; }
  /// True if the circulant embedding was not nonnegative definite and the
  /// sampler fell back to Cholesky.
  bool fell_back() const { return fell_back_; }

  FbmPath sample(std::uint64_t seed, std::uint64_t path_index) const {
    FbmPath p;
    p.hurst = H_;
    p.grid_size = N_;
    p.values.setZero(N_ + 1, d_);
    for (int j = 0; j < d_; ++j) {
      GaussianStream g(seed, path_index * static_cast<std::uint64_t>(d_) + j);
      Eigen::VectorXd inc = method_ == FbmMethod::Circulant ? sample_fgn_circulant(g)
                                                            : sample_fgn_cholesky(g);
      double acc = 0.0;
      for (int k = 0; k < N_; ++k) {
        acc += inc[k];
        p.values(k + 1, j) = acc;
      }
    }
    return p;
  }

 private:
  void build_cholesky() {
    Eigen::MatrixXd cov(N_, N_);
    for (int i = 0; i < N_; ++i)
      for (int j = 0; j < N_; ++j) cov(i, j) = fgn_autocov(i - j, H_);
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
      throw std::runtime_error("FbmSampler: Cholesky factorization of the fGn covariance failed");
    chol_ = llt.matrixL();
  }

  void build_circulant() {
    const int M = 2 * N_;
    std::vector<std::complex<double>> c(M);
    for (int k = 0; k <= N_; ++k) c[k] = fgn_autocov(k, H_);
    for (int k = 1; k < N_; ++k) c[M - k] = c[k];
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> lam(M);
    fft.fwd(lam, c);
    sqrt_lambda_.resize(M);
    double maxlam = 0.0;
    for (auto& v : lam) maxlam = std::max(maxlam, v.real());
    for (int k = 0; k < M; ++k) {
      double l = lam[k].real();
      if (l < -1e-9 * maxlam) {
        circulant_ok_ = false;
        return;
      }
      sqrt_lambda_[k] = std::sqrt(std::max(0.0, l) / static_cast<double>(M));
    }
    circulant_ok_ = true;
  }

  Eigen::VectorXd sample_fgn_cholesky(GaussianStream& g) const {
    Eigen::VectorXd z(N_);
    for (int k = 0; k < N_; ++k) z[k] = g.normal();
    return scale_ * (chol_ * z);
  }

  // Re(F z) with z_k = sqrt(lambda_k / M) (g_k + i h_k) has exactly the
  // circulant covariance; the first N entries are one fGn vector.
  Eigen::VectorXd sample_fgn_circulant(GaussianStream& g) const {
    const int M = 2 * N_;
    std::vector<std::complex<double>> z(M), w(M);
    for (int k = 0; k < M; ++k) {
      double re = g.normal();
      double im = g.normal();
      z[k] = sqrt_lambda_[k] * std::complex<double>(re, im);
    }
    thread_local Eigen::FFT<double> fft;
    fft.fwd(w, z);
    Eigen::VectorXd out(N_);
    for (int k = 0; k < N_; ++k) out[k] = scale_ * w[k].real();
    return out;
  }

  double H_;
  int N_;
  int d_;
  FbmMethod method_;
  double scale_;
  bool circulant_ok_ = false;
  bool fell_back_ = false;
  Eigen::MatrixXd chol_;
  std::vector<double> sqrt_lambda_;
};

/// Euclidean sup norm over grid points.
inline double sup_norm(const Eigen::MatrixXd& values) {
  double s = 0.0;
  for (int k = 0; k < values.rows(); ++k) s = std::max(s, values.row(k).norm());
  return s;
}

/// Discrete Holder-gamma norm over all grid pairs plus the sup norm:
/// sup_{s<t} |f(t)-f(s)| / |t-s|^gamma + sup |f|.
inline double holder_norm(const Eigen::MatrixXd& values, double gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::domain_error("holder_norm: gamma must be in (0,1)");
  const int n = static_cast<int>(values.rows());
  const double dt = 1.0 / static_cast<double>(n - 1);
  double best = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double diff = (values.row(j) - values.row(i)).norm();
      double dist = std::pow(static_cast<double>(j - i) * dt, gamma);
      best = std::max(best, diff / dist);
    }
  return best + sup_norm(values);
}

inline double holder_norm(const FbmPath& path, double gamma) {
  return holder_norm(path.values, gamma);
}

}  // namespace fsde
