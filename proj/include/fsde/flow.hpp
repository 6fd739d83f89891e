#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fsde/cm_space.hpp"
#include "fsde/fbm.hpp"
#include "fsde/vfields.hpp"
#include "fsde/words.hpp"

namespace fsde {

/// Raised when the state leaves the finite range during integration;
/// carries the first bad time.
class IntegrationBlowup : public std::runtime_error {
 public:
  IntegrationBlowup(double time, const std::string& what)
      : std::runtime_error(what), time(time) {}
  double time;
};

enum class FlowMode { StateOnly, Jacobian, Full };

/// Grid-indexed trajectories of X, J_{0->t}, J_{0->t}^{-1} and the beta
/// transport matrix, for one driving path and one scale epsilon.
/// beta(row I, col J) = beta^{J,eps}_I(t,x); rows and columns follow the
/// words enumeration order of the system.
struct FlowBundle {
  using RowMajorXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  int n = 0;
  int cells = 0;
  int level = 0;
  std::size_t frame_size = 0;
  double epsilon = 1.0;
  double hurst = 0.5;
  FlowMode mode = FlowMode::StateOnly;
  Eigen::VectorXd x0;
  Eigen::VectorXd times;   // cells+1
  Eigen::MatrixXd X;       // (cells+1) x n
  RowMajorXd Jflat;        // (cells+1) x n^2, J(r,c) -> col r*n+c
  RowMajorXd Jinvflat;
  RowMajorXd betaflat;     // (cells+1) x A^2, beta(I,J) -> col I*A+J

  Eigen::MatrixXd jacobian(int k) const {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        Jflat.row(k).data(), n, n);
  }
  Eigen::MatrixXd jacobian_inverse(int k) const {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        Jinvflat.row(k).data(), n, n);
  }
  Eigen::MatrixXd beta(int k) const {
    const auto A = static_cast<Eigen::Index>(frame_size);
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        betaflat.row(k).data(), A, A);
  }
};

namespace detail {

/// Precompiled right-hand side of the coupled system along a piecewise
/// linear driver.
class FlowRhs {
 public:
  FlowRhs(const VectorFieldSystem& sys, double epsilon, double H, FlowMode mode)
      : sys_(sys), mode_(mode), n_(sys.n), d_(sys.d), A_(sys.words.size()) {
    eps_h_ = std::pow(epsilon, H);
    if (mode_ != FlowMode::StateOnly) {
      jac_polys_.resize(d_);
      for (int i = 0; i < d_; ++i) {
        jac_polys_[i].reserve(static_cast<std::size_t>(n_) * n_);
        for (int r = 0; r < n_; ++r)
          for (int c = 0; c < n_; ++c) jac_polys_[i].push_back(sys.fields[i].partial(r, c));
      }
    }
    if (mode_ == FlowMode::Full) {
      if (!sys.sf.all_symbolic())
        throw std::runtime_error(
            "integrate: structure functions without closed form; the beta system "
            "cannot be evaluated along the flow (level mismatch between sf and beta)");
      drift_.assign(d_, {});
      for (int j = 1; j <= d_; ++j) {
        for (std::size_t i = 0; i < A_; ++i) {
          Word w = concat(sys.words.word(i), Word{j});
          if (static_cast<int>(w.length()) <= sys.level) {
            drift_[j - 1].push_back(Entry{i, sys.words.index(w), 1.0, nullptr});
          } else {
            for (std::size_t k = 0; k < A_; ++k) {
              const TrigPoly& fn = sys.sf.top_entry(w, k);
              if (fn.is_zero()) continue;
              double scale = omega_eps_scale(epsilon, static_cast<int>(w.length()),
                                             static_cast<int>(sys.words.word(k).length()), H);
              double cval = 0.0;
              if (fn.is_constant(&cval))
                drift_[j - 1].push_back(Entry{i, k, scale * cval, nullptr});
              else
                drift_[j - 1].push_back(Entry{i, k, scale, &fn});
            }
          }
        }
      }
    }
  }

  int state_size() const {
    int s = n_;
    if (mode_ != FlowMode::StateOnly) s += 2 * n_ * n_;
    if (mode_ == FlowMode::Full) s += static_cast<int>(A_ * A_);
    return s;
  }

  void operator()(const Eigen::VectorXd& y, const Eigen::RowVectorXd& slope,
                  Eigen::VectorXd& dy) const {
    dy.setZero(y.size());
    Eigen::Map<const Eigen::VectorXd> x(y.data(), n_);
    std::span<const double> xs(x.data(), static_cast<std::size_t>(n_));

    for (int i = 0; i < d_; ++i) {
      double c = eps_h_ * slope[i];
      for (int r = 0; r < n_; ++r) dy[r] += c * sys_.fields[i].component(r).eval(xs);
    }
    if (mode_ == FlowMode::StateOnly) return;

    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> J(y.data() + n_, n_, n_);
    Eigen::Map<const RowMat> Jinv(y.data() + n_ + n_ * n_, n_, n_);
    Eigen::Map<RowMat> dJ(dy.data() + n_, n_, n_);
    Eigen::Map<RowMat> dJinv(dy.data() + n_ + n_ * n_, n_, n_);
    RowMat dV(n_, n_);
    for (int i = 0; i < d_; ++i) {
      double c = eps_h_ * slope[i];
      if (c == 0.0) continue;
      for (int r = 0; r < n_; ++r)
        for (int col = 0; col < n_; ++col)
          dV(r, col) = jac_polys_[i][static_cast<std::size_t>(r) * n_ + col].eval(xs);
      dJ.noalias() += c * (dV * J);
      dJinv.noalias() -= c * (Jinv * dV);
    }
    if (mode_ != FlowMode::Full) return;

    const auto A = static_cast<Eigen::Index>(A_);
    const int off = n_ + 2 * n_ * n_;
    Eigen::Map<const RowMat> beta(y.data() + off, A, A);
    Eigen::Map<RowMat> dbeta(dy.data() + off, A, A);
    for (int j = 0; j < d_; ++j) {
      double c = slope[j];
      if (c == 0.0) continue;
      for (const Entry& e : drift_[j]) {
        double w = e.coef;
        if (e.fn) w *= e.fn->eval(xs);
        dbeta.row(static_cast<Eigen::Index>(e.row)).noalias() -=
            (c * w) * beta.row(static_cast<Eigen::Index>(e.col));
      }
    }
  }

 private:
  struct Entry {
    std::size_t row;
    std::size_t col;
    double coef;
    const TrigPoly* fn;
  };

  const VectorFieldSystem& sys_;
  FlowMode mode_;
  int n_, d_;
  std::size_t A_;
  double eps_h_;
  std::vector<std::vector<TrigPoly>> jac_polys_;
  std::vector<std::vector<Entry>> drift_;
};

}  // namespace detail

/// Solves the coupled system for X, J, J^{-1} and beta along the piecewise
/// linear interpolation of the sampled path (Wong-Zakai lift), with a
/// classical 4th-order one-step method on `substeps` sub-intervals per grid
/// cell. `cells` restricts the horizon to the first cells of the path
/// (default: the whole grid).
inline FlowBundle integrate(const VectorFieldSystem& sys, const FbmPath& path,
                            const Eigen::VectorXd& x0, double epsilon, int substeps,
                            FlowMode mode = FlowMode::Full, int cells = -1) {
  if (path.dim() != sys.d) throw std::invalid_argument("integrate: path/system dimension mismatch");
  if (x0.size() != sys.n) throw std::invalid_argument("integrate: x0 has wrong dimension");
  if (!x0.allFinite()) throw std::invalid_argument("integrate: x0 must be finite");
  if (substeps < 1) throw std::invalid_argument("integrate: substeps must be >= 1");
  if (cells < 0) cells = path.grid_size;
  if (cells > path.grid_size) throw std::invalid_argument("integrate: not enough cells in path");

  detail::FlowRhs rhs(sys, epsilon, path.hurst, mode);
  const int S = rhs.state_size();
  const int n = sys.n;
  const auto A = static_cast<Eigen::Index>(sys.words.size());
  const double dt = 1.0 / path.grid_size;

  FlowBundle b;
  b.n = n;
  b.cells = cells;
  b.level = sys.level;
  b.frame_size = sys.words.size();
  b.epsilon = epsilon;
  b.hurst = path.hurst;
  b.mode = mode;
  b.x0 = x0;
  b.times.resize(cells + 1);
  b.X.resize(cells + 1, n);
  if (mode != FlowMode::StateOnly) {
    b.Jflat.resize(cells + 1, n * n);
    b.Jinvflat.resize(cells + 1, n * n);
  }
  if (mode == FlowMode::Full) b.betaflat.resize(cells + 1, A * A);

  Eigen::VectorXd y = Eigen::VectorXd::Zero(S);
  y.head(n) = x0;
  if (mode != FlowMode::StateOnly) {
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<RowMat>(y.data() + n, n, n).setIdentity();
    Eigen::Map<RowMat>(y.data() + n + n * n, n, n).setIdentity();
  }
  if (mode == FlowMode::Full)
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        y.data() + n + 2 * n * n, A, A)
        .setIdentity();

  auto store = [&](int k) {
    b.times[k] = k * dt;
    b.X.row(k) = y.head(n);
    if (mode != FlowMode::StateOnly) {
      b.Jflat.row(k) = y.segment(n, n * n);
      b.Jinvflat.row(k) = y.segment(n + n * n, n * n);
    }
    if (mode == FlowMode::Full) b.betaflat.row(k) = y.tail(A * A);
  };
  store(0);

  Eigen::VectorXd k1(S), k2(S), k3(S), k4(S), tmp(S);
  const double h = dt / substeps;
  for (int cell = 0; cell < cells; ++cell) {
    Eigen::RowVectorXd slope = path.increment(cell) / dt;
    for (int s = 0; s < substeps; ++s) {
      rhs(y, slope, k1);
      tmp = y + 0.5 * h * k1;
      rhs(tmp, slope, k2);
      tmp = y + 0.5 * h * k2;
      rhs(tmp, slope, k3);
      tmp = y + h * k3;
      rhs(tmp, slope, k4);
      y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!y.allFinite() || y.head(n).norm() > 1e10)
      throw IntegrationBlowup((cell + 1) * dt, "integrate: state blew up at t = " +
                                                   std::to_string((cell + 1) * dt));
    store(cell + 1);
  }
  return b;
}

/// Central correctness oracle for the transport system: the maximum over
/// grid times and words I of the relative mismatch between
/// J^{-1}_{0->t} V^eps_{[I]}(X_t) and sum_J beta^{J,eps}_I(t) V^eps_{[J]}(x0).
inline double transport_residual(const FlowBundle& b, const VectorFieldSystem& sys) {
  if (b.mode != FlowMode::Full) throw std::invalid_argument("transport_residual: need a full bundle");
  const auto A = static_cast<Eigen::Index>(sys.words.size());
  const double H = b.hurst;

  Eigen::MatrixXd frame(b.n, A);  // V^eps_{[J]}(x0)
  for (Eigen::Index j = 0; j < A; ++j) {
    const Word& w = sys.words.word(static_cast<std::size_t>(j));
    double s = std::pow(b.epsilon, static_cast<double>(w.length()) * H);
    frame.col(j) = s * sys.bracket(w).eval(b.x0);
  }

  double worst = 0.0;
  for (int k = 0; k <= b.cells; ++k) {
    Eigen::VectorXd x = b.X.row(k);
    Eigen::MatrixXd Jinv = b.jacobian_inverse(k);
    Eigen::MatrixXd beta = b.beta(k);
    for (Eigen::Index i = 0; i < A; ++i) {
      const Word& w = sys.words.word(static_cast<std::size_t>(i));
      double s = std::pow(b.epsilon, static_cast<double>(w.length()) * H);
      Eigen::VectorXd lhs = Jinv * (s * sys.bracket(w).eval(x));
      Eigen::VectorXd rhs = frame * beta.row(i).transpose();
      double rel = (lhs - rhs).norm() / (1.0 + lhs.norm());
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

/// The Malliavin derivative kernel of X^{eps,x}_T over the integrated
/// horizon: rows[j] has one R^n row per grid cell s with value
/// J_{0->T} Jinv(s) V^eps_j(X_s).
struct MalliavinKernel {
  int cells = 0;
  std::vector<Eigen::MatrixXd> rows;  // d entries, cells x n
};

inline MalliavinKernel malliavin_kernel(const FlowBundle& b, const VectorFieldSystem& sys) {
  if (b.mode == FlowMode::StateOnly)
    throw std::invalid_argument("malliavin_kernel: need Jacobian trajectories");
  MalliavinKernel ker;
  ker.cells = b.cells;
  ker.rows.assign(sys.d, Eigen::MatrixXd(b.cells, b.n));
  const double eps_h = std::pow(b.epsilon, b.hurst);
  Eigen::MatrixXd Jend = b.jacobian(b.cells);
  for (int k = 0; k < b.cells; ++k) {
    Eigen::VectorXd x = b.X.row(k);
    Eigen::MatrixXd M = Jend * b.jacobian_inverse(k);
    for (int j = 0; j < sys.d; ++j)
      ker.rows[j].row(k) = (M * (eps_h * sys.fields[j].eval(x))).transpose();
  }
  return ker;
}

}  // namespace fsde
