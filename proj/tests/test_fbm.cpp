#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "fsde/fbm.hpp"
#include "fsde/stats.hpp"

using namespace fsde;
using Catch::Approx;

TEST_CASE("covariance closed form") {
  CHECK(fbm_covariance(1.0, 1.0, 0.3) == Approx(1.0));
  CHECK(fbm_covariance(1.0, 1.0, 0.75) == Approx(1.0));
  // Brownian case reduces to min(s,t)
  CHECK(fbm_covariance(0.3, 0.8, 0.5) == Approx(0.3));
  CHECK(fbm_covariance(0.9, 0.2, 0.5) == Approx(0.2));
  CHECK_THROWS_AS(fbm_covariance(0.5, 0.5, 1.5), std::domain_error);
  CHECK_THROWS_AS(fbm_covariance(1.0, 2.0, 0.75), std::domain_error);
}

TEST_CASE("sampler basics") {
  FbmSampler s(0.7, 64, 2, FbmMethod::Circulant);
  FbmPath p = s.sample(123, 0);
  CHECK(p.values.row(0).norm() == 0.0);
  CHECK(p.values.rows() == 65);
  CHECK(p.values.cols() == 2);

  FbmPath q = s.sample(123, 0);
  CHECK((p.values - q.values).cwiseAbs().maxCoeff() == 0.0);  // deterministic
  FbmPath r = s.sample(123, 1);
  CHECK((p.values - r.values).cwiseAbs().maxCoeff() > 0.0);

  CHECK_THROWS_AS(FbmSampler(0.7, 100, 1, FbmMethod::Circulant), std::invalid_argument);
  CHECK_THROWS_AS(FbmSampler(0.2, 64, 1, FbmMethod::Circulant), std::domain_error);
  CHECK_THROWS_AS(FbmSampler(1.0, 64, 1, FbmMethod::Circulant), std::domain_error);
}

TEST_CASE("Brownian variance of B_1 within 4 standard errors") {
  const std::size_t n = 4096;
  FbmSampler s(0.5, 1024, 1, FbmMethod::Circulant);
  std::vector<double> b1(n);
  for (std::size_t i = 0; i < n; ++i) b1[i] = s.sample(7, i).values(1024, 0);
  double m = 0, v = 0;
  for (double x : b1) m += x;
  m /= n;
  for (double x : b1) v += (x - m) * (x - m);
  v /= (n - 1);
  double se = std::sqrt(2.0 / (n - 1));  // SE of the sample variance at sigma^2 = 1
  CHECK(std::abs(v - 1.0) < 4 * se);
}

TEST_CASE("Monte Carlo covariance matches R(0.5, 1.0) at H = 0.7") {
  const std::size_t n = 4096;
  const int N = 512;
  FbmSampler s(0.7, N, 2, FbmMethod::Circulant);
  std::vector<double> xs(n), ys(n);
  for (std::size_t i = 0; i < n; ++i) {
    FbmPath p = s.sample(1, i);
    xs[i] = p.values(N / 2, 0);
    ys[i] = p.values(N, 0);
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double cov = 0;
  for (std::size_t i = 0; i < n; ++i) cov += (xs[i] - mx) * (ys[i] - my);
  cov /= (n - 1);
  double target = fbm_covariance(0.5, 1.0, 0.7);
  double var_x = fbm_covariance(0.5, 0.5, 0.7), var_y = 1.0;
  double se = std::sqrt((var_x * var_y + target * target) / n);
  CHECK(std::abs(cov - target) < 4 * se);
}

TEST_CASE("empirical covariance on an 8-point subgrid, both methods") {
  const std::size_t n = 2048;
  const int N = 256;
  for (FbmMethod method : {FbmMethod::Circulant, FbmMethod::Cholesky}) {
    FbmSampler s(0.55, N, 1, method);
    Eigen::MatrixXd vals(n, 8);
    for (std::size_t i = 0; i < n; ++i) {
      FbmPath p = s.sample(21, i);
      for (int k = 0; k < 8; ++k) vals(i, k) = p.values((k + 1) * N / 8, 0);
    }
    for (int a = 0; a < 8; ++a)
      for (int b = a; b < 8; ++b) {
        double ta = (a + 1) / 8.0, tb = (b + 1) / 8.0;
        double emp = vals.col(a).dot(vals.col(b)) / (n - 1) -
                     vals.col(a).mean() * vals.col(b).mean() * n / (n - 1.0);
        double target = fbm_covariance(ta, tb, 0.55);
        double se = std::sqrt(
            (fbm_covariance(ta, ta, 0.55) * fbm_covariance(tb, tb, 0.55) + target * target) / n);
        INFO("method " << (method == FbmMethod::Circulant ? "circulant" : "cholesky") << " ("
                       << ta << "," << tb << ")");
        CHECK(std::abs(emp - target) < 4 * se);
      }
  }
}

TEST_CASE("Cholesky and circulant samplers agree in law") {
  const std::size_t n = 4096;
  const int N = 256;
  FbmSampler sc(0.7, N, 1, FbmMethod::Circulant);
  FbmSampler sh(0.7, N, 1, FbmMethod::Cholesky);
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = sc.sample(5, i).values(N, 0);
    b[i] = sh.sample(6, i).values(N, 0);
  }
  KsResult ks = ks_two_sample(a, b);
  CHECK(ks.p_value > 0.01);
}

TEST_CASE("self-similarity of the law at the lift level") {
  // B_{eps * 1} vs eps^H * B_1 marginals, two independent ensembles
  const std::size_t n = 4096;
  const int N = 512;
  const double H = 0.7, eps = 0.25;
  FbmSampler s(H, N, 1, FbmMethod::Circulant);
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = s.sample(1000, i).values(static_cast<int>(eps * N), 0);
    b[i] = std::pow(eps, H) * s.sample(5000, i).values(N, 0);
  }
  KsResult ks = ks_two_sample(a, b);
  CHECK(ks.p_value > 0.01);
}

TEST_CASE("components are independent in law (statistical)") {
  const std::size_t n = 4096;
  FbmSampler s(0.7, 64, 2, FbmMethod::Circulant);
  double cross = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    FbmPath p = s.sample(17, i);
    cross += p.values(64, 0) * p.values(64, 1);
  }
  cross /= n;
  CHECK(std::abs(cross) < 4.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("holder norm closed forms") {
  Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(65, 1);
  CHECK(holder_norm(zero, 0.5) == 0.0);

  // f(t) = t at gamma = 1/2: sup (t-s)/(t-s)^{1/2} attained at t-s = 1, plus sup = 1
  const int N = 128;
  Eigen::MatrixXd lin(N + 1, 1);
  for (int k = 0; k <= N; ++k) lin(k, 0) = static_cast<double>(k) / N;
  CHECK(holder_norm(lin, 0.5) == Approx(2.0).epsilon(1e-12));

  CHECK_THROWS_AS(holder_norm(lin, 1.5), std::domain_error);
}

TEST_CASE("holder norm growth across the Hurst threshold") {
  const double H = 0.5;
  const std::size_t paths = 48;
  auto mean_norm = [&](int N, double gamma) {
    FbmSampler s(H, N, 1, FbmMethod::Circulant);
    double m = 0.0;
    for (std::size_t i = 0; i < paths; ++i) m += holder_norm(s.sample(33, i), gamma);
    return m / paths;
  };
  double below_small = mean_norm(256, H - 0.15);
  double below_large = mean_norm(1024, H - 0.15);
  double above_small = mean_norm(256, H + 0.15);
  double above_large = mean_norm(1024, H + 0.15);
  double ratio_below = below_large / below_small;
  double ratio_above = above_large / above_small;
  INFO("ratio below " << ratio_below << " ratio above " << ratio_above);
  CHECK(ratio_above > ratio_below + 0.05);
  CHECK(ratio_above > 1.1);  // grows roughly like N^{0.15}
  CHECK(ratio_below < 1.15);
}
