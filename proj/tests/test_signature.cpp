#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fsde/fbm.hpp"
#include "fsde/flow.hpp"
#include "fsde/signature.hpp"
#include "fsde/stats.hpp"
#include "fsde/vfields.hpp"

using namespace fsde;
using Catch::Approx;

namespace {

FbmPath line_path(Eigen::VectorXd v, int N) {
  FbmPath p;
  p.hurst = 0.5;
  p.grid_size = N;
  p.values.resize(N + 1, v.size());
  for (int k = 0; k <= N; ++k) p.values.row(k) = (static_cast<double>(k) / N) * v.transpose();
  return p;
}

}  // namespace

TEST_CASE("signature of a straight segment is the tensor exponential") {
  Eigen::VectorXd v(2);
  v << 0.7, -1.3;
  SignaturePath sig = compute_signature(line_path(v, 16), 3);
  int T = 16;
  CHECK(sig.value(T, Word{}) == Approx(1.0));
  CHECK(sig.value(T, Word{1}) == Approx(v[0]).margin(1e-14));
  CHECK(sig.value(T, Word{2}) == Approx(v[1]).margin(1e-14));
  CHECK(sig.value(T, Word{1, 2}) == Approx(v[0] * v[1] / 2).margin(1e-14));
  CHECK(sig.value(T, Word{2, 1}) == Approx(v[0] * v[1] / 2).margin(1e-14));
  CHECK(sig.value(T, Word{1, 1, 1}) == Approx(v[0] * v[0] * v[0] / 6).margin(1e-14));
}

TEST_CASE("empty word coordinate is constant one") {
  FbmSampler s(0.7, 128, 2, FbmMethod::Circulant);
  SignaturePath sig = compute_signature(s.sample(3, 0), 2);
  for (int k = 0; k <= 128; ++k) CHECK(sig.value(k, Word{}) == 1.0);
}

TEST_CASE("diagonal double integrals and the shuffle identity") {
  FbmSampler s(0.55, 256, 2, FbmMethod::Circulant);
  FbmPath p = s.sample(5, 0);
  SignaturePath sig = compute_signature(p, 2);
  for (int k = 0; k <= 256; k += 16) {
    double b1 = sig.value(k, Word{1});
    double b2 = sig.value(k, Word{2});
    // B^{(i,i)} = (B^i)^2 / 2 for the geometric lift
    CHECK(sig.value(k, Word{1, 1}) == Approx(b1 * b1 / 2).margin(1e-10 * (1 + b1 * b1)));
    // shuffle: B^i B^j = B^{ij} + B^{ji}
    double lhs = b1 * b2;
    double rhs = sig.value(k, Word{1, 2}) + sig.value(k, Word{2, 1});
    CHECK(lhs == Approx(rhs).margin(1e-10 * (1 + std::abs(lhs))));
  }
}

TEST_CASE("Chen multiplicativity over interval splits") {
  const int N = 128;
  FbmSampler s(0.4, N, 2, FbmMethod::Circulant);
  FbmPath p = s.sample(7, 0);
  SignaturePath sig = compute_signature(p, 3);
  const WordIndex& words = sig.words;
  for (int split : {32, 64, 96}) {
    Eigen::VectorXd left = interval_signature(sig, 0, split, p);
    Eigen::VectorXd right = interval_signature(sig, split, N, p);
    for (std::size_t wi = 0; wi < words.size(); ++wi) {
      const Word& w = words.word(wi);
      double chen = 0.0;
      for (std::size_t cut = 0; cut <= w.length(); ++cut) {
        Word pre(std::vector<int>(w.letters().begin(), w.letters().begin() + cut));
        Word suf(std::vector<int>(w.letters().begin() + cut, w.letters().end()));
        chen += left[static_cast<Eigen::Index>(words.index(pre))] *
                right[static_cast<Eigen::Index>(words.index(suf))];
      }
      double direct = sig.value(N, w);
      INFO("word " << to_string(w) << " split " << split);
      CHECK(chen == Approx(direct).margin(1e-10 * (1.0 + std::abs(direct))));
    }
  }
}

TEST_CASE("linear combination sup norm") {
  FbmSampler s(0.7, 128, 1, FbmMethod::Circulant);
  FbmPath p = s.sample(9, 0);
  SignaturePath sig = compute_signature(p, 1);
  std::map<Word, double> only_empty{{Word{}, 1.0}};
  CHECK(linear_combination_supnorm(sig, only_empty) == Approx(1.0));
  std::map<Word, double> first{{Word{1}, 1.0}};
  CHECK(linear_combination_supnorm(sig, first) ==
        Approx(p.values.col(0).cwiseAbs().maxCoeff()).margin(1e-14));
}

TEST_CASE("beta Taylor remainder vanishes for heisenberg") {
  // brackets beyond level 2 vanish, so the expansion terminates: gamma == 0
  // up to machine precision on the same lift.
  VectorFieldSystem sys = make_heisenberg();
  Eigen::VectorXd x0(3);
  x0 << 0.3, 0.1, -0.2;
  FbmSampler s(0.5, 512, 2, FbmMethod::Circulant);
  for (int i = 0; i < 4; ++i) {
    FbmPath p = s.sample(21, i);
    FlowBundle b = integrate(sys, p, x0, 1.0, 4, FlowMode::Full);
    SignaturePath sig = compute_signature(p, 2);
    for (const Word& I : sys.words.words())
      for (const Word& J : sys.words.words()) {
        if (I.length() > J.length()) continue;
        Eigen::VectorXd gamma = taylor_remainder(b, sig, sys.words, I, J);
        CHECK(gamma.cwiseAbs().maxCoeff() <= 1e-10);
      }
  }
}

TEST_CASE("beta Taylor remainder decays like t^{(l+1-|I|)H} on the trig system") {
  // level 4 structure functions are nonzero constants here, so the remainder
  // is a genuine (l-|I|+1)-fold iterated integral ~ t^{3H} for |I| = 1.
  VectorFieldSystem sys = make_trig_elliptic();
  const double H = 0.5;
  const int N = 1 << 10;
  const std::size_t npaths = 24;
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(2);
  FbmSampler s(H, N, 2, FbmMethod::Circulant);
  std::vector<double> ts{1.0 / 64, 1.0 / 32, 1.0 / 16, 1.0 / 8, 1.0 / 4, 1.0 / 2};
  std::vector<double> acc(ts.size(), 0.0);
  for (std::size_t i = 0; i < npaths; ++i) {
    FbmPath p = s.sample(31, i);
    FlowBundle b = integrate(sys, p, x0, 1.0, 4, FlowMode::Full);
    SignaturePath sig = compute_signature(p, 2);
    for (std::size_t ti = 0; ti < ts.size(); ++ti) {
      int k = static_cast<int>(std::llround(ts[ti] * N));
      double worst = 0.0;
      for (const Word& I : sys.words.words()) {
        if (I.length() != 1) continue;
        for (const Word& J : sys.words.words()) {
          Eigen::VectorXd gamma = taylor_remainder(b, sig, sys.words, I, J);
          worst = std::max(worst, std::abs(gamma[k]));
        }
      }
      acc[ti] += worst;
    }
  }
  std::vector<double> lx, ly;
  for (std::size_t ti = 0; ti < ts.size(); ++ti) {
    lx.push_back(std::log(ts[ti]));
    ly.push_back(std::log(acc[ti] / npaths));
  }
  LineFit fit = fit_line(lx, ly);
  INFO("remainder slope " << fit.slope << " floor " << ((sys.level + 1 - 1) * H - 0.25));
  CHECK(fit.slope >= (sys.level + 1 - 1) * H - 0.25);  // 3H - 0.25 = 1.25
}
