#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "fsde/fbm.hpp"
#include "fsde/flow.hpp"
#include "fsde/words.hpp"

namespace fsde {

/// Iterated integrals B^I_t of the piecewise-linear lift over all words of
/// length <= m, grid indexed; B^empty = 1.
struct SignaturePath {
  int d = 0;
  int max_length = 0;
  WordIndex words;          // includes the empty word, enumerate order
  Eigen::MatrixXd values;   // (cells+1) x words.size()
  Eigen::VectorXd times;

  double value(int k, const Word& w) const {
    return values(k, static_cast<Eigen::Index>(words.index(w)));
  }
};

/// Exact signature of the piecewise-linear interpolant, assembled segment by
/// segment through Chen's identity with the tensor-exponential signature of
/// each linear segment.
inline SignaturePath compute_signature(const FbmPath& path, int m, int cells = -1) {
  if (m < 0 || m > 4) throw std::invalid_argument("compute_signature: need 0 <= m <= 4");
  if (cells < 0) cells = path.grid_size;
  const int d = path.dim();
  SignaturePath sig;
  sig.d = d;
  sig.max_length = m;
  sig.words = WordIndex(enumerate_words(d, m, true));
  const auto W = static_cast<Eigen::Index>(sig.words.size());
  sig.values.resize(cells + 1, W);
  sig.times.resize(cells + 1);

  // prefix splits of every word, as index triples (word, prefix, suffix)
  struct Split {
    Eigen::Index prefix, suffix;
  };
  std::vector<std::vector<Split>> splits(static_cast<std::size_t>(W));
  for (Eigen::Index wi = 0; wi < W; ++wi) {
    const Word& w = sig.words.word(static_cast<std::size_t>(wi));
    for (std::size_t cut = 0; cut <= w.length(); ++cut) {
      Word pre(std::vector<int>(w.letters().begin(), w.letters().begin() + cut));
      Word suf(std::vector<int>(w.letters().begin() + cut, w.letters().end()));
      splits[static_cast<std::size_t>(wi)].push_back(
          {static_cast<Eigen::Index>(sig.words.index(pre)),
           static_cast<Eigen::Index>(sig.words.index(suf))});
    }
  }

  // factorials for the segment tensor exponential
  double fact[5] = {1.0, 1.0, 2.0, 6.0, 24.0};

  Eigen::VectorXd cur = Eigen::VectorXd::Zero(W);
  cur[0] = 1.0;  // empty word
  sig.values.row(0) = cur;
  sig.times[0] = 0.0;
  Eigen::VectorXd seg(W), next(W);
  for (int k = 0; k < cells; ++k) {
    Eigen::RowVectorXd v = path.increment(k);
    for (Eigen::Index wi = 0; wi < W; ++wi) {
      const Word& w = sig.words.word(static_cast<std::size_t>(wi));
      double prod = 1.0;
      for (std::size_t i = 0; i < w.length(); ++i) prod *= v[w.letter(i) - 1];
      seg[wi] = prod / fact[w.length()];
    }
    for (Eigen::Index wi = 0; wi < W; ++wi) {
      double s = 0.0;
      for (const auto& sp : splits[static_cast<std::size_t>(wi)]) s += cur[sp.prefix] * seg[sp.suffix];
      next[wi] = s;
    }
    cur = next;
    sig.values.row(k + 1) = cur;
    sig.times[k + 1] = static_cast<double>(k + 1) / path.grid_size;
  }
  return sig;
}

/// sup over grid times of |sum_I a_I B^I_t|.
inline double linear_combination_supnorm(const SignaturePath& sig,
                                         const std::map<Word, double>& coeffs) {
  Eigen::VectorXd a = Eigen::VectorXd::Zero(sig.values.cols());
  for (const auto& [w, c] : coeffs) a[static_cast<Eigen::Index>(sig.words.index(w))] = c;
  return (sig.values * a).cwiseAbs().maxCoeff();
}

/// Signature of the sub-interval [k0/N, k1/N]: Chen quotient of the running
/// signature (used by the Chen multiplicativity checks).
inline Eigen::VectorXd interval_signature(const SignaturePath& sig, int k0, int k1,
                                          const FbmPath& path) {
  FbmPath sub;
  sub.hurst = path.hurst;
  sub.grid_size = k1 - k0;
  sub.values = path.values.middleRows(k0, k1 - k0 + 1);
  Eigen::RowVectorXd base = sub.values.row(0);
  for (int r = 0; r < sub.values.rows(); ++r) sub.values.row(r) -= base;
  SignaturePath s = compute_signature(sub, sig.max_length);
  return s.values.row(s.values.rows() - 1);
}

/// Remainder of the beta Taylor expansion along one path:
/// gamma^J_I(t) = beta^J_I(t) - [I prefix of J] (-1)^{|J|-|I|} B^{J\I}_t.
/// The signature must be computed on the same lift as the bundle.
inline Eigen::VectorXd taylor_remainder(const FlowBundle& b, const SignaturePath& sig,
                                        const WordIndex& frame, const Word& I, const Word& J) {
  if (b.mode != FlowMode::Full) throw std::invalid_argument("taylor_remainder: need a full bundle");
  const auto i = static_cast<Eigen::Index>(frame.index(I));
  const auto j = static_cast<Eigen::Index>(frame.index(J));
  const auto A = static_cast<Eigen::Index>(frame.size());
  Eigen::VectorXd gamma(b.cells + 1);
  bool has_main = I.is_prefix_of(J);
  Eigen::Index sufcol = 0;
  double sign = 1.0;
  if (has_main) {
    Word suffix = J.suffix_after(I);
    sufcol = static_cast<Eigen::Index>(sig.words.index(suffix));
    sign = (suffix.length() % 2 == 0) ? 1.0 : -1.0;
  }
  for (int k = 0; k <= b.cells; ++k) {
    double beta_ij = b.betaflat(k, i * A + j);
    double main = has_main ? sign * sig.values(k, sufcol) : 0.0;
    gamma[k] = beta_ij - main;
  }
  return gamma;
}

}  // namespace fsde
