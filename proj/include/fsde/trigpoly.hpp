#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

namespace fsde {

/// Thrown when a symbolic product would exceed the polynomial degree cap.
class DegreeCapError : public std::runtime_error {
 public:
  explicit DegreeCapError(const std::string& what) : std::runtime_error(what) {}
};

/// Scalar functions closed under differentiation and multiplication:
/// finite sums of terms  c * prod_i x_i^{p_i} * prod_i trig_i(w_i x_i),
/// where each variable carries at most one sin/cos factor per term
/// (products are renormalized through the product-to-sum identities).
/// Plain multivariate polynomials are the special case with no trig factors.
class TrigPoly {
 public:
  enum class Trig : int { None = 0, Sin = 1, Cos = 2 };

  struct Factor {
    Trig kind = Trig::None;
    double freq = 0.0;
    bool operator==(const Factor& o) const { return kind == o.kind && freq == o.freq; }
    bool operator<(const Factor& o) const {
      if (kind != o.kind) return static_cast<int>(kind) < static_cast<int>(o.kind);
      return freq < o.freq;
    }
  };

  struct Term {
    double coef = 0.0;
    std::vector<int> pow;      // one exponent per variable
    std::vector<Factor> trig;  // one entry per variable
    int total_degree() const {
      int s = 0;
      for (int p : pow) s += p;
      return s;
    }
  };

  TrigPoly() : n_(0) {}
  explicit TrigPoly(int n) : n_(n) {}

  static TrigPoly constant(int n, double c) {
    TrigPoly p(n);
    if (c != 0.0) {
      Term t;
      t.coef = c;
      t.pow.assign(n, 0);
      t.trig.assign(n, Factor{});
      p.terms_.push_back(std::move(t));
    }
    return p;
  }

  static TrigPoly variable(int n, int i) { return monomial(n, i, 1, 1.0); }

  static TrigPoly monomial(int n, int i, int power, double c) {
    TrigPoly p(n);
    Term t;
    t.coef = c;
    t.pow.assign(n, 0);
    t.pow.at(i) = power;
    t.trig.assign(n, Factor{});
    p.terms_.push_back(std::move(t));
    p.canonicalize();
    return p;
  }

  /// c * sin(freq * x_i) or c * cos(freq * x_i).
  static TrigPoly trig(int n, int i, Trig kind, double freq, double c = 1.0) {
    TrigPoly p(n);
    Term t;
    t.coef = c;
    t.pow.assign(n, 0);
    t.trig.assign(n, Factor{});
    t.trig.at(i) = Factor{kind, freq};
    p.terms_.push_back(std::move(t));
    p.canonicalize();
    return p;
  }

  int vars() const { return n_; }
  const std::vector<Term>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }

  bool is_constant(double* value = nullptr) const {
    if (terms_.empty()) {
      if (value) *value = 0.0;
      return true;
    }
    if (terms_.size() != 1) return false;
    const Term& t = terms_[0];
    if (t.total_degree() != 0) return false;
    for (const Factor& f : t.trig)
      if (f.kind != Trig::None) return false;
    if (value) *value = t.coef;
    return true;
  }

  int degree_cap() const { return degree_cap_; }
  void set_degree_cap(int cap) { degree_cap_ = cap; }

  TrigPoly operator+(const TrigPoly& o) const {
    check_same(o);
    TrigPoly out(n_);
    out.degree_cap_ = std::min(degree_cap_, o.degree_cap_);
    out.terms_ = terms_;
    out.terms_.insert(out.terms_.end(), o.terms_.begin(), o.terms_.end());
    out.canonicalize();
    return out;
  }

  TrigPoly operator-(const TrigPoly& o) const { return *this + o.scaled(-1.0); }

  TrigPoly scaled(double c) const {
    TrigPoly out = *this;
    if (c == 0.0) {
      out.terms_.clear();
      return out;
    }
    for (Term& t : out.terms_) t.coef *= c;
    return out;
  }

  TrigPoly operator*(const TrigPoly& o) const {
    check_same(o);
    TrigPoly out(n_);
    out.degree_cap_ = std::min(degree_cap_, o.degree_cap_);
    for (const Term& a : terms_)
      for (const Term& b : o.terms_) multiply_terms(a, b, out.terms_, out.degree_cap_);
    out.canonicalize();
    return out;
  }

  TrigPoly derivative(int var) const {
    TrigPoly out(n_);
    out.degree_cap_ = degree_cap_;
    for (const Term& t : terms_) {
      if (t.pow[var] > 0) {
        Term dt = t;
        dt.coef *= t.pow[var];
        dt.pow[var] -= 1;
        out.terms_.push_back(std::move(dt));
      }
      const Factor& f = t.trig[var];
      if (f.kind == Trig::Sin) {
        Term dt = t;
        dt.coef *= f.freq;
        dt.trig[var] = Factor{Trig::Cos, f.freq};
        out.terms_.push_back(std::move(dt));
      } else if (f.kind == Trig::Cos) {
        Term dt = t;
        dt.coef *= -f.freq;
        dt.trig[var] = Factor{Trig::Sin, f.freq};
        out.terms_.push_back(std::move(dt));
      }
    }
    out.canonicalize();
    return out;
  }

  double eval(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != n_) throw std::invalid_argument("TrigPoly::eval: bad point");
    double s = 0.0;
    for (const Term& t : terms_) {
      double v = t.coef;
      for (int i = 0; i < n_; ++i) {
        for (int k = 0; k < t.pow[i]; ++k) v *= x[i];
        const Factor& f = t.trig[i];
        if (f.kind == Trig::Sin)
          v *= std::sin(f.freq * x[i]);
        else if (f.kind == Trig::Cos)
          v *= std::cos(f.freq * x[i]);
      }
      s += v;
    }
    return s;
  }

  bool operator==(const TrigPoly& o) const { return n_ == o.n_ && key_equal(o); }

  std::string str() const {
    if (terms_.empty()) return "0";
    std::string s;
    for (std::size_t ti = 0; ti < terms_.size(); ++ti) {
      const Term& t = terms_[ti];
      if (ti) s += " + ";
      s += std::to_string(t.coef);
      for (int i = 0; i < n_; ++i) {
        if (t.pow[i] > 0) {
          s += "*x" + std::to_string(i + 1);
          if (t.pow[i] > 1) s += "^" + std::to_string(t.pow[i]);
        }
        if (t.trig[i].kind == Trig::Sin)
          s += "*sin(" + std::to_string(t.trig[i].freq) + "*x" + std::to_string(i + 1) + ")";
        else if (t.trig[i].kind == Trig::Cos)
          s += "*cos(" + std::to_string(t.trig[i].freq) + "*x" + std::to_string(i + 1) + ")";
      }
    }
    return s;
  }

 private:
  void check_same(const TrigPoly& o) const {
    if (n_ != o.n_) throw std::invalid_argument("TrigPoly: variable-count mismatch");
  }

  bool key_equal(const TrigPoly& o) const {
    if (terms_.size() != o.terms_.size()) return false;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      if (terms_[i].coef != o.terms_[i].coef || terms_[i].pow != o.terms_[i].pow ||
          !(terms_[i].trig == o.terms_[i].trig))
        return false;
    }
    return true;
  }

  // sin(-w x) = -sin(w x); cos(-w x) = cos(w x); sin(0) kills the term,
  // cos(0) drops the factor.
  static bool normalize_factor(Factor& f, double& coef) {
    if (f.kind == Trig::None) return true;
    if (f.freq == 0.0) {
      if (f.kind == Trig::Sin) return false;
      f = Factor{};
      return true;
    }
    if (f.freq < 0.0) {
      f.freq = -f.freq;
      if (f.kind == Trig::Sin) coef = -coef;
    }
    return true;
  }

  static void multiply_terms(const Term& a, const Term& b, std::vector<Term>& out, int cap) {
    Term base;
    base.coef = a.coef * b.coef;
    base.pow.resize(a.pow.size());
    for (std::size_t i = 0; i < a.pow.size(); ++i) base.pow[i] = a.pow[i] + b.pow[i];
    if (base.total_degree() > cap)
      throw DegreeCapError("TrigPoly: product exceeds polynomial degree cap " + std::to_string(cap));
    base.trig.assign(a.trig.size(), Factor{});
    std::vector<Term> acc{base};
    for (std::size_t i = 0; i < a.trig.size(); ++i) {
      const Factor& fa = a.trig[i];
      const Factor& fb = b.trig[i];
      std::vector<std::pair<double, Factor>> parts;
      if (fa.kind == Trig::None && fb.kind == Trig::None) {
        parts = {{1.0, Factor{}}};
      } else if (fb.kind == Trig::None) {
        parts = {{1.0, fa}};
      } else if (fa.kind == Trig::None) {
        parts = {{1.0, fb}};
      } else {
        double p = fa.freq, q = fb.freq;
        if (fa.kind == Trig::Sin && fb.kind == Trig::Sin)
          parts = {{0.5, Factor{Trig::Cos, p - q}}, {-0.5, Factor{Trig::Cos, p + q}}};
        else if (fa.kind == Trig::Sin && fb.kind == Trig::Cos)
          parts = {{0.5, Factor{Trig::Sin, p + q}}, {0.5, Factor{Trig::Sin, p - q}}};
        else if (fa.kind == Trig::Cos && fb.kind == Trig::Sin)
          parts = {{0.5, Factor{Trig::Sin, p + q}}, {-0.5, Factor{Trig::Sin, p - q}}};
        else
          parts = {{0.5, Factor{Trig::Cos, p - q}}, {0.5, Factor{Trig::Cos, p + q}}};
      }
      std::vector<Term> next;
      next.reserve(acc.size() * parts.size());
      for (const Term& t : acc)
        for (const auto& [c, f] : parts) {
          Term nt = t;
          nt.coef *= c;
          nt.trig[i] = f;
          next.push_back(std::move(nt));
        }
      acc = std::move(next);
    }
    for (Term& t : acc) out.push_back(std::move(t));
  }

  void canonicalize() {
    using Key = std::pair<std::vector<int>, std::vector<std::pair<int, double>>>;
    std::map<Key, double> combined;
    for (Term& t : terms_) {
      double coef = t.coef;
      bool alive = coef != 0.0;
      for (Factor& f : t.trig)
        if (!normalize_factor(f, coef)) {
          alive = false;
          break;
        }
      if (!alive || coef == 0.0) continue;
      Key key;
      key.first = t.pow;
      key.second.reserve(t.trig.size());
      for (const Factor& f : t.trig)
        key.second.emplace_back(static_cast<int>(f.kind), f.kind == Trig::None ? 0.0 : f.freq);
      combined[std::move(key)] += coef;
    }
    terms_.clear();
    for (const auto& [key, coef] : combined) {
      if (coef == 0.0) continue;
      Term t;
      t.coef = coef;
      t.pow = key.first;
      t.trig.reserve(key.second.size());
      for (const auto& [kind, freq] : key.second)
        t.trig.push_back(Factor{static_cast<Trig>(kind), freq});
      terms_.push_back(std::move(t));
    }
  }

  int n_;
  int degree_cap_ = 16;
  std::vector<Term> terms_;
};

}  // namespace fsde
