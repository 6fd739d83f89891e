#pragma once

#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fsde/rng.hpp"
#include "fsde/trigpoly.hpp"
#include "fsde/words.hpp"

namespace fsde {

/// A smooth vector field on R^n with components in the TrigPoly class, so
/// that Lie brackets are exact.
class SmoothField {
 public:
  SmoothField() = default;
  SmoothField(int n, std::vector<TrigPoly> comp) : n_(n), comp_(std::move(comp)) {
    if (static_cast<int>(comp_.size()) != n)
      throw std::invalid_argument("SmoothField: need one component per coordinate");
  }

  static SmoothField zero(int n) {
    return SmoothField(n, std::vector<TrigPoly>(n, TrigPoly(n)));
  }

  int dim() const { return n_; }
  const TrigPoly& component(int i) const { return comp_.at(i); }

  bool is_zero() const {
    for (const auto& c : comp_)
      if (!c.is_zero()) return false;
    return true;
  }

  SmoothField operator+(const SmoothField& o) const {
    std::vector<TrigPoly> out;
    out.reserve(comp_.size());
    for (int i = 0; i < n_; ++i) out.push_back(comp_[i] + o.comp_.at(i));
    return SmoothField(n_, std::move(out));
  }

  SmoothField scaled(double c) const {
    std::vector<TrigPoly> out;
    out.reserve(comp_.size());
    for (const auto& p : comp_) out.push_back(p.scaled(c));
    return SmoothField(n_, std::move(out));
  }

  Eigen::VectorXd eval(const Eigen::VectorXd& x) const {
    Eigen::VectorXd v(n_);
    std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    for (int i = 0; i < n_; ++i) v[i] = comp_[i].eval(xs);
    return v;
  }

  /// d component_i / d x_j, exact.
  TrigPoly partial(int i, int j) const { return comp_.at(i).derivative(j); }

  bool operator==(const SmoothField& o) const { return n_ == o.n_ && comp_ == o.comp_; }

 private:
  int n_ = 0;
  std::vector<TrigPoly> comp_;
};

/// [a,b] = (derivative of b) a - (derivative of a) b, computed symbolically.
inline SmoothField lie_bracket(const SmoothField& a, const SmoothField& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("lie_bracket: dimension mismatch");
  const int n = a.dim();
  std::vector<TrigPoly> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    TrigPoly acc(n);
    for (int j = 0; j < n; ++j) {
      acc = acc + b.partial(i, j) * a.component(j);
      acc = acc - a.partial(i, j) * b.component(j);
    }
    out.push_back(std::move(acc));
  }
  return SmoothField(n, std::move(out));
}

/// V_{[j]} = V_j, V_{[I*j]} = [V_{[I]}, V_j], for all words up to length
/// level+1.
class BracketTable {
 public:
  BracketTable() = default;
  BracketTable(const std::vector<SmoothField>& fields, int level) : level_(level) {
    if (level < 1) throw std::invalid_argument("BracketTable: level must be >= 1");
    const int d = static_cast<int>(fields.size());
    for (int j = 1; j <= d; ++j) entries_[Word{j}] = fields[j - 1];
    for (const Word& w : enumerate_words(d, level + 1, false)) {
      if (w.length() < 2) continue;
      Word head(std::vector<int>(w.letters().begin(), w.letters().end() - 1));
      int last = w.letters().back();
      entries_[w] = lie_bracket(entries_.at(head), fields[last - 1]);
    }
  }

  int level() const { return level_; }
  const SmoothField& entry(const Word& w) const {
    auto it = entries_.find(w);
    if (it == entries_.end()) throw std::out_of_range("BracketTable: no entry for " + to_string(w));
    return it->second;
  }
  bool contains(const Word& w) const { return entries_.count(w) > 0; }

 private:
  int level_ = 0;
  std::map<Word, SmoothField> entries_;
};

/// epsilon^{|I| H} rescaling of a field or bracket.
inline SmoothField rescale(const SmoothField& f, double epsilon, int word_length, double H) {
  if (!(epsilon > 0.0 && epsilon <= 1.0))
    throw std::domain_error("rescale: epsilon must be in (0,1]");
  return f.scaled(std::pow(epsilon, word_length * H));
}

/// omega^{J,eps}_I = eps^{(|I|-|J|)H} omega^J_I.
inline double omega_eps_scale(double epsilon, int len_I, int len_J, double H) {
  return std::pow(epsilon, static_cast<double>(len_I - len_J) * H);
}

/// Structure functions omega^J_I expanding brackets in the frame A1(l):
/// for |I| <= l they are the Kronecker delta; for |I| = l+1 a row per word,
/// symbolic when the fit found an exact closed form in the class.
class StructureFunctions {
 public:
  StructureFunctions() = default;
  StructureFunctions(int d, int level) : level_(level), frame_(WordIndex::a1(d, level)) {}

  int level() const { return level_; }
  const WordIndex& frame() const { return frame_; }

  void set_top_row(const Word& I, std::vector<TrigPoly> row, bool symbolic) {
    top_rows_[I] = std::move(row);
    top_symbolic_[I] = symbolic;
  }

  bool has_symbolic_row(const Word& I) const {
    auto it = top_symbolic_.find(I);
    return it != top_symbolic_.end() && it->second;
  }

  /// All length-(l+1) rows admit closed forms, so the beta system can be
  /// integrated at arbitrary states.
  bool all_symbolic() const {
    for (const auto& [w, sym] : top_symbolic_)
      if (!sym) return false;
    return !top_symbolic_.empty() || frame_.size() == 0;
  }

  /// omega^J_I as a function, valid for |I| <= l (delta) or symbolic top rows.
  const TrigPoly& top_entry(const Word& I, std::size_t j_index) const {
    return top_rows_.at(I).at(j_index);
  }

  /// Row of omega^J_I(x) over J in A1(l). For |I| <= l this is the delta row.
  Eigen::VectorXd eval_row(const Word& I, const Eigen::VectorXd& x) const {
    Eigen::VectorXd row = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(frame_.size()));
    if (static_cast<int>(I.length()) <= level_) {
      row[static_cast<Eigen::Index>(frame_.index(I))] = 1.0;
      return row;
    }
    auto it = top_rows_.find(I);
    if (it == top_rows_.end())
      throw std::out_of_range("StructureFunctions: no row for " + to_string(I));
    if (!has_symbolic_row(I))
      throw std::runtime_error("StructureFunctions: row for " + to_string(I) +
                               " has no closed form; only pointwise fits are available");
    std::span<const double> xs(x.data(), static_cast<std::size_t>(x.size()));
    for (std::size_t j = 0; j < frame_.size(); ++j) row[static_cast<Eigen::Index>(j)] = it->second[j].eval(xs);
    return row;
  }

 private:
  int level_ = 0;
  WordIndex frame_;
  std::map<Word, std::vector<TrigPoly>> top_rows_;
  std::map<Word, bool> top_symbolic_;
};

struct StructurePointDiagnostic {
  Word I;
  Eigen::VectorXd x;
  double residual = 0.0;
  Eigen::VectorXd coeffs;
};

struct StructureFitReport {
  bool ufg_ok = true;
  double max_relative_residual = 0.0;
  std::vector<StructurePointDiagnostic> violations;
  std::vector<StructurePointDiagnostic> pointwise_fits;  // rows without closed form
};

/// Expands every length-(l+1) bracket over the frame A1(l). Exact routes:
/// the bracket vanishes, or it is a constant multiple of a frame entry.
/// Otherwise least squares is solved at each sample point; the UFG
/// assumption is only ever verified pointwise at those points.
inline std::pair<StructureFunctions, StructureFitReport> fit_structure_functions(
    const BracketTable& table, int d, int level, const std::vector<Eigen::VectorXd>& points,
    double tol = 1e-8) {
  if (table.level() < level)
    throw std::invalid_argument("fit_structure_functions: table level too small");
  StructureFunctions sf(d, level);
  StructureFitReport report;
  const WordIndex& frame = sf.frame();
  const std::size_t A = frame.size();

  for (const Word& I : enumerate_words(d, level + 1, false)) {
    if (static_cast<int>(I.length()) != level + 1) continue;
    const SmoothField& target = table.entry(I);

    if (target.is_zero()) {
      sf.set_top_row(I, std::vector<TrigPoly>(A, TrigPoly(target.dim())), true);
      continue;
    }

    // constant multiple of a single frame entry
    bool matched = false;
    for (std::size_t j = 0; j < A && !matched; ++j) {
      const SmoothField& cand = table.entry(frame.word(j));
      if (cand.is_zero()) continue;
      std::optional<double> ratio;
      bool plausible = true;
      for (int c = 0; c < target.dim() && plausible; ++c) {
        const auto& tt = target.component(c).terms();
        const auto& ct = cand.component(c).terms();
        if (tt.empty() != ct.empty()) {
          if (!tt.empty()) plausible = false;
          continue;
        }
        if (tt.empty()) continue;
        if (!ratio) ratio = tt[0].coef / ct[0].coef;
      }
      if (!plausible || !ratio) continue;
      SmoothField diff = target + cand.scaled(-*ratio);
      if (diff.is_zero()) {
        std::vector<TrigPoly> row(A, TrigPoly(target.dim()));
        row[j] = TrigPoly::constant(target.dim(), *ratio);
        sf.set_top_row(I, std::move(row), true);
        matched = true;
      }
    }
    if (matched) continue;

    // pointwise least squares
    sf.set_top_row(I, std::vector<TrigPoly>(A, TrigPoly(target.dim())), false);
    for (const Eigen::VectorXd& x : points) {
      Eigen::MatrixXd Amat(target.dim(), static_cast<Eigen::Index>(A));
      for (std::size_t j = 0; j < A; ++j)
        Amat.col(static_cast<Eigen::Index>(j)) = table.entry(frame.word(j)).eval(x);
      Eigen::VectorXd b = target.eval(x);
      Eigen::VectorXd c = Amat.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(b);
      double res = (Amat * c - b).norm();
      double rel = res / (1.0 + b.norm());
      report.max_relative_residual = std::max(report.max_relative_residual, rel);
      StructurePointDiagnostic diag{I, x, rel, c};
      if (rel > tol) {
        report.ufg_ok = false;
        report.violations.push_back(diag);
      }
      report.pointwise_fits.push_back(std::move(diag));
    }
  }
  return {std::move(sf), std::move(report)};
}

/// A complete driving system: fields, bracket table to level+1, structure
/// functions, and the word order used by every downstream matrix.
struct VectorFieldSystem {
  std::string name;
  int n = 0;
  int d = 0;
  int level = 1;
  std::vector<SmoothField> fields;
  BracketTable table;
  StructureFunctions sf;
  StructureFitReport fit_report;
  WordIndex words;  // A1(level)

  const SmoothField& bracket(const Word& w) const { return table.entry(w); }
};

/// Deterministic sample cloud for pointwise UFG verification.
inline std::vector<Eigen::VectorXd> default_sample_points(int n, int count = 32,
                                                          double radius = 1.0,
                                                          std::uint64_t seed = 0x5eedba11u) {
  std::vector<Eigen::VectorXd> pts;
  pts.reserve(count);
  GaussianStream g(seed, 0);
  pts.push_back(Eigen::VectorXd::Zero(n));
  for (int i = 1; i < count; ++i) {
    Eigen::VectorXd x(n);
    for (int j = 0; j < n; ++j) x[j] = radius * g.normal();
    pts.push_back(std::move(x));
  }
  return pts;
}

inline VectorFieldSystem make_system(std::string name, int level,
                                     std::vector<SmoothField> fields,
                                     std::vector<Eigen::VectorXd> sample_points = {}) {
  VectorFieldSystem sys;
  sys.name = std::move(name);
  sys.d = static_cast<int>(fields.size());
  if (sys.d < 1) throw std::invalid_argument("make_system: need at least one field");
  sys.n = fields[0].dim();
  sys.level = level;
  sys.fields = std::move(fields);
  sys.table = BracketTable(sys.fields, level);
  if (sample_points.empty()) sample_points = default_sample_points(sys.n);
  auto [sf, report] = fit_structure_functions(sys.table, sys.d, level, sample_points);
  sys.sf = std::move(sf);
  sys.fit_report = std::move(report);
  sys.words = WordIndex::a1(sys.d, level);
  return sys;
}

// ---------------------------------------------------------------------------
// Text format for field definitions: "n", "d", "level", optional "name",
// then one component per line:  V<i>.<r>  <expression>
// with expression a sum of terms like  2*x1^2*sin(3*x2)  or  -0.5*x3.
// ---------------------------------------------------------------------------

namespace detail {

class TermParser {
 public:
  TermParser(std::string text, int n) : text_(std::move(text)), n_(n) {}

  TrigPoly parse() {
    TrigPoly acc(n_);
    skip_ws();
    bool first = true;
    while (pos_ < text_.size()) {
      double sign = 1.0;
      if (peek() == '+' || peek() == '-') {
        sign = peek() == '-' ? -1.0 : 1.0;
        ++pos_;
      } else if (!first) {
        throw std::runtime_error("field expression: expected '+' or '-' near \"" +
                                 text_.substr(pos_) + "\"");
      }
      acc = acc + parse_product().scaled(sign);
      skip_ws();
      first = false;
    }
    return acc;
  }

 private:
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  TrigPoly parse_product() {
    TrigPoly acc = parse_factor();
    skip_ws();
    while (peek() == '*') {
      ++pos_;
      skip_ws();
      acc = acc * parse_factor();
      skip_ws();
    }
    return acc;
  }

  TrigPoly parse_factor() {
    skip_ws();
    if (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.') {
      return TrigPoly::constant(n_, parse_number());
    }
    if (text_.compare(pos_, 4, "sin(") == 0 || text_.compare(pos_, 4, "cos(") == 0) {
      bool is_sin = text_[pos_] == 's';
      pos_ += 4;
      double freq = 1.0;
      skip_ws();
      if (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.') {
        freq = parse_number();
        skip_ws();
        if (peek() != '*') throw std::runtime_error("field expression: expected '*' inside trig");
        ++pos_;
        skip_ws();
      }
      int var = parse_var();
      skip_ws();
      if (peek() != ')') throw std::runtime_error("field expression: expected ')'");
      ++pos_;
      return TrigPoly::trig(n_, var, is_sin ? TrigPoly::Trig::Sin : TrigPoly::Trig::Cos, freq);
    }
    if (peek() == 'x') {
      int var = parse_var();
      int power = 1;
      if (peek() == '^') {
        ++pos_;
        power = static_cast<int>(parse_number());
      }
      return TrigPoly::monomial(n_, var, power, 1.0);
    }
    throw std::runtime_error("field expression: cannot parse near \"" + text_.substr(pos_) + "\"");
  }

  int parse_var() {
    if (peek() != 'x') throw std::runtime_error("field expression: expected variable");
    ++pos_;
    std::size_t start = pos_;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    int idx = std::stoi(text_.substr(start, pos_ - start));
    if (idx < 1 || idx > n_) throw std::runtime_error("field expression: variable out of range");
    return idx - 1;
  }

  double parse_number() {
    std::size_t start = pos_;
    while (pos_ < text_.size() &&
           (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
            text_[pos_] == 'e' || text_[pos_] == 'E' ||
            ((text_[pos_] == '+' || text_[pos_] == '-') &&
             (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E'))))
      ++pos_;
    return std::stod(text_.substr(start, pos_ - start));
  }

  std::string text_;
  int n_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline TrigPoly parse_field_expression(const std::string& text, int n) {
  return detail::TermParser(text, n).parse();
}

inline VectorFieldSystem load_system(const std::filesystem::path& path,
                                     std::vector<Eigen::VectorXd> sample_points = {}) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_system: cannot open " + path.string());
  int n = 0, d = 0, level = 0;
  std::string name = path.stem().string();
  std::map<std::pair<int, int>, std::string> comps;
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    if (key == "n")
      ls >> n;
    else if (key == "d")
      ls >> d;
    else if (key == "level")
      ls >> level;
    else if (key == "name")
      ls >> name;
    else if (key.size() >= 4 && key[0] == 'V') {
      auto dot = key.find('.');
      if (dot == std::string::npos) throw std::runtime_error("load_system: bad component key " + key);
      int fi = std::stoi(key.substr(1, dot - 1));
      int ci = std::stoi(key.substr(dot + 1));
      std::string rest;
      std::getline(ls, rest);
      comps[{fi, ci}] = rest;
    } else {
      throw std::runtime_error("load_system: unknown key " + key);
    }
  }
  if (n < 1 || d < 1 || level < 1)
    throw std::runtime_error("load_system: need n >= 1, d >= 1, level >= 1 in " + path.string());
  std::vector<SmoothField> fields;
  for (int fi = 1; fi <= d; ++fi) {
    std::vector<TrigPoly> cs;
    for (int ci = 1; ci <= n; ++ci) {
      auto it = comps.find({fi, ci});
      cs.push_back(it == comps.end() ? TrigPoly(n) : parse_field_expression(it->second, n));
    }
    fields.emplace_back(n, std::move(cs));
  }
  return make_system(name, level, std::move(fields), std::move(sample_points));
}

// Shipped example systems, also available programmatically for tests.

inline VectorFieldSystem make_heisenberg() {
  // V1 = (1,0,0), V2 = (0,1,x1); all length-3 brackets vanish, level 2.
  const int n = 3;
  SmoothField v1(n, {TrigPoly::constant(n, 1.0), TrigPoly(n), TrigPoly(n)});
  SmoothField v2(n, {TrigPoly(n), TrigPoly::constant(n, 1.0), TrigPoly::variable(n, 0)});
  return make_system("heisenberg", 2, {v1, v2});
}

inline VectorFieldSystem make_commuting() {
  const int n = 2;
  SmoothField v1(n, {TrigPoly::constant(n, 1.0), TrigPoly(n)});
  SmoothField v2(n, {TrigPoly(n), TrigPoly::constant(n, 1.0)});
  return make_system("commuting", 1, {v1, v2});
}

inline VectorFieldSystem make_constant1d(double c = 1.0) {
  SmoothField v(1, {TrigPoly::constant(1, c)});
  return make_system("constant1d", 1, {v});
}

inline VectorFieldSystem make_trig_elliptic() {
  // V1 = (1,0), V2 = (0, 2 + sin x1): bounded with bounded derivatives and
  // elliptic; closes exactly at level 3 with constant structure functions.
  const int n = 2;
  SmoothField v1(n, {TrigPoly::constant(n, 1.0), TrigPoly(n)});
  SmoothField v2(n, {TrigPoly(n), TrigPoly::constant(n, 2.0) +
                                      TrigPoly::trig(n, 0, TrigPoly::Trig::Sin, 1.0)});
  return make_system("trig_elliptic", 3, {v1, v2});
}

}  // namespace fsde
