#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fsde/rng.hpp"
#include "fsde/vfields.hpp"

using namespace fsde;
using Catch::Approx;

namespace {

SmoothField random_poly_field(GaussianStream& g, int n, int max_deg) {
  std::vector<TrigPoly> comps;
  for (int c = 0; c < n; ++c) {
    TrigPoly p(n);
    int terms = 1 + static_cast<int>(g.next_u64() % 2);
    for (int t = 0; t < terms; ++t) {
      TrigPoly term = TrigPoly::constant(n, static_cast<double>(static_cast<int>(g.next_u64() % 5) - 2));
      for (int i = 0; i < n; ++i) {
        int deg = static_cast<int>(g.next_u64() % (max_deg + 1));
        if (deg > 0) term = term * TrigPoly::monomial(n, i, deg, 1.0);
      }
      p = p + term;
    }
    comps.push_back(std::move(p));
  }
  return SmoothField(n, std::move(comps));
}

/// Finite-difference oracle for the bracket: (db a - da b)(x).
Eigen::VectorXd bracket_fd(const SmoothField& a, const SmoothField& b, const Eigen::VectorXd& x) {
  const int n = a.dim();
  const double h = 1e-6;
  Eigen::MatrixXd da(n, n), db(n, n);
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    da.col(j) = (a.eval(xp) - a.eval(xm)) / (2 * h);
    db.col(j) = (b.eval(xp) - b.eval(xm)) / (2 * h);
  }
  return db * a.eval(x) - da * b.eval(x);
}

}  // namespace

TEST_CASE("bracket closed forms") {
  const int n = 3;
  SmoothField c1(n, {TrigPoly::constant(n, 2.0), TrigPoly::constant(n, -1.0), TrigPoly(n)});
  SmoothField c2(n, {TrigPoly(n), TrigPoly::constant(n, 3.0), TrigPoly::constant(n, 1.0)});
  CHECK(lie_bracket(c1, c2).is_zero());

  // Heisenberg: [V1, V2] = (0,0,1)
  VectorFieldSystem h = make_heisenberg();
  SmoothField b12 = lie_bracket(h.fields[0], h.fields[1]);
  Eigen::VectorXd x(3);
  x << 0.3, -0.7, 2.0;
  Eigen::VectorXd v = b12.eval(x);
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 0.0);
  CHECK(v[2] == 1.0);
}

TEST_CASE("bracket antisymmetry and Jacobi hold symbolically") {
  GaussianStream g(77, 0);
  for (int rep = 0; rep < 15; ++rep) {
    int n = 2 + static_cast<int>(g.next_u64() % 2);
    SmoothField a = random_poly_field(g, n, 2);
    SmoothField b = random_poly_field(g, n, 2);
    SmoothField c = random_poly_field(g, n, 2);
    CHECK(lie_bracket(a, a).is_zero());
    SmoothField anti = lie_bracket(a, b) + lie_bracket(b, a);
    CHECK(anti.is_zero());
    SmoothField jac = lie_bracket(a, lie_bracket(b, c)) + lie_bracket(b, lie_bracket(c, a)) +
                      lie_bracket(c, lie_bracket(a, b));
    CHECK(jac.is_zero());
  }
}

TEST_CASE("bracket against the finite-difference oracle") {
  GaussianStream g(78, 0);
  for (int rep = 0; rep < 10; ++rep) {
    SmoothField a = random_poly_field(g, 2, 2);
    SmoothField b = random_poly_field(g, 2, 2);
    SmoothField br = lie_bracket(a, b);
    Eigen::VectorXd x(2);
    x << 0.4 * g.normal(), 0.4 * g.normal();
    Eigen::VectorXd sym = br.eval(x);
    Eigen::VectorXd fd = bracket_fd(a, b, x);
    CHECK((sym - fd).norm() < 1e-4 * (1.0 + sym.norm()));
  }
}

TEST_CASE("bracket table by induction") {
  SECTION("commuting constant fields vanish beyond length 1") {
    VectorFieldSystem sys = make_commuting();
    BracketTable t(sys.fields, 2);
    for (const Word& w : enumerate_words(2, 3, false))
      if (w.length() >= 2) CHECK(t.entry(w).is_zero());
  }
  SECTION("heisenberg level-2 entries") {
    VectorFieldSystem sys = make_heisenberg();
    Eigen::VectorXd x(3);
    x << 1.0, 2.0, 3.0;
    Eigen::VectorXd v = sys.table.entry(Word{1, 2}).eval(x);
    CHECK(v.isApprox(Eigen::Vector3d(0, 0, 1)));
    Eigen::VectorXd w = sys.table.entry(Word{2, 1}).eval(x);
    CHECK(w.isApprox(Eigen::Vector3d(0, 0, -1)));
    for (const Word& u : enumerate_words(2, 3, false))
      if (u.length() == 3) CHECK(sys.table.entry(u).is_zero());
  }
  SECTION("d = 1 gives [V,V] = 0") {
    VectorFieldSystem sys = make_constant1d();
    CHECK(sys.table.entry(Word{1, 1}).is_zero());
  }
}

TEST_CASE("structure functions: commuting and heisenberg have exact zero tops") {
  VectorFieldSystem c = make_commuting();
  CHECK(c.fit_report.ufg_ok);
  CHECK(c.fit_report.max_relative_residual == 0.0);
  CHECK(c.sf.all_symbolic());
  for (const Word& w : enumerate_words(2, 2, false))
    if (static_cast<int>(w.length()) == 2) {
      Eigen::VectorXd row = c.sf.eval_row(w, Eigen::VectorXd::Zero(2));
      CHECK(row.norm() == 0.0);
    }

  VectorFieldSystem h = make_heisenberg();
  CHECK(h.fit_report.ufg_ok);
  CHECK(h.sf.all_symbolic());
}

TEST_CASE("omega is the Kronecker delta for short words") {
  VectorFieldSystem h = make_heisenberg();
  Eigen::VectorXd x = Eigen::VectorXd::Random(3);
  for (const Word& w : h.words.words()) {
    Eigen::VectorXd row = h.sf.eval_row(w, x);
    for (std::size_t j = 0; j < h.words.size(); ++j)
      CHECK(row[static_cast<Eigen::Index>(j)] == (h.words.word(j) == w ? 1.0 : 0.0));
  }
}

TEST_CASE("trig elliptic pair closes exactly at level 3") {
  VectorFieldSystem sys = make_trig_elliptic();
  CHECK(sys.level == 3);
  CHECK(sys.fit_report.ufg_ok);
  CHECK(sys.sf.all_symbolic());

  // residual of the bracket expansion at 100 random points
  GaussianStream g(79, 0);
  for (int rep = 0; rep < 100; ++rep) {
    Eigen::VectorXd x(2);
    x << 2.0 * g.normal(), 2.0 * g.normal();
    for (const Word& I : enumerate_words(2, 4, false)) {
      if (static_cast<int>(I.length()) != 4) continue;
      Eigen::VectorXd lhs = sys.table.entry(I).eval(x);
      Eigen::VectorXd row = sys.sf.eval_row(I, x);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(2);
      for (std::size_t j = 0; j < sys.words.size(); ++j)
        rhs += row[static_cast<Eigen::Index>(j)] * sys.table.entry(sys.words.word(j)).eval(x);
      CHECK((lhs - rhs).norm() <= 1e-8 * (1.0 + lhs.norm()));
    }
  }

  // genuinely elliptic: V1, V2 span R^2 everywhere
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::VectorXd x(2);
    x << 3.0 * g.normal(), 3.0 * g.normal();
    Eigen::MatrixXd span(2, 2);
    span.col(0) = sys.fields[0].eval(x);
    span.col(1) = sys.fields[1].eval(x);
    CHECK(std::abs(span.determinant()) > 0.5);
  }
}

TEST_CASE("UFG violation is flagged at rank-collapse points") {
  // V1 = (1,0), V2 = (0,x1): [V1,V2] = (0,1) leaves the span where x1 = 0
  const int n = 2;
  SmoothField v1(n, {TrigPoly::constant(n, 1.0), TrigPoly(n)});
  SmoothField v2(n, {TrigPoly(n), TrigPoly::variable(n, 0)});
  BracketTable table({v1, v2}, 1);
  std::vector<Eigen::VectorXd> pts;
  Eigen::VectorXd bad(2);
  bad << 0.0, 0.5;
  pts.push_back(bad);
  Eigen::VectorXd good(2);
  good << 1.0, 0.5;
  pts.push_back(good);
  auto [sf, report] = fit_structure_functions(table, 2, 1, pts);
  CHECK_FALSE(report.ufg_ok);
  REQUIRE(report.violations.size() == 2);  // words (1,2) and (2,1), both at x1 = 0
  for (const auto& v : report.violations) CHECK(v.x[0] == 0.0);
  CHECK_FALSE(sf.all_symbolic());
}

TEST_CASE("rescaling") {
  VectorFieldSystem h = make_heisenberg();
  Eigen::VectorXd x = Eigen::VectorXd::Random(3);

  SmoothField same = rescale(h.fields[0], 1.0, 1, 0.7);
  CHECK(same.eval(x).isApprox(h.fields[0].eval(x)));

  // eps = 0.25, |I| = 2, H = 0.5: factor eps^{2H} = 0.25
  SmoothField s = rescale(h.table.entry(Word{1, 2}), 0.25, 2, 0.5);
  CHECK(s.eval(x).isApprox(0.25 * h.table.entry(Word{1, 2}).eval(x)));

  // omega rescaling: eps = 0.5, |I| = 3, |J| = 1, H = 0.5 -> 0.5
  CHECK(omega_eps_scale(0.5, 3, 1, 0.5) == Approx(0.5));
  CHECK_THROWS_AS(rescale(h.fields[0], 0.0, 1, 0.5), std::domain_error);
}

TEST_CASE("field expression parser") {
  TrigPoly p = parse_field_expression("1 + 2*x1^2*x3 - 0.5*x2", 3);
  std::vector<double> x{1.5, 2.0, -1.0};
  CHECK(p.eval(std::span<const double>(x.data(), 3)) ==
        Approx(1.0 + 2.0 * 1.5 * 1.5 * (-1.0) - 0.5 * 2.0));

  TrigPoly q = parse_field_expression("2 + sin(x1)", 2);
  std::vector<double> y{0.7, 0.0};
  CHECK(q.eval(std::span<const double>(y.data(), 2)) == Approx(2.0 + std::sin(0.7)));

  TrigPoly r = parse_field_expression("3*cos(2*x2)*x1", 2);
  std::vector<double> z{2.0, 0.3};
  CHECK(r.eval(std::span<const double>(z.data(), 2)) == Approx(3.0 * std::cos(0.6) * 2.0));

  CHECK(parse_field_expression("0", 2).is_zero());
  CHECK_THROWS(parse_field_expression("x5", 2));
  CHECK_THROWS(parse_field_expression("sin(x1", 2));
}

TEST_CASE("shipped system files parse to the factory systems") {
  namespace fs = std::filesystem;
  fs::path root = fs::path(__FILE__).parent_path().parent_path() / "systems";
  struct Case {
    const char* file;
    VectorFieldSystem expected;
  };
  std::vector<Case> cases;
  cases.push_back({"heisenberg.vf", make_heisenberg()});
  cases.push_back({"commuting.vf", make_commuting()});
  cases.push_back({"constant1d.vf", make_constant1d()});
  cases.push_back({"trig_elliptic.vf", make_trig_elliptic()});
  for (auto& c : cases) {
    INFO(c.file);
    VectorFieldSystem sys = load_system(root / c.file);
    REQUIRE(sys.n == c.expected.n);
    REQUIRE(sys.d == c.expected.d);
    CHECK(sys.level == c.expected.level);
    for (int i = 0; i < sys.d; ++i) CHECK(sys.fields[i] == c.expected.fields[i]);
  }
}

TEST_CASE("degree cap propagates as a hard error") {
  const int n = 1;
  SmoothField big(n, {TrigPoly::monomial(n, 0, 9, 1.0)});
  CHECK_THROWS_AS(lie_bracket(big, big), DegreeCapError);
}
