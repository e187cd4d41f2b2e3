#include <catch_amalgamated.hpp>

#include <random>

#include "embercap/meanfield.hpp"

using namespace embercap;
using namespace embercap::meanfield;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

TightBindingModel chain(int n, double t, int n_up, int n_dn, double width = 0.05) {
  TightBindingModel m;
  m.onsite = Eigen::VectorXd::Zero(n);
  m.site_positions.clear();
  for (int i = 0; i < n; ++i) m.site_positions.push_back({static_cast<double>(i), 0, 0});
  for (int i = 0; i + 1 < n; ++i) m.bonds.push_back({i, i + 1, t});
  m.n_up = n_up;
  m.n_dn = n_dn;
  m.smearing_width = width;
  m.basis_tag = "chain" + std::to_string(n);
  return m;
}

TightBindingModel random_model(std::mt19937& rng, int n, double width) {
  std::uniform_real_distribution<double> on(-0.5, 0.5), tt(-1.5, -0.5), u01(0, 1);
  TightBindingModel m = chain(n, -1.0, 0, 0, width);
  for (int i = 0; i < n; ++i) m.onsite[i] = on(rng);
  for (auto& b : m.bonds) b.t = tt(rng);
  // A few extra random bonds.
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int k = 0; k < n / 3; ++k) {
    int i = pick(rng), j = pick(rng);
    if (i == j) continue;
    bool dup = false;
    for (const auto& b : m.bonds)
      if ((b.i == i && b.j == j) || (b.i == j && b.j == i)) dup = true;
    if (!dup) m.bonds.push_back({i, j, tt(rng)});
  }
  int n_elec = n;  // half filling
  m.n_up = (n_elec + 1) / 2;
  m.n_dn = n_elec / 2;
  m.basis_tag = "random" + std::to_string(n);
  return m;
}

double finite_difference_energy_slope(const TightBindingModel& m, int site, double h,
                                      const SolveOptions& opts = {}) {
  auto v = zero_potential(m);
  v.values[site] = h;
  double ep = solve(m, v, opts).energy;
  v.values[site] = -h;
  double em = solve(m, v, opts).energy;
  return (ep - em) / (2 * h);
}

}  // namespace

TEST_CASE("single site holds one electron at its onsite energy") {
  TightBindingModel m;
  m.onsite = Eigen::VectorXd::Constant(1, -0.7);
  m.site_positions = {{0, 0, 0}};
  m.n_up = 1;
  m.n_dn = 0;
  m.smearing_width = 0.0;
  auto res = solve(m);
  CHECK_THAT(res.energy, WithinAbs(-0.7, 1e-14));
  CHECK_THAT(res.density()[0], WithinAbs(1.0, 1e-14));
}

TEST_CASE("symmetric dimer at half filling") {
  // 2x2 analytic oracle: eigenvalues -t, +t for onsite 0 and hopping t = -1;
  // two electrons in the bonding level give E = -2 and density (1, 1).
  TightBindingModel m = chain(2, -1.0, 1, 1, 0.0);
  auto res = solve(m);
  CHECK_THAT(res.energy, WithinAbs(-2.0, 1e-12));
  CHECK_THAT(res.density()[0], WithinAbs(1.0, 1e-12));
  CHECK_THAT(res.density()[1], WithinAbs(1.0, 1e-12));
}

TEST_CASE("biased dimer shifts density and obeys Hellmann-Feynman") {
  TightBindingModel m = chain(2, -1.0, 1, 1, 0.0);
  auto v = zero_potential(m);
  double delta = 0.1;
  v.values << delta, -delta;
  auto res = solve(m, v);
  CHECK(res.density()[1] > res.density()[0]);

  // Analytic 2x2 oracle: eigenvector of [[d,-1],[-1,-d]].
  double E0 = -std::sqrt(1.0 + delta * delta);
  CHECK_THAT(res.energy, WithinAbs(2 * E0, 1e-12));

  // dE/dv_i = rho_i against central finite differences.
  TightBindingModel biased = m;
  biased.onsite = v.values;
  for (int site = 0; site < 2; ++site) {
    double fd = finite_difference_energy_slope(biased, site, 1e-5);
    CHECK_THAT(solve(biased).density()[site], WithinRel(fd, 1e-6));
  }
}

TEST_CASE("Hellmann-Feynman holds on random models at several widths") {
  std::mt19937 rng(42);
  for (double width : {0.05, 0.2}) {
    for (int trial = 0; trial < 4; ++trial) {
      TightBindingModel m = random_model(rng, 8, width);
      std::uniform_int_distribution<int> pick(0, 7);
      int site = pick(rng);
      double fd = finite_difference_energy_slope(m, site, 1e-5);
      double rho = solve(m).density()[site];
      CHECK_THAT(rho, WithinRel(fd, 1e-6));
    }
  }
}

TEST_CASE("Hellmann-Feynman holds with interaction through SCF") {
  std::mt19937 rng(43);
  TightBindingModel m = random_model(rng, 6, 0.1);
  m.interaction_u = Eigen::VectorXd::Constant(6, 0.8);
  m.spin_mode = SpinMode::Unrestricted;
  SolveOptions opts;
  opts.scf_tol = 1e-13;
  opts.scf_max_iter = 3000;
  for (int site : {0, 3}) {
    double fd = finite_difference_energy_slope(m, site, 1e-5, opts);
    auto res = solve(m, opts);
    REQUIRE(res.converged);
    CHECK_THAT(res.density()[site], WithinRel(fd, 1e-6));
  }
}

TEST_CASE("constant shift adds c*N to the energy and leaves density fixed") {
  std::mt19937 rng(44);
  TightBindingModel m = random_model(rng, 7, 0.05);
  auto base = solve(m);
  for (double c : {-3.0, 0.7}) {
    auto v = zero_potential(m);
    v.values.setConstant(c);
    auto shifted = solve(m, v);
    CHECK_THAT(shifted.energy, WithinAbs(base.energy + c * m.n_electrons(), 1e-10));
    CHECK((shifted.density() - base.density()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("restricted and unrestricted coincide for closed shells") {
  std::mt19937 rng(45);
  TightBindingModel m = random_model(rng, 8, 0.05);
  m.n_up = m.n_dn = 4;
  m.spin_mode = SpinMode::Restricted;
  auto r = solve(m);
  m.spin_mode = SpinMode::Unrestricted;
  auto u = solve(m);
  CHECK_THAT(r.energy, WithinAbs(u.energy, 1e-10));
  CHECK((r.density() - u.density()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("density sums to the electron count") {
  std::mt19937 rng(46);
  for (double width : {0.0, 0.1}) {
    TightBindingModel m = random_model(rng, 9, width);
    auto res = solve(m);
    CHECK_THAT(res.density().sum(), WithinAbs(m.n_electrons(), 1e-10));
    CHECK(res.density_up.minCoeff() >= 0.0);
    CHECK(res.density_up.maxCoeff() <= 1.0 + 1e-12);
  }
}

TEST_CASE("SCF reaches tight self-consistency and flags failure honestly") {
  TightBindingModel m = chain(4, -1.0, 2, 2, 0.1);
  m.onsite << 0.3, -0.2, 0.1, 0.4;  // break particle-hole symmetry so SCF iterates
  m.interaction_u = Eigen::VectorXd::Constant(4, 1.2);
  m.spin_mode = SpinMode::Unrestricted;
  SolveOptions opts;
  opts.scf_tol = 1e-11;
  opts.scf_max_iter = 2000;
  auto res = solve(m, opts);
  CHECK(res.converged);
  CHECK(res.scf_iterations > 1);

  opts.scf_max_iter = 2;
  auto bad = solve(m, opts);
  CHECK_FALSE(bad.converged);
}

TEST_CASE("degenerate Fermi level at zero width demands smearing") {
  // Triangle ring: levels -2t, +t, +t. Four electrons leave the boundary on
  // the degenerate pair.
  TightBindingModel m = chain(3, -1.0, 2, 2, 0.0);
  m.bonds.push_back({0, 2, -1.0});
  CHECK_THROWS_WITH(solve(m), Catch::Matchers::ContainsSubstring("smearing"));
  m.smearing_width = 0.05;
  CHECK_THAT(solve(m).density().sum(), WithinAbs(4.0, 1e-10));
}

TEST_CASE("capped fragment of a 4-site chain has one cut and three sites") {
  TightBindingModel m = chain(4, -1.0, 2, 2);
  auto capped = capped_model(m, {0, 1}, 1, 1);
  CHECK(capped.model.n_sites() == 3);
  REQUIRE(capped.severed.size() == 1);
  CHECK(capped.severed[0].inside == 1);
  CHECK(capped.severed[0].outside == 2);
  CHECK(capped.shared_index == std::vector<int>{0, 1, 2});
  CHECK(capped.model.n_electrons() == 3);
  // Cap carries the severed hopping.
  bool found = false;
  for (const auto& b : capped.model.bonds)
    if (b.j == 2 && b.t == -1.0) found = true;
  CHECK(found);
}

TEST_CASE("complementary environment and auxiliary pair") {
  TightBindingModel m = chain(4, -1.0, 2, 2);
  auto env = capped_model(m, {2, 3}, 1, 1);
  CHECK(env.model.n_sites() == 3);
  CHECK(env.severed.size() == 1);
  auto aux = auxiliary_model(m, env.severed);
  CHECK(aux.model.n_sites() == 2);
  CHECK(aux.model.n_electrons() == 2);
  REQUIRE(aux.model.bonds.size() == 1);
  CHECK(aux.model.bonds[0].t == -1.0);
}

TEST_CASE("ring fragment severs two bonds") {
  // Hand enumeration: cutting {0,1,2} out of a 6-ring severs (2,3) and (0,5).
  TightBindingModel m = chain(6, -1.0, 3, 3);
  m.bonds.push_back({0, 5, -1.0});
  auto capped = capped_model(m, {0, 1, 2}, 2, 1);
  CHECK(capped.model.n_sites() == 5);
  REQUIRE(capped.severed.size() == 2);
  CHECK(capped.severed[0].inside == 0);
  CHECK(capped.severed[0].outside == 5);
  CHECK(capped.severed[1].inside == 2);
  CHECK(capped.severed[1].outside == 3);
  auto aux = auxiliary_model(m, capped.severed);
  CHECK(aux.model.n_sites() == 4);
  CHECK(aux.model.bonds.size() == 2);
  CHECK(aux.model.n_electrons() == 4);
}

TEST_CASE("model files round trip and report malformed lines") {
  TightBindingModel m = chain(4, -1.0, 2, 2, 0.05);
  m.interaction_u = Eigen::VectorXd::Constant(4, 0.5);
  std::string text = emit_model_file(m);
  TightBindingModel back = parse_model_file(text);
  CHECK(back.n_sites() == 4);
  CHECK(back.bonds.size() == m.bonds.size());
  CHECK(back.n_up == 2);
  CHECK(back.smearing_width == 0.05);
  CHECK(emit_model_file(back) == text);

  auto line_of = [](const std::string& t) {
    try {
      parse_model_file(t);
    } catch (const ParseError& e) {
      return e.line();
    }
    return -1;
  };
  CHECK(line_of("embercap-model 1\nsites 2\nsite 0 0 0 0 0\nsite 1 0 0 0 zz\nelectrons 2\n") == 4);
  CHECK(line_of("embercap-model 1\nsites 1\nsite 0 0 0 0 0\nbond 0 1\nelectrons 1\n") == 4);
  CHECK(line_of("embercap-model 1\nsites 1\nsite 0 0 0 0 0\nfrobnicate 1\n") == 4);
}

TEST_CASE("model validation catches inconsistent inputs") {
  TightBindingModel m = chain(3, -1.0, 2, 1);
  m.bonds.push_back({0, 1, -0.5});  // duplicate pair
  CHECK_THROWS_AS(validate_model(m), ValidationError);

  TightBindingModel m2 = chain(3, -1.0, 4, 4);  // too many electrons
  CHECK_THROWS_AS(validate_model(m2), ValidationError);
}
