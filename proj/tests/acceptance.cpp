// Acceptance suite: every release criterion checked at its stated tolerance,
// one pass/fail line per criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "chain_fixture.hpp"
#include "embercap/manybody.hpp"
#include "embercap/nvmodel.hpp"
#include "embercap/oep.hpp"
#include "embercap/reports.hpp"
#include "embercap/symmetry.hpp"
#include "grid_oracle.hpp"
#include "nv_fixture.hpp"
#include "secondq_oracle.hpp"

using namespace embercap;

namespace {

struct Check {
  std::vector<std::string> failures;
  int n_checks = 0;

  void expect(bool ok, const std::string& what) {
    ++n_checks;
    if (!ok) failures.push_back(what);
  }
};

int g_failed = 0;

template <typename Fn>
void criterion(int number, const std::string& title, double budget_seconds, Fn&& fn) {
  Check check;
  auto t0 = std::chrono::steady_clock::now();
  try {
    fn(check);
  } catch (const std::exception& e) {
    check.failures.push_back(std::string("exception: ") + e.what());
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > budget_seconds)
    check.failures.push_back("runtime " + std::to_string(secs) + " s exceeds budget " +
                             std::to_string(budget_seconds) + " s");
  if (check.failures.empty()) {
    std::printf("[PASS] %d. %s (%d checks, %.2f s)\n", number, title.c_str(),
                check.n_checks, secs);
  } else {
    ++g_failed;
    std::printf("[FAIL] %d. %s (%.2f s)\n", number, title.c_str(), secs);
    for (const auto& f : check.failures) std::printf("       - %s\n", f.c_str());
  }
  std::fflush(stdout);
}

std::string fmt(double v) { return format_double(v); }

// Random embedding problems for criteria 4 and 5.
oep::EmbeddingProblem random_problem(std::mt19937& rng, int n) {
  std::uniform_real_distribution<double> on(-0.4, 0.4), tt(-1.4, -0.6);
  meanfield::TightBindingModel m;
  m.onsite = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) m.site_positions.push_back({static_cast<double>(i), 0, 0});
  for (int i = 0; i + 1 < n; ++i) m.bonds.push_back({i, i + 1, tt(rng)});
  for (int i = 0; i < n; ++i) m.onsite[i] = on(rng);
  std::uniform_int_distribution<int> pick(0, n - 1);
  for (int k = 0; k < n / 4; ++k) {
    int i = pick(rng), j = pick(rng);
    if (std::abs(i - j) < 2) continue;
    bool dup = false;
    for (const auto& b : m.bonds)
      if ((b.i == std::min(i, j) && b.j == std::max(i, j))) dup = true;
    if (!dup) m.bonds.push_back({std::min(i, j), std::max(i, j), tt(rng)});
  }
  int n_elec = n / 2 * 2;
  m.n_up = n_elec / 2;
  m.n_dn = n_elec / 2;
  m.smearing_width = 0.1;
  m.basis_tag = "acc" + std::to_string(n);

  std::uniform_int_distribution<int> fsize(n / 3, n / 2);
  int size = std::max(2, fsize(rng));
  std::uniform_int_distribution<int> fstart(0, n - size);
  int start = fstart(rng);
  std::set<int> frag;
  for (int i = start; i < start + size; ++i) frag.insert(i);
  double ratio = size / static_cast<double>(n);
  int cl_up = std::min(m.n_up, static_cast<int>(std::lround(m.n_up * ratio)));
  int cl_dn = std::min(m.n_dn, static_cast<int>(std::lround(m.n_dn * ratio)));
  return oep::make_embedding_problem(m, frag, cl_up, cl_dn);
}

manybody::ActiveSpace random_space(std::mt19937& rng, int n_orb, int n_elec) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  manybody::ActiveSpace as;
  as.n_orbitals = n_orb;
  as.n_electrons = n_elec;
  as.h = Eigen::MatrixXd::Zero(n_orb, n_orb);
  for (int p = 0; p < n_orb; ++p)
    for (int q = 0; q <= p; ++q) {
      double v = u(rng);
      as.h(p, q) = v;
      as.h(q, p) = v;
    }
  as.eri = manybody::Eri(n_orb);
  for (int p = 0; p < n_orb; ++p)
    for (int q = 0; q <= p; ++q)
      for (int r = 0; r <= p; ++r)
        for (int s = 0; s <= (r == p ? q : r); ++s) as.eri.set(p, q, r, s, 0.5 * u(rng));
  as.core_energy = u(rng);
  return as;
}

}  // namespace

int main() {
  using partition::cap_selection;
  using partition::select_cluster;

  criterion(1, "capping counts for C15N carved from C62N", 1.0, [](Check& c) {
    auto nv = nvfix::make_nv_case(lattice::diamond_conventional_cell(3.5677), {2, 2, 2});
    auto sel = select_cluster(nv.cell, nv.graph, nvfix::nv_seeds(nv), nvfix::rules_c15());
    auto [cluster, environment] = cap_selection(nv.cell, nv.graph, sel, -1, 3);
    int n_f = 0, n_o = 0, n_b = 0;
    for (const auto& cap : cluster.cap_atoms) {
      if (cap.element == "F") ++n_f;
      if (cap.element == "O") ++n_o;
    }
    for (const auto& cap : environment.cap_atoms)
      if (cap.element == "B") ++n_b;
    c.expect(n_f == 12, "cluster F caps = " + std::to_string(n_f) + ", expected 12");
    c.expect(n_o == 12, "cluster O caps = " + std::to_string(n_o) + ", expected 12");
    c.expect(static_cast<int>(cluster.cap_atoms.size()) == 24, "cluster caps != 24");
    c.expect(n_b == 12, "environment B caps = " + std::to_string(n_b) + ", expected 12");
    c.expect(static_cast<int>(environment.cap_atoms.size()) == 12,
             "environment caps != 12");

    auto aux = partition::auxiliary_fragment(cluster, environment, nv.graph);
    c.expect(aux.components.size() == 4,
             "auxiliary components = " + std::to_string(aux.components.size()));
    for (size_t k = 0; k < aux.components.size(); ++k)
      c.expect(aux.component_composition(static_cast<int>(k)) == "F3O3B3",
               "component " + std::to_string(k) + " is " +
                   aux.component_composition(static_cast<int>(k)));

    Eigen::Matrix3d inv = aux.lattice.transpose().inverse();
    auto dist = [&](int i, int j) {
      Eigen::Vector3d df = inv * (aux.atoms[j].position - aux.atoms[i].position);
      for (int k = 0; k < 3; ++k) df[k] -= std::round(df[k]);
      return (aux.lattice.transpose() * df).norm();
    };
    for (size_t i = 0; i < aux.atoms.size(); ++i) {
      if (aux.atoms[i].element != "B") continue;
      int n_oo = 0, n_ff = 0;
      for (size_t j = 0; j < aux.atoms.size(); ++j) {
        if (i == j || dist(static_cast<int>(i), static_cast<int>(j)) > nv.graph.cutoff)
          continue;
        if (aux.atoms[j].element == "O") ++n_oo;
        if (aux.atoms[j].element == "F") ++n_ff;
      }
      c.expect(n_oo == 2 && n_ff == 1, "a B cap does not bond two O and one F");
    }
  });

  criterion(2, "cluster-family compositions from C126N and C158N", 5.0, [](Check& c) {
    auto c126 = nvfix::make_nv_case(lattice::diamond_primitive_cell(3.5677), {4, 4, 4});
    auto sel21 =
        select_cluster(c126.cell, c126.graph, nvfix::nv_seeds(c126), nvfix::rules_c21());
    auto [cl21, env21] = cap_selection(c126.cell, c126.graph, sel21, -1, 3);
    c.expect(partition::composition(cl21) == "C21NF18O9",
             "C126N cluster is " + partition::composition(cl21));

    auto c158 = nvfix::make_nv_case(lattice::diamond_primitive_cell(3.5677), {4, 4, 5});
    auto compose = [&](const std::vector<partition::GrowthRule>& rules) {
      auto sel = select_cluster(c158.cell, c158.graph, nvfix::nv_seeds(c158), rules);
      auto [cl, env] = cap_selection(c158.cell, c158.graph, sel, -1, 3);
      return partition::composition(cl);
    };
    c.expect(compose(nvfix::rules_c24()) == "C24NF18O12", "C24 family member mismatch");
    c.expect(compose(nvfix::rules_c30(c158)) == "C30NF24O9", "C30 family member mismatch");
    c.expect(compose(nvfix::rules_c36(c158)) == "C36NF30O6", "C36 family member mismatch");
  });

  criterion(3, "C3v symmetry of the ideal capped cluster", 10.0, [](Check& c) {
    auto nv = nvfix::make_nv_case(lattice::diamond_conventional_cell(3.5677), {2, 2, 2});
    auto sel = select_cluster(nv.cell, nv.graph, nvfix::nv_seeds(nv), nvfix::rules_c15());
    auto [cluster, environment] = cap_selection(nv.cell, nv.graph, sel, -1, 3);
    double s = partition::symmetry_measure(cluster, "C3v");
    c.expect(s < 1e-3, "CSM = " + fmt(s) + ", expected < 1e-3");

    partition::CappedFragment bent = cluster;
    bent.native_atoms[7].position += Eigen::Vector3d(0.0, 0.3, 0.0);
    double s2 = partition::symmetry_measure(bent, "C3v");
    c.expect(s2 > s, "0.3 A perturbation did not increase the score (" + fmt(s2) +
                         " vs " + fmt(s) + ")");
  });

  criterion(4, "OEP gradients, convergence, and density matching", 120.0, [](Check& c) {
    std::mt19937 rng(20260809);
    for (int trial = 0; trial < 20; ++trial) {
      int n = 12 + (trial * 7) % 49;  // spans 12..60 sites
      auto p = random_problem(rng, n);
      Eigen::VectorXd v = 0.2 * Eigen::VectorXd::Random(p.dim());
      auto [w, g] = oep::wu_yang_value_and_gradient(p, v);
      (void)w;
      for (int i = 0; i < p.dim(); ++i) {
        Eigen::VectorXd vp = v, vm = v;
        vp[i] += 1e-5;
        vm[i] -= 1e-5;
        double fd = (oep::wu_yang_value_and_gradient(p, vp).first -
                     oep::wu_yang_value_and_gradient(p, vm).first) /
                    2e-5;
        if (std::abs(g[i] - fd) > 1e-6 * std::max(1.0, std::abs(fd))) {
          c.expect(false, "trial " + std::to_string(trial) + " component " +
                              std::to_string(i) + ": grad " + fmt(g[i]) + " vs fd " +
                              fmt(fd));
          break;
        }
      }
      c.n_checks++;

      auto res = oep::optimize_vemb(p);
      c.expect(res.converged && res.iterations <= 500,
               "trial " + std::to_string(trial) + " did not converge in 500 iterations");
      c.expect(res.residual_max < 1e-6, "trial " + std::to_string(trial) +
                                            " density residual " + fmt(res.residual_max));
    }
  });

  criterion(5, "gauge and uniform-shift invariance", 30.0, [](Check& c) {
    std::mt19937 rng(7);
    auto p = random_problem(rng, 14);
    Eigen::VectorXd v = 0.3 * Eigen::VectorXd::Random(p.dim());
    double w0 = oep::wu_yang_value_and_gradient(p, v).first;
    for (double shift : {-10.0, -3.1, 0.25, 10.0}) {
      double wc =
          oep::wu_yang_value_and_gradient(p, Eigen::VectorXd(v.array() + shift)).first;
      c.expect(std::abs(wc - w0) <= 1e-10,
               "W(V + " + fmt(shift) + ") - W(V) = " + fmt(wc - w0));
    }

    auto as = random_space(rng, 3, 4);
    auto base = manybody::excitation_energies(manybody::fci_solve(as, 0, 6));
    for (double shift : {-10.0, 4.2}) {
      auto shifted = manybody::embed_one_body(
          as, Eigen::VectorXd::Constant(3, shift), Eigen::MatrixXd::Identity(3, 3));
      auto rep = manybody::excitation_energies(manybody::fci_solve(shifted, 0, 6));
      for (size_t k = 0; k < rep.states.size(); ++k) {
        double diff = std::abs(rep.states[k].delta_e - base.states[k].delta_e);
        c.expect(diff <= 1e-10, "FCI dE changed by " + fmt(diff) + " under shift " +
                                    fmt(shift));
        c.expect(reports::round12(rep.states[k].delta_e) ==
                     reports::round12(base.states[k].delta_e),
                 "reported dE not identical under shift");
      }
    }
  });

  criterion(6, "brute-force oracles: grid search and operator algebra", 120.0,
            [](Check& c) {
    // Exhaustive grid searches in restricted potential spaces.
    meanfield::TightBindingModel m3;
    m3.onsite = Eigen::VectorXd::Zero(3);
    for (int i = 0; i < 3; ++i) m3.site_positions.push_back({static_cast<double>(i), 0, 0});
    m3.bonds = {{0, 1, -1.0}, {1, 2, -1.0}};
    m3.n_up = 1;
    m3.n_dn = 1;
    m3.smearing_width = 0.1;
    m3.basis_tag = "grid3";
    auto p = oep::make_embedding_problem(m3, {0, 1}, 1, 0);

    {
      Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(3, 1);
      basis(0, 0) = 1.0;
      oracle::WEvaluator eval(p);
      double w_grid = oracle::grid_search_max(eval, basis, -2.0, 2.0, 1e-3);
      oep::OepOptions opts;
      opts.restriction_basis = basis;
      opts.gauge = oep::Gauge::None;
      auto res = oep::optimize_vemb(p, opts);
      c.expect(res.converged && std::abs(res.w_value - w_grid) <= 1e-5,
               "1D grid search: optimizer " + fmt(res.w_value) + " vs grid " +
                   fmt(w_grid));
    }
    {
      Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(3, 2);
      basis(0, 0) = 1.0;
      basis(1, 1) = 1.0;
      oracle::WEvaluator eval(p);
      double w_grid = oracle::grid_search_max(eval, basis, -2.0, 2.0, 2e-3);
      oep::OepOptions opts;
      opts.restriction_basis = basis;
      opts.gauge = oep::Gauge::None;
      auto res = oep::optimize_vemb(p, opts);
      c.expect(res.converged && std::abs(res.w_value - w_grid) <= 1e-5,
               "2D grid search: optimizer " + fmt(res.w_value) + " vs grid " +
                   fmt(w_grid));
    }

    // Slater-Condon vs explicit second-quantized operator algebra.
    std::mt19937 rng(11);
    for (auto [n_orb, n_elec] : {std::pair{2, 2}, {3, 3}, {3, 4}, {4, 4}, {4, 5}}) {
      auto as = random_space(rng, n_orb, n_elec);
      for (int sz2 = -(n_elec % 2 ? 1 : 0); sz2 <= (n_elec % 2 ? 1 : 2); sz2 += 2) {
        int na2 = n_elec + sz2, nb2 = n_elec - sz2;
        if (na2 < 0 || nb2 < 0 || na2 / 2 > n_orb || nb2 / 2 > n_orb) continue;
        auto sec = manybody::make_sector(as, sz2);
        Eigen::MatrixXd h = manybody::sector_hamiltonian(as, sec);
        std::vector<manybody::Determinant> dets;
        for (long d = 0; d < sec.dim(); ++d) dets.push_back(sec.det(d));
        Eigen::MatrixXd h_oracle = sq_oracle::dense_hamiltonian(as, dets);
        double err = (h - h_oracle).cwiseAbs().maxCoeff();
        c.expect(err <= 1e-12, "operator-algebra mismatch " + fmt(err) + " at norb=" +
                                   std::to_string(n_orb) + " nelec=" +
                                   std::to_string(n_elec) + " sz2=" + std::to_string(sz2));
      }
    }
  });

  criterion(7, "NV multiplet structure under the reference parameters", 10.0,
            [](Check& c) {
    auto params = nvmodel::parse_params_file(
        read_file(std::string(EMBERCAP_DATA_DIR) + "/nv_reference.params"));
    auto as = nvmodel::build_nv_active_space(params);
    auto rep = nvmodel::classify_states(
        manybody::excitation_energies(nvmodel::nv_states(as)));

    c.expect(rep.states.size() == 6, "expected six states");
    std::vector<std::string> labels;
    for (const auto& st : rep.states) labels.push_back(st.label);
    c.expect(labels == std::vector<std::string>{"3A2", "1E", "1E", "1A1", "3E", "3E"},
             "ordering is not 3A2 < 1E < 1A1 < 3E");

    c.expect(std::abs(rep.states[0].s_squared - 2.0) < 1e-6, "ground state is not S^2=2");
    c.expect(std::abs(rep.states[1].energy - rep.states[2].energy) <= 1e-10,
             "1E pair split exceeds 1e-10");
    c.expect(std::abs(rep.states[4].energy - rep.states[5].energy) <= 1e-10,
             "3E pair split exceeds 1e-10");

    // |211>-family weight across the three sz components of the ground triplet.
    manybody::FciOptions fci;
    fci.label_signs = nvmodel::label_signs();
    for (int sz2 : {2, 0, -2}) {
      auto gs = manybody::fci_solve(as, sz2, 1, fci)[0];
      double weight = 0.0;
      for (long k = 0; k < gs.coeffs.size(); ++k) {
        const auto& d = gs.dets[k];
        bool family = std::popcount(d.alpha & 1u) + std::popcount(d.beta & 1u) == 2 &&
                      std::popcount((d.alpha | d.beta) & 0b110u) == 2;
        if (family) weight += gs.coeffs[k] * gs.coeffs[k];
      }
      c.expect(weight >= 0.9, "|211>-family weight " + fmt(weight) + " in sz2=" +
                                  std::to_string(sz2));
    }

    auto coeff = [](const manybody::ReportState& st, const std::string& ket) {
      for (const auto& row : st.coefficients)
        if (row.ket == ket) return row.c;
      return 0.0;
    };
    const auto& a1 = rep.states[3];
    c.expect(coeff(a1, "202") * coeff(a1, "220") > 0.0, "1A1 202/220 signs not equal");
    c.expect(std::abs(coeff(a1, "022")) > 1e-6, "1A1 |022> weight vanishes");
    bool any_strict = false, all_opposite = true;
    for (int k : {1, 2}) {
      double prod = coeff(rep.states[k], "202") * coeff(rep.states[k], "220");
      if (prod > 1e-12) all_opposite = false;
      if (prod < -1e-12) any_strict = true;
    }
    c.expect(all_opposite && any_strict, "1E 202/220 sign pattern wrong");
  });

  criterion(8, "host-size insensitivity of embedded excitation energies", 60.0,
            [](Check& c) {
    auto emb12 = chainfix::embedded_excitation(12, false);
    auto emb24 = chainfix::embedded_excitation(24, false);
    c.expect(emb12.converged && emb24.converged, "OEP did not converge");
    double emb_diff = std::abs(emb12.delta_e - emb24.delta_e);
    c.expect(emb_diff < 1e-3, "embedded dE differs by " + fmt(emb_diff));

    auto bare = chainfix::embedded_excitation(24, true);
    double bare_dev = std::abs(bare.delta_e - emb24.delta_e);
    c.expect(bare_dev > emb_diff, "bare deviation " + fmt(bare_dev) +
                                      " not larger than embedded spread " + fmt(emb_diff));
  });

  criterion(9, "parsers: round trips and line-numbered failure modes", 10.0, [](Check& c) {
    // Structure round trip to 1e-8 fractional.
    auto cell = lattice::build_supercell(lattice::diamond_conventional_cell(3.5677),
                                         {2, 2, 2});
    auto back = lattice::parse_structure(lattice::emit_structure(cell));
    bool ok = back.n_sites() == cell.n_sites();
    for (int i = 0; ok && i < cell.n_sites(); ++i)
      ok = (back.sites[i].frac - cell.sites[i].frac).cwiseAbs().maxCoeff() < 1e-8;
    c.expect(ok, "structure round trip exceeded 1e-8");

    // Field file round trip (exact) on a random density.
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    field::ScalarField f;
    f.dims = {4, 4, 4};
    f.lattice = 3.0 * Eigen::Matrix3d::Identity();
    f.kind = field::FieldKind::Density;
    f.values.resize(64);
    for (int k = 0; k < 64; ++k) f.values[k] = u(rng);
    f.electrons = f.integral();
    auto f2 = field::read_grid_field_file(field::write_field_file(f));
    c.expect((f2.values - f.values).cwiseAbs().maxCoeff() <= 1e-12,
             "field round trip exceeded 1e-12");

    // FCIDUMP symmetry expansion.
    auto as = manybody::parse_fcidump("&FCI NORB=3,NELEC=2,MS2=0,\n&END\n0.7 2 1 3 3\n");
    bool sym = true;
    int idx[8][4] = {{1, 0, 2, 2}, {0, 1, 2, 2}, {2, 2, 1, 0}, {2, 2, 0, 1},
                     {1, 0, 2, 2}, {0, 1, 2, 2}, {2, 2, 1, 0}, {2, 2, 0, 1}};
    for (auto& q : idx) sym = sym && as.eri.get(q[0], q[1], q[2], q[3]) == 0.7;
    c.expect(sym, "FCIDUMP 8-fold symmetry not applied");

    // Malformed inputs: line-numbered errors, never crashes.
    std::vector<std::string> bad_structures = {
        "",
        "cmt\nnot_a_number\n",
        "cmt\n1.0\n1 0 0\n0 1 0\n0 0 inf\nC\n1\nDirect\n0 0 0\n",
        "cmt\n1.0\n1 0 0\n0 1 0\n0 0 1\nC N\n1 1\nDirect\n0 0 0\n",
        "cmt\n1.0\n1 0 0\n0 1 0\n0 0 1\nZz\n1\nDirect\n0 0 0\n",
        "3\nLattice=\"1 0 0 0 1 0 0 0 1\"\nC 0 0 0\n"};
    for (const auto& text : bad_structures) {
      try {
        lattice::parse_structure(text);
        c.expect(false, "malformed structure accepted");
      } catch (const ParseError&) {
        c.n_checks++;
      } catch (const ValidationError&) {
        c.n_checks++;
      } catch (...) {
        c.expect(false, "malformed structure raised a non-embercap error");
      }
    }
    std::vector<std::string> bad_dumps = {"&FCI NORB=2\n&END\n", "&FCI NORB=2,NELEC=9\n/\n",
                                          "&FCI NORB=2,NELEC=2\n&END\n1.0 5 1 0 0\n",
                                          "&FCI NORB=2,NELEC=2\n&END\n1.0 1 1 1 1\n2.0 1 1 1 1\n"};
    for (const auto& text : bad_dumps) {
      try {
        manybody::parse_fcidump(text);
        c.expect(false, "malformed integrals file accepted");
      } catch (const ParseError& e) {
        c.expect(e.line() >= 1, "integrals error lacks a line number");
      } catch (...) {
        c.expect(false, "malformed integrals raised a non-parse error");
      }
    }
    std::vector<std::string> bad_models = {"", "embercap-model 1\nsites 1\nelectrons 1\n",
                                           "embercap-model 1\nsites 1\nsite 0 0 0 0 0\n"
                                           "bond 0 0 1\nelectrons 1\n"};
    for (const auto& text : bad_models) {
      try {
        meanfield::parse_model_file(text);
        c.expect(false, "malformed model accepted");
      } catch (const ParseError&) {
        c.n_checks++;
      } catch (const ValidationError&) {
        c.n_checks++;
      } catch (...) {
        c.expect(false, "malformed model raised a non-embercap error");
      }
    }
  });

  if (g_failed == 0) {
    std::printf("acceptance: all criteria passed\n");
    return 0;
  }
  std::printf("acceptance: %d criterion(s) failed\n", g_failed);
  return 1;
}
