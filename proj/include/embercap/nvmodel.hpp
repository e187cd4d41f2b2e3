#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "embercap/errors.hpp"
#include "embercap/manybody.hpp"
#include "embercap/textio.hpp"

namespace embercap::nvmodel {

/// Parameters of the minimal C3v-symmetric active space: three orbitals
/// (a1, ex, ey), four electrons. The e-pair identity
///   coulomb_ee_same = coulomb_ee_cross + 2*exchange_ee
/// makes the real e-orbital interactions rotationally consistent, which is
/// what keeps the E-pair degeneracies exact (derivation in docs/nv_model.md).
struct NvModelParams {
  double gap = 0.0;  // eps_e - eps_a1
  double coulomb_aa = 0.0;
  double coulomb_ae = 0.0;
  double coulomb_ee_same = 0.0;
  double coulomb_ee_cross = 0.0;
  double exchange_ae = 0.0;
  double exchange_ee = 0.0;
};

inline void validate_params(const NvModelParams& p) {
  double lhs = p.coulomb_ee_same;
  double rhs = p.coulomb_ee_cross + 2.0 * p.exchange_ee;
  double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
  if (std::abs(lhs - rhs) > 1e-12 * scale)
    throw ValidationError(
        "e-pair identity violated: coulomb_ee_same = coulomb_ee_cross + 2*exchange_ee "
        "requires " +
        format_double(rhs) + ", got " + format_double(lhs));
  for (double c : {p.coulomb_aa, p.coulomb_ae, p.coulomb_ee_same, p.coulomb_ee_cross})
    if (c < 0) throw ValidationError("Coulomb integrals must be >= 0");
  for (double k : {p.exchange_ae, p.exchange_ee})
    if (k < 0) throw ValidationError("exchange integrals must be >= 0");
}

/// Orbital order: 0 = a1, 1 = ex, 2 = ey. h is diagonal (0, gap, gap); every
/// off-symmetry two-electron element is zero.
inline manybody::ActiveSpace build_nv_active_space(const NvModelParams& p) {
  validate_params(p);
  manybody::ActiveSpace as;
  as.n_orbitals = 3;
  as.n_electrons = 4;
  as.h = Eigen::MatrixXd::Zero(3, 3);
  as.h(1, 1) = p.gap;
  as.h(2, 2) = p.gap;
  as.eri = manybody::Eri(3);
  as.eri.set(0, 0, 0, 0, p.coulomb_aa);
  as.eri.set(0, 0, 1, 1, p.coulomb_ae);
  as.eri.set(0, 0, 2, 2, p.coulomb_ae);
  as.eri.set(0, 1, 0, 1, p.exchange_ae);
  as.eri.set(0, 2, 0, 2, p.exchange_ae);
  as.eri.set(1, 1, 1, 1, p.coulomb_ee_same);
  as.eri.set(2, 2, 2, 2, p.coulomb_ee_same);
  as.eri.set(1, 1, 2, 2, p.coulomb_ee_cross);
  as.eri.set(1, 2, 1, 2, p.exchange_ee);
  return as;
}

/// Reflection signs of the sigma_v(xz) mirror on (a1, ex, ey); passed to the
/// FCI solver as the degenerate-pair label operator.
inline Eigen::VectorXd label_signs() {
  Eigen::VectorXd s(3);
  s << 1.0, 1.0, -1.0;
  return s;
}

// ---------------------------------------------------------------------------
// Parameter file: one "key value" pair per line, '#' comments.

inline NvModelParams parse_params_file(const std::string& text) {
  NvModelParams p;
  bool seen[7] = {};
  auto lines = split_lines(text);
  for (size_t i = 0; i < lines.size(); ++i) {
    int ln = static_cast<int>(i) + 1;
    std::string line = lines[i];
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto toks = split_tokens(line);
    if (toks.empty()) continue;
    if (toks.size() != 2) throw ParseError("expected 'key value'", ln);
    double v = parse_double(toks[1], ln);
    const std::string& key = toks[0];
    if (key == "gap") p.gap = v, seen[0] = true;
    else if (key == "coulomb_aa") p.coulomb_aa = v, seen[1] = true;
    else if (key == "coulomb_ae") p.coulomb_ae = v, seen[2] = true;
    else if (key == "coulomb_ee_same") p.coulomb_ee_same = v, seen[3] = true;
    else if (key == "coulomb_ee_cross") p.coulomb_ee_cross = v, seen[4] = true;
    else if (key == "exchange_ae") p.exchange_ae = v, seen[5] = true;
    else if (key == "exchange_ee") p.exchange_ee = v, seen[6] = true;
    else throw ParseError("unknown parameter '" + key + "'", ln);
  }
  for (bool s : seen)
    if (!s) throw ParseError("parameter file must set all seven parameters");
  validate_params(p);
  return p;
}

inline std::string emit_params_file(const NvModelParams& p) {
  std::string out;
  out += "gap " + format_double(p.gap) + "\n";
  out += "coulomb_aa " + format_double(p.coulomb_aa) + "\n";
  out += "coulomb_ae " + format_double(p.coulomb_ae) + "\n";
  out += "coulomb_ee_same " + format_double(p.coulomb_ee_same) + "\n";
  out += "coulomb_ee_cross " + format_double(p.coulomb_ee_cross) + "\n";
  out += "exchange_ae " + format_double(p.exchange_ae) + "\n";
  out += "exchange_ee " + format_double(p.exchange_ee) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Spectrum assembly and state classification.

/// Triplets from the sz=1 sector (3 states), singlets from the sz=0 sector
/// (3 lowest S^2 = 0 states), merged and sorted.
inline std::vector<manybody::CIState> nv_states(const manybody::ActiveSpace& as,
                                                double degeneracy_tol = 1e-9) {
  manybody::FciOptions fci;
  fci.degeneracy_tol = degeneracy_tol;
  fci.label_signs = label_signs();

  auto triplets = manybody::fci_solve(as, 2, 3, fci);
  auto sz0 = manybody::fci_solve(as, 0, 9, fci);
  std::vector<manybody::CIState> singlets;
  for (auto& st : sz0)
    if (st.s_squared < 0.5 && singlets.size() < 3) singlets.push_back(std::move(st));
  if (singlets.size() < 3)
    throw ValidationError("fewer than three singlet states in the sz=0 sector");

  std::vector<manybody::CIState> all;
  all.insert(all.end(), triplets.begin(), triplets.end());
  all.insert(all.end(), singlets.begin(), singlets.end());
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.energy < b.energy; });
  return all;
}

namespace detail {

inline double coeff_of(const manybody::ReportState& st, const std::string& ket) {
  for (const auto& row : st.coefficients)
    if (row.ket == ket) return row.c;
  return 0.0;
}

}  // namespace detail

/// Assign 3A2 / 3E / 1E / 1A1 labels by (S^2, degeneracy count, dominant
/// configuration pattern). States that match no pattern stay "unassigned".
inline manybody::SpectrumReport classify_states(manybody::SpectrumReport report) {
  auto& states = report.states;
  const std::string k211 = "211", k121 = "121", k112 = "112";
  const std::string k202 = "202", k220 = "220", k022 = "022";

  // Group extents.
  std::map<int, std::vector<size_t>> groups;
  for (size_t i = 0; i < states.size(); ++i)
    groups[states[i].degeneracy_group].push_back(i);

  for (auto& [gid, members] : groups) {
    bool all_triplet = true, all_singlet = true;
    for (size_t i : members) {
      all_triplet = all_triplet && states[i].multiplicity == 3;
      all_singlet = all_singlet && states[i].multiplicity == 1;
    }
    auto set_all = [&](const std::string& label) {
      for (size_t i : members) states[i].label = label;
    };

    if (members.size() == 1 && all_triplet) {
      auto& st = states[members[0]];
      if (!st.dominant.rows.empty() && st.dominant.rows[0].ket == k211) {
        st.label = "3A2";
        continue;
      }
    }
    if (members.size() == 2 && all_triplet) {
      bool e_like = true;
      for (size_t i : members) {
        const auto& rows = states[i].dominant.rows;
        e_like = e_like && !rows.empty() && (rows[0].ket == k121 || rows[0].ket == k112);
      }
      if (e_like) {
        set_all("3E");
        continue;
      }
    }
    if (members.size() == 2 && all_singlet) {
      bool opposite_ok = true, any_strict = false;
      for (size_t i : members) {
        double c202 = detail::coeff_of(states[i], k202);
        double c220 = detail::coeff_of(states[i], k220);
        if (c202 * c220 > 1e-12) opposite_ok = false;
        if (c202 * c220 < -1e-12) any_strict = true;
      }
      if (opposite_ok && any_strict) {
        set_all("1E");
        continue;
      }
    }
    if (members.size() == 1 && all_singlet) {
      auto& st = states[members[0]];
      double c202 = detail::coeff_of(st, k202);
      double c220 = detail::coeff_of(st, k220);
      if (c202 * c220 > 1e-12) {
        st.label = "1A1";
        st.double_excitation_flag = std::abs(detail::coeff_of(st, k022)) > 1e-6;
        continue;
      }
    }
    set_all("unassigned");
  }
  return report;
}

}  // namespace embercap::nvmodel
