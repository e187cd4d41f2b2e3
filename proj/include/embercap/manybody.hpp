#pragma once

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "embercap/errors.hpp"
#include "embercap/field.hpp"
#include "embercap/meanfield.hpp"
#include "embercap/textio.hpp"

namespace embercap::manybody {

// ---------------------------------------------------------------------------
// Two-electron integrals, chemist notation (pq|rs), 8-fold permutational
// symmetry stored once per canonical quadruple.

class Eri {
public:
  Eri() = default;
  explicit Eri(int n) : n_(n) {
    long np = static_cast<long>(n) * (n + 1) / 2;
    data_.assign(np * (np + 1) / 2, 0.0);
  }
  int n() const { return n_; }
  double get(int p, int q, int r, int s) const { return data_[index(p, q, r, s)]; }
  void set(int p, int q, int r, int s, double v) { data_[index(p, q, r, s)] = v; }
  const std::vector<double>& raw() const { return data_; }
  std::vector<double>& raw() { return data_; }

  long index(int p, int q, int r, int s) const {
    long pq = p >= q ? tri(p) + q : tri(q) + p;
    long rs = r >= s ? tri(r) + s : tri(s) + r;
    return pq >= rs ? tri(pq) + rs : tri(rs) + pq;
  }

private:
  static long tri(long k) { return k * (k + 1) / 2; }
  int n_ = 0;
  std::vector<double> data_;
};

/// Complete model space for exact diagonalization: one-electron integrals h,
/// two-electron integrals (pq|rs), and a constant core energy.
struct ActiveSpace {
  int n_orbitals = 0;
  int n_electrons = 0;
  Eigen::MatrixXd h;
  Eri eri;
  double core_energy = 0.0;
};

inline void validate_active_space(const ActiveSpace& as) {
  if (as.n_orbitals < 1 || as.n_orbitals > 31)
    throw ValidationError("orbital count must be in [1, 31]");
  if (as.n_electrons < 0 || as.n_electrons > 2 * as.n_orbitals)
    throw ValidationError("electron count must satisfy 0 <= N <= 2*orbitals");
  if (as.h.rows() != as.n_orbitals || as.h.cols() != as.n_orbitals)
    throw ValidationError("h dimension mismatch");
  if ((as.h - as.h.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw ValidationError("h must be symmetric to 1e-12");
  if (as.eri.n() != as.n_orbitals) throw ValidationError("eri dimension mismatch");
}

// ---------------------------------------------------------------------------
// Determinant machinery. A determinant is an (alpha, beta) pair of orbital
// bitmasks; each spin's creation operators are applied in ascending orbital
// order, so phases are bit-parities within the spin's own mask.

namespace detail {

inline int sign_below(std::uint32_t mask, int p) {
  return std::popcount(mask & ((1u << p) - 1u)) & 1 ? -1 : 1;
}

struct OpResult {
  std::uint32_t mask;
  int sign;  // 0 when the operator annihilates the state
};

inline OpResult annihilate(std::uint32_t mask, int p) {
  if (!(mask >> p & 1u)) return {0, 0};
  return {mask & ~(1u << p), sign_below(mask, p)};
}

inline OpResult create(std::uint32_t mask, int p) {
  if (mask >> p & 1u) return {0, 0};
  return {mask | (1u << p), sign_below(mask, p)};
}

/// Phase of the single excitation p -> q (p occupied, q empty).
inline int excitation_sign(std::uint32_t mask, int p, int q) {
  auto a = annihilate(mask, p);
  auto c = create(a.mask, q);
  return a.sign * c.sign;
}

inline std::vector<std::uint32_t> enumerate_strings(int n_orb, int n_elec) {
  std::vector<std::uint32_t> out;
  if (n_elec == 0) {
    out.push_back(0);
    return out;
  }
  std::uint32_t v = (1u << n_elec) - 1u;
  const std::uint32_t limit = 1u << n_orb;
  while (v < limit) {
    out.push_back(v);
    std::uint32_t t = v | (v - 1u);
    v = (t + 1u) | (((~t & (t + 1u)) - 1u) >> (std::countr_zero(v) + 1));
  }
  return out;
}

inline long binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  long r = 1;
  for (int i = 0; i < k; ++i) r = r * (n - i) / (i + 1);
  return r;
}

inline std::vector<int> occupied_list(std::uint32_t mask) {
  std::vector<int> occ;
  while (mask) {
    occ.push_back(std::countr_zero(mask));
    mask &= mask - 1u;
  }
  return occ;
}

}  // namespace detail

struct Determinant {
  std::uint32_t alpha = 0, beta = 0;
  bool operator==(const Determinant&) const = default;
};

/// Ket notation per orbital: doubly (2), spin-up singly (1), spin-down singly
/// (1 with combining macron), or unoccupied (0). Orbital 0 is leftmost.
inline std::string ket_label(const Determinant& d, int n_orb) {
  std::string out;
  for (int p = 0; p < n_orb; ++p) {
    bool a = d.alpha >> p & 1u, b = d.beta >> p & 1u;
    if (a && b) out += "2";
    else if (a) out += "1";
    else if (b) out += "1\xcc\x84";  // U+0304 combining macron
    else out += "0";
  }
  return out;
}

struct Sector {
  int n_orbitals = 0;
  int n_alpha = 0, n_beta = 0;
  std::vector<std::uint32_t> alpha_strings, beta_strings;

  long dim() const {
    return static_cast<long>(alpha_strings.size()) * static_cast<long>(beta_strings.size());
  }
  Determinant det(long idx) const {
    long nb = static_cast<long>(beta_strings.size());
    return {alpha_strings[idx / nb], beta_strings[idx % nb]};
  }
};

inline Sector make_sector(const ActiveSpace& as, int sz2) {
  Sector s;
  s.n_orbitals = as.n_orbitals;
  int na2 = as.n_electrons + sz2, nb2 = as.n_electrons - sz2;
  if (na2 < 0 || nb2 < 0 || na2 % 2 || nb2 % 2)
    throw ValidationError("empty spin sector: nelec=" + std::to_string(as.n_electrons) +
                          ", 2sz=" + std::to_string(sz2));
  s.n_alpha = na2 / 2;
  s.n_beta = nb2 / 2;
  if (s.n_alpha > as.n_orbitals || s.n_beta > as.n_orbitals)
    throw ValidationError("empty spin sector: more electrons than orbitals per spin");
  s.alpha_strings = detail::enumerate_strings(as.n_orbitals, s.n_alpha);
  s.beta_strings = detail::enumerate_strings(as.n_orbitals, s.n_beta);
  if (s.dim() > 5000)
    throw ValidationError("sector dimension " + std::to_string(s.dim()) +
                          " exceeds the dense exact-diagonalization limit (5000); "
                          "use a smaller active space");
  return s;
}

// ---------------------------------------------------------------------------
// Sector Hamiltonian via the Slater-Condon rules.

namespace detail {

inline double diagonal_element(const ActiveSpace& as, std::uint32_t a, std::uint32_t b) {
  double e = as.core_energy;
  auto occ_a = occupied_list(a), occ_b = occupied_list(b);
  for (int p : occ_a) e += as.h(p, p);
  for (int p : occ_b) e += as.h(p, p);
  for (int p : occ_a)
    for (int q : occ_a) e += 0.5 * (as.eri.get(p, p, q, q) - as.eri.get(p, q, q, p));
  for (int p : occ_b)
    for (int q : occ_b) e += 0.5 * (as.eri.get(p, p, q, q) - as.eri.get(p, q, q, p));
  for (int p : occ_a)
    for (int q : occ_b) e += as.eri.get(p, p, q, q);
  return e;
}

/// <D'|H|D> where D' differs from D by the same-spin single p->q and the other
/// spin's mask is `other` (shared).
inline double single_element(const ActiveSpace& as, std::uint32_t same, std::uint32_t other,
                             int p, int q) {
  double v = as.h(q, p);
  for (int r : occupied_list(same))
    v += as.eri.get(q, p, r, r) - as.eri.get(q, r, r, p);
  for (int r : occupied_list(other)) v += as.eri.get(q, p, r, r);
  return excitation_sign(same, p, q) * v;
}

/// Same-spin double: {i<j} -> {a<b} on one spin's mask.
inline double double_same_spin(const ActiveSpace& as, std::uint32_t mask, int i, int j,
                               int a, int b) {
  auto s1 = annihilate(mask, i);
  auto s2 = annihilate(s1.mask, j);
  auto s3 = create(s2.mask, b);
  auto s4 = create(s3.mask, a);
  int sign = s1.sign * s2.sign * s3.sign * s4.sign;
  return sign * (as.eri.get(a, i, b, j) - as.eri.get(a, j, b, i));
}

/// Opposite-spin double: alpha i->a, beta j->b.
inline double double_cross_spin(const ActiveSpace& as, std::uint32_t amask,
                                std::uint32_t bmask, int i, int a, int j, int b) {
  return excitation_sign(amask, i, a) * excitation_sign(bmask, j, b) *
         as.eri.get(a, i, b, j);
}

inline void diff_orbitals(std::uint32_t from, std::uint32_t to, std::vector<int>& removed,
                          std::vector<int>& added) {
  removed = occupied_list(from & ~to);
  added = occupied_list(to & ~from);
}

}  // namespace detail

/// Dense sector Hamiltonian. Row r, column c hold <det_r|H|det_c>.
inline Eigen::MatrixXd sector_hamiltonian(const ActiveSpace& as, const Sector& sec) {
  const long dim = sec.dim();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
  std::vector<int> rem_a, add_a, rem_b, add_b;
  for (long r = 0; r < dim; ++r) {
    Determinant dr = sec.det(r);
    for (long c = r; c < dim; ++c) {
      Determinant dc = sec.det(c);
      int na = std::popcount(dr.alpha ^ dc.alpha);
      int nb = std::popcount(dr.beta ^ dc.beta);
      if (na + nb > 4) continue;
      double v = 0.0;
      if (na == 0 && nb == 0) {
        v = detail::diagonal_element(as, dc.alpha, dc.beta);
      } else if (na == 2 && nb == 0) {
        detail::diff_orbitals(dc.alpha, dr.alpha, rem_a, add_a);
        v = detail::single_element(as, dc.alpha, dc.beta, rem_a[0], add_a[0]);
      } else if (na == 0 && nb == 2) {
        detail::diff_orbitals(dc.beta, dr.beta, rem_b, add_b);
        v = detail::single_element(as, dc.beta, dc.alpha, rem_b[0], add_b[0]);
      } else if (na == 4 && nb == 0) {
        detail::diff_orbitals(dc.alpha, dr.alpha, rem_a, add_a);
        v = detail::double_same_spin(as, dc.alpha, rem_a[0], rem_a[1], add_a[0], add_a[1]);
      } else if (na == 0 && nb == 4) {
        detail::diff_orbitals(dc.beta, dr.beta, rem_b, add_b);
        v = detail::double_same_spin(as, dc.beta, rem_b[0], rem_b[1], add_b[0], add_b[1]);
      } else if (na == 2 && nb == 2) {
        detail::diff_orbitals(dc.alpha, dr.alpha, rem_a, add_a);
        detail::diff_orbitals(dc.beta, dr.beta, rem_b, add_b);
        v = detail::double_cross_spin(as, dc.alpha, dc.beta, rem_a[0], add_a[0], rem_b[0],
                                      add_b[0]);
      }
      H(r, c) = v;
      H(c, r) = v;
    }
  }
  return H;
}

namespace detail {

/// Apply S+ to a sector vector; the result lives in the (n_alpha+1, n_beta-1)
/// sector, returned as a map keyed by packed determinant.
inline std::unordered_map<std::uint64_t, double> apply_s_plus(const Sector& sec,
                                                              const Eigen::VectorXd& v) {
  std::unordered_map<std::uint64_t, double> out;
  for (long idx = 0; idx < sec.dim(); ++idx) {
    double c = v[idx];
    if (c == 0.0) continue;
    Determinant d = sec.det(idx);
    for (int p = 0; p < sec.n_orbitals; ++p) {
      if (!(d.beta >> p & 1u) || (d.alpha >> p & 1u)) continue;
      auto ab = annihilate(d.beta, p);
      auto ca = create(d.alpha, p);
      std::uint64_t key = (static_cast<std::uint64_t>(ca.mask) << 32) | ab.mask;
      out[key] += c * ab.sign * ca.sign;
    }
  }
  return out;
}

/// <v|S^2|w> for two vectors of the same sector: S^2 = S-S+ + Sz + Sz^2.
inline double s2_bilinear(const Sector& sec, const Eigen::VectorXd& v,
                          const Eigen::VectorXd& w) {
  double sz = 0.5 * (sec.n_alpha - sec.n_beta);
  double val = (v.dot(w)) * (sz + sz * sz);
  auto pv = apply_s_plus(sec, v);
  auto pw = apply_s_plus(sec, w);
  for (const auto& [key, x] : pv) {
    auto it = pw.find(key);
    if (it != pw.end()) val += x * it->second;
  }
  return val;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Eigenstates.

struct CIState {
  double energy = 0.0;
  double sz = 0.0;
  double s_squared = 0.0;
  Eigen::VectorXd coeffs;
  std::vector<Determinant> dets;

  double coefficient(const Determinant& d) const {
    for (size_t k = 0; k < dets.size(); ++k)
      if (dets[k] == d) return coeffs[static_cast<long>(k)];
    return 0.0;
  }
};

struct FciOptions {
  double degeneracy_tol = 1e-9;
  /// Optional per-orbital reflection signs defining a symmetry label operator
  /// (diagonal in the determinant basis); used to disentangle degenerate pairs
  /// into reproducible partners.
  std::optional<Eigen::VectorXd> label_signs;
};

/// Exact diagonalization of the (n_electrons, sz) sector. Returns the
/// n_states lowest eigenstates with sharp S^2 within degenerate groups,
/// label-operator-resolved degenerate partners, and the largest coefficient
/// fixed positive.
inline std::vector<CIState> fci_solve(const ActiveSpace& as, int sz2, int n_states,
                                      const FciOptions& opts = {}) {
  validate_active_space(as);
  Sector sec = make_sector(as, sz2);
  const long dim = sec.dim();
  if (n_states < 1 || n_states > dim)
    throw ValidationError("n_states " + std::to_string(n_states) +
                          " outside sector dimension " + std::to_string(dim));

  Eigen::MatrixXd H = sector_hamiltonian(as, sec);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  Eigen::VectorXd evals = es.eigenvalues();
  Eigen::MatrixXd evecs = es.eigenvectors();

  // Extend the returned window to a full degenerate group so rotations see
  // every partner.
  long m = n_states;
  while (m < dim && evals[m] - evals[m - 1] < opts.degeneracy_tol) ++m;

  // Group boundaries by consecutive chaining.
  std::vector<std::pair<long, long>> groups;
  long g0 = 0;
  for (long k = 1; k <= m; ++k) {
    if (k == m || evals[k] - evals[k - 1] >= opts.degeneracy_tol) {
      groups.push_back({g0, k});
      g0 = k;
    }
  }

  auto rotate_block = [&](long lo, long hi, const Eigen::MatrixXd& metric,
                          bool descending) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ges(metric);
    Eigen::MatrixXd rot = ges.eigenvectors();
    if (descending) rot = rot.rowwise().reverse().eval();
    evecs.middleCols(lo, hi - lo) = (evecs.middleCols(lo, hi - lo) * rot).eval();
  };

  for (auto [lo, hi] : groups) {
    long size = hi - lo;
    if (size < 2) continue;
    // Resolve S^2 within the degenerate group.
    Eigen::MatrixXd s2(size, size);
    for (long i = 0; i < size; ++i)
      for (long j = i; j < size; ++j) {
        double v = detail::s2_bilinear(sec, evecs.col(lo + i), evecs.col(lo + j));
        s2(i, j) = v;
        s2(j, i) = v;
      }
    rotate_block(lo, hi, s2, false);

    if (!opts.label_signs) continue;
    if (opts.label_signs->size() != as.n_orbitals)
      throw ValidationError("label sign vector length must equal orbital count");
    // Sub-blocks of equal S^2, disentangled by the diagonal label operator.
    Eigen::VectorXd s2diag(size);
    for (long i = 0; i < size; ++i)
      s2diag[i] = detail::s2_bilinear(sec, evecs.col(lo + i), evecs.col(lo + i));
    Eigen::VectorXd det_label(dim);
    for (long d = 0; d < dim; ++d) {
      Determinant dd = sec.det(d);
      double sign = 1.0;
      for (int p = 0; p < as.n_orbitals; ++p) {
        if (dd.alpha >> p & 1u) sign *= (*opts.label_signs)[p];
        if (dd.beta >> p & 1u) sign *= (*opts.label_signs)[p];
      }
      det_label[d] = sign;
    }
    long b0 = 0;
    for (long k = 1; k <= size; ++k) {
      if (k == size || std::abs(s2diag[k] - s2diag[b0]) > 1e-6) {
        if (k - b0 >= 2) {
          Eigen::MatrixXd lab(k - b0, k - b0);
          for (long i = 0; i < k - b0; ++i)
            for (long j = i; j < k - b0; ++j) {
              double v = evecs.col(lo + b0 + i)
                             .cwiseProduct(det_label)
                             .dot(evecs.col(lo + b0 + j));
              lab(i, j) = v;
              lab(j, i) = v;
            }
          rotate_block(lo + b0, lo + k, lab, true);
        }
        b0 = k;
      }
    }
  }

  std::vector<CIState> states;
  states.reserve(n_states);
  std::vector<Determinant> dets(dim);
  for (long d = 0; d < dim; ++d) dets[d] = sec.det(d);
  for (long k = 0; k < n_states; ++k) {
    CIState st;
    st.sz = 0.5 * sz2;
    st.coeffs = evecs.col(k);
    // Sign convention: largest-magnitude coefficient positive.
    long imax = 0;
    st.coeffs.cwiseAbs().maxCoeff(&imax);
    if (st.coeffs[imax] < 0) st.coeffs = -st.coeffs;
    st.energy = st.coeffs.dot(H * st.coeffs);
    st.s_squared = detail::s2_bilinear(sec, st.coeffs, st.coeffs);
    st.dets = dets;
    states.push_back(std::move(st));
  }
  return states;
}

// ---------------------------------------------------------------------------
// Reports.

struct ConfigRow {
  std::string ket;
  double c = 0.0;
};

struct CiReport {
  std::vector<ConfigRow> rows;
  double sum_c2 = 0.0;
};

/// Configurations with |c| >= threshold, sorted by descending |c|.
inline CiReport ci_report(const CIState& state, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw ValidationError("report threshold must lie in (0, 1)");
  int n_orb = 0;
  for (const auto& d : state.dets) {
    std::uint32_t m = d.alpha | d.beta;
    while (m >> n_orb) ++n_orb;
  }
  std::vector<std::pair<double, long>> order;
  for (long k = 0; k < state.coeffs.size(); ++k)
    if (std::abs(state.coeffs[k]) >= threshold) order.push_back({-std::abs(state.coeffs[k]), k});
  std::sort(order.begin(), order.end());
  CiReport rep;
  for (auto [negc, k] : order) {
    rep.rows.push_back({ket_label(state.dets[k], n_orb), state.coeffs[k]});
    rep.sum_c2 += state.coeffs[k] * state.coeffs[k];
  }
  return rep;
}

struct ReportState {
  double energy = 0.0;
  double delta_e = 0.0;
  double sz = 0.0;
  double s_squared = 0.0;
  int multiplicity = 1;
  int degeneracy_group = 0;
  std::string label;  // assigned by classifiers; empty otherwise
  bool double_excitation_flag = false;
  CiReport dominant;
  std::vector<ConfigRow> coefficients;  // full list for small sectors
};

struct SpectrumReport {
  std::vector<ReportState> states;
  double degeneracy_tol = 1e-9;
  double report_threshold = 0.1;
};

struct SpectrumOptions {
  double degeneracy_tol = 1e-9;
  double report_threshold = 0.1;
  long full_coefficient_limit = 64;  // store every coefficient up to this sector size
};

/// Excitation energies against the lowest state plus degeneracy grouping.
/// States must arrive sorted ascending in energy.
inline SpectrumReport excitation_energies(const std::vector<CIState>& states,
                                          const SpectrumOptions& opts = {}) {
  if (states.empty()) throw ValidationError("no states to report");
  for (size_t k = 1; k < states.size(); ++k)
    if (states[k].energy < states[k - 1].energy - 1e-12)
      throw ValidationError("states must be sorted ascending in energy");

  SpectrumReport rep;
  rep.degeneracy_tol = opts.degeneracy_tol;
  rep.report_threshold = opts.report_threshold;
  int group = 0;
  for (size_t k = 0; k < states.size(); ++k) {
    if (k > 0 && states[k].energy - states[k - 1].energy >= opts.degeneracy_tol) ++group;
    const CIState& st = states[k];
    ReportState out;
    out.energy = st.energy;
    out.delta_e = st.energy - states[0].energy;
    out.sz = st.sz;
    out.s_squared = st.s_squared;
    double spin = 0.5 * (-1.0 + std::sqrt(1.0 + 4.0 * std::max(0.0, st.s_squared)));
    out.multiplicity = static_cast<int>(std::lround(2.0 * spin + 1.0));
    out.degeneracy_group = group;
    out.dominant = ci_report(st, opts.report_threshold);
    if (static_cast<long>(st.dets.size()) <= opts.full_coefficient_limit) {
      int n_orb = 0;
      for (const auto& d : st.dets) {
        std::uint32_t m = d.alpha | d.beta;
        while (m >> n_orb) ++n_orb;
      }
      for (long i = 0; i < st.coeffs.size(); ++i)
        if (std::abs(st.coeffs[i]) >= 1e-12)
          out.coefficients.push_back({ket_label(st.dets[i], n_orb), st.coeffs[i]});
    }
    rep.states.push_back(std::move(out));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// One-body embedding: transform a site potential into the orbital basis and
// add it to h. eri and core are untouched.

inline ActiveSpace embed_one_body(const ActiveSpace& as, const Eigen::VectorXd& v,
                                  const Eigen::MatrixXd& orbital_map) {
  if (orbital_map.rows() != v.size() || orbital_map.cols() != as.n_orbitals)
    throw ValidationError("orbital map dimensions do not match potential/active space");
  ActiveSpace out = as;
  out.h += orbital_map.transpose() * v.asDiagonal() * orbital_map;
  validate_active_space(out);
  return out;
}

inline ActiveSpace embed_one_body(const ActiveSpace& as, const field::SiteVector& v,
                                  const Eigen::MatrixXd& orbital_map) {
  return embed_one_body(as, v.values, orbital_map);
}

/// Site-basis active space of a tight-binding model: h is the one-body
/// Hamiltonian, the interaction is on-site Hubbard (ii|ii) = u_i.
inline ActiveSpace active_space_from_site_model(const meanfield::TightBindingModel& model,
                                                const Eigen::VectorXd& hubbard_u) {
  if (hubbard_u.size() != model.n_sites())
    throw ValidationError("hubbard_u length must equal site count");
  ActiveSpace as;
  as.n_orbitals = model.n_sites();
  as.n_electrons = model.n_electrons();
  as.h = model.hamiltonian();
  as.eri = Eri(as.n_orbitals);
  for (int i = 0; i < as.n_orbitals; ++i) as.eri.set(i, i, i, i, hubbard_u[i]);
  validate_active_space(as);
  return as;
}

// ---------------------------------------------------------------------------
// FCIDUMP-style integral files (field layout in docs/formats.md).

inline ActiveSpace parse_fcidump(const std::string& text) {
  auto lines = split_lines(text);
  if (lines.empty()) throw ParseError("empty integrals file", 1);

  std::string header;
  size_t body_start = 0;
  for (size_t i = 0; i < lines.size(); ++i) {
    header += " " + lines[i];
    std::string up = lines[i];
    for (auto& ch : up) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    if (up.find("&END") != std::string::npos ||
        lines[i].find('/') != std::string::npos) {
      body_start = i + 1;
      break;
    }
    if (i + 1 == lines.size()) throw ParseError("header never terminated by &END or /", 1);
  }
  if (header.find("&FCI") == std::string::npos)
    throw ParseError("expected &FCI header", 1);

  auto find_int = [&](const std::string& key) -> std::optional<long> {
    size_t pos = header.find(key + "=");
    if (pos == std::string::npos) return std::nullopt;
    pos += key.size() + 1;
    size_t end = header.find_first_of(", \t/", pos);
    std::string tok = header.substr(pos, end == std::string::npos ? end : end - pos);
    return parse_int(tok, 1);
  };
  auto norb = find_int("NORB");
  auto nelec = find_int("NELEC");
  if (!norb) throw ParseError("header must declare NORB", 1);
  if (!nelec) throw ParseError("header must declare NELEC", 1);

  ActiveSpace as;
  as.n_orbitals = static_cast<int>(*norb);
  as.n_electrons = static_cast<int>(*nelec);
  if (as.n_orbitals < 1 || as.n_orbitals > 31)
    throw ParseError("NORB out of supported range [1, 31]", 1);
  if (as.n_electrons < 0 || as.n_electrons > 2 * as.n_orbitals)
    throw ParseError("NELEC out of range for NORB", 1);
  as.h = Eigen::MatrixXd::Zero(as.n_orbitals, as.n_orbitals);
  as.eri = Eri(as.n_orbitals);

  Eigen::MatrixXd h_seen = Eigen::MatrixXd::Zero(as.n_orbitals, as.n_orbitals);
  std::vector<char> eri_seen(as.eri.raw().size(), 0);
  bool core_seen = false;

  for (size_t i = body_start; i < lines.size(); ++i) {
    int ln = static_cast<int>(i) + 1;
    auto toks = split_tokens(lines[i]);
    if (toks.empty()) continue;
    if (toks.size() != 5) throw ParseError("expected 'value p q r s'", ln);
    double v = parse_double(toks[0], ln);
    int idx[4];
    for (int k = 0; k < 4; ++k) {
      long x = parse_int(toks[1 + k], ln);
      if (x < 0 || x > as.n_orbitals)
        throw ParseError("orbital index " + std::to_string(x) + " out of range [0, " +
                             std::to_string(as.n_orbitals) + "]",
                         ln);
      idx[k] = static_cast<int>(x);
    }
    int p = idx[0], q = idx[1], r = idx[2], s = idx[3];
    if (p == 0 && q == 0 && r == 0 && s == 0) {
      if (core_seen && std::abs(as.core_energy - v) > 1e-10)
        throw ParseError("conflicting duplicate core energy", ln);
      as.core_energy = v;
      core_seen = true;
    } else if (r == 0 && s == 0) {
      if (p == 0 || q == 0) throw ParseError("one-electron entry needs p,q >= 1", ln);
      if (h_seen(p - 1, q - 1) && std::abs(as.h(p - 1, q - 1) - v) > 1e-10)
        throw ParseError("conflicting duplicate h(" + std::to_string(p) + "," +
                             std::to_string(q) + ")",
                         ln);
      as.h(p - 1, q - 1) = v;
      as.h(q - 1, p - 1) = v;
      h_seen(p - 1, q - 1) = h_seen(q - 1, p - 1) = 1;
    } else if (p == 0 || q == 0 || r == 0 || s == 0) {
      throw ParseError("two-electron entry needs all indices >= 1", ln);
    } else {
      long slot = as.eri.index(p - 1, q - 1, r - 1, s - 1);
      if (eri_seen[slot] && std::abs(as.eri.raw()[slot] - v) > 1e-10)
        throw ParseError("conflicting duplicate integral (" + std::to_string(p) + " " +
                             std::to_string(q) + "|" + std::to_string(r) + " " +
                             std::to_string(s) + ")",
                         ln);
      as.eri.raw()[slot] = v;
      eri_seen[slot] = 1;
    }
  }
  validate_active_space(as);
  return as;
}

inline std::string write_fcidump(const ActiveSpace& as, int ms2 = 0) {
  std::string out = "&FCI NORB=" + std::to_string(as.n_orbitals) +
                    ",NELEC=" + std::to_string(as.n_electrons) +
                    ",MS2=" + std::to_string(ms2) + ",\n&END\n";
  auto entry = [&](double v, int p, int q, int r, int s) {
    out += " " + format_double(v) + " " + std::to_string(p) + " " + std::to_string(q) +
           " " + std::to_string(r) + " " + std::to_string(s) + "\n";
  };
  const int n = as.n_orbitals;
  for (int p = 0; p < n; ++p)
    for (int q = 0; q <= p; ++q)
      for (int r = 0; r <= p; ++r)
        for (int s = 0; s <= (r == p ? q : r); ++s) {
          double v = as.eri.get(p, q, r, s);
          if (v != 0.0) entry(v, p + 1, q + 1, r + 1, s + 1);
        }
  for (int p = 0; p < n; ++p)
    for (int q = 0; q <= p; ++q)
      if (as.h(p, q) != 0.0) entry(as.h(p, q), p + 1, q + 1, 0, 0);
  entry(as.core_energy, 0, 0, 0, 0);
  return out;
}

}  // namespace embercap::manybody
