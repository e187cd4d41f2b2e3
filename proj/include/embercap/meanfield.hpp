#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "embercap/errors.hpp"
#include "embercap/field.hpp"
#include "embercap/textio.hpp"

namespace embercap::meanfield {

enum class SpinMode { Restricted, Unrestricted };

struct Bond {
  int i, j;
  double t;
};

/// Tight-binding model with optional on-site mean-field repulsion. Bonds are
/// stored once per undirected pair; the Hamiltonian is symmetric by
/// construction. Site positions are carried only for field projection.
struct TightBindingModel {
  std::vector<Eigen::Vector3d> site_positions;
  Eigen::VectorXd onsite;
  std::vector<Bond> bonds;
  std::optional<Eigen::VectorXd> interaction_u;
  int n_up = 0, n_dn = 0;
  SpinMode spin_mode = SpinMode::Restricted;
  double smearing_width = 0.01;
  std::string basis_tag = "model";

  int n_sites() const { return static_cast<int>(onsite.size()); }
  int n_electrons() const { return n_up + n_dn; }

  Eigen::MatrixXd hamiltonian() const {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n_sites(), n_sites());
    h.diagonal() = onsite;
    for (const auto& b : bonds) {
      h(b.i, b.j) += b.t;
      h(b.j, b.i) += b.t;
    }
    return h;
  }
};

inline void validate_model(const TightBindingModel& m) {
  const int n = m.n_sites();
  if (static_cast<int>(m.site_positions.size()) != n)
    throw ValidationError("site position count does not match onsite count");
  std::set<std::pair<int, int>> seen;
  for (const auto& b : m.bonds) {
    if (b.i < 0 || b.i >= n || b.j < 0 || b.j >= n)
      throw ValidationError("bond index out of range");
    if (b.i == b.j) throw ValidationError("self-bond on site " + std::to_string(b.i));
    auto key = std::minmax(b.i, b.j);
    if (!seen.insert(key).second)
      throw ValidationError("duplicate bond " + std::to_string(b.i) + "-" +
                            std::to_string(b.j));
  }
  if (m.n_up < 0 || m.n_dn < 0 || m.n_electrons() > 2 * n)
    throw ValidationError("electron count must satisfy 0 <= N <= 2*sites");
  if (m.smearing_width < 0) throw ValidationError("smearing width must be >= 0");
  if (m.interaction_u && static_cast<int>(m.interaction_u->size()) != n)
    throw ValidationError("interaction_u length does not match site count");
}

struct MeanFieldResult {
  double energy = 0.0;  // free energy: band sum - T*S - double counting
  Eigen::VectorXd density_up, density_dn;
  Eigen::VectorXd orbital_energies_up, orbital_energies_dn;
  Eigen::MatrixXd orbitals_up, orbitals_dn;
  Eigen::VectorXd occ_up, occ_dn;
  bool converged = true;
  int scf_iterations = 0;

  Eigen::VectorXd density() const { return density_up + density_dn; }
};

struct SolveOptions {
  double scf_tol = 1e-12;
  int scf_max_iter = 500;
  double mixing = 0.3;
};

namespace detail {

inline double fermi(double x) {
  // Stable 1/(1+exp(x)).
  if (x > 0) {
    double e = std::exp(-x);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(x));
}

struct Occupation {
  Eigen::VectorXd f;
  double entropy = 0.0;
};

/// Occupations for N electrons in one spin channel. Width 0 is aufbau and
/// rejects an ambiguous (degenerate) Fermi level; width > 0 is Fermi-Dirac
/// with the chemical potential located by bisection.
inline Occupation occupy(const Eigen::VectorXd& eps, int n_elec, double width) {
  const int n = static_cast<int>(eps.size());
  Occupation occ;
  occ.f = Eigen::VectorXd::Zero(n);
  if (n_elec == 0) return occ;
  if (n_elec > n)
    throw ValidationError("cannot place " + std::to_string(n_elec) + " electrons in " +
                          std::to_string(n) + " orbitals per spin");
  if (width == 0.0) {
    if (n_elec < n) {
      double scale = std::max(1.0, eps.cwiseAbs().maxCoeff());
      if (eps[n_elec] - eps[n_elec - 1] < 1e-12 * scale)
        throw ValidationError(
            "degenerate Fermi level at zero smearing; use a nonzero smearing width");
    }
    occ.f.head(n_elec).setOnes();
    return occ;
  }
  if (n_elec == n) {
    occ.f.setOnes();
    return occ;
  }
  double lo = eps.minCoeff() - 50 * width - 1, hi = eps.maxCoeff() + 50 * width + 1;
  auto count = [&](double mu) {
    double s = 0;
    for (int k = 0; k < n; ++k) s += fermi((eps[k] - mu) / width);
    return s;
  };
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    if (count(mid) < n_elec) lo = mid;
    else hi = mid;
  }
  double mu = 0.5 * (lo + hi);
  for (int k = 0; k < n; ++k) {
    double f = fermi((eps[k] - mu) / width);
    occ.f[k] = f;
    if (f > 1e-300 && f < 1.0)
      occ.entropy -= f * std::log(f) + (1.0 - f) * std::log1p(-f);
  }
  return occ;
}

struct Channel {
  Eigen::VectorXd eps, occ, density;
  Eigen::MatrixXd orbitals;
  double band_energy = 0.0, entropy = 0.0;
};

inline Channel solve_channel(const Eigen::MatrixXd& h, int n_elec, double width) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  Channel ch;
  ch.eps = es.eigenvalues();
  ch.orbitals = es.eigenvectors();
  auto occ = occupy(ch.eps, n_elec, width);
  ch.occ = occ.f;
  ch.entropy = occ.entropy;
  ch.band_energy = ch.occ.dot(ch.eps);
  ch.density = (ch.orbitals.array().square().matrix() * ch.occ);
  return ch;
}

}  // namespace detail

/// Solve the model under an embedding potential v (site basis). The returned
/// energy is the electronic free energy, so dE/dv_i = rho_i holds at every
/// smearing width. With interaction_u present the solve iterates densities to
/// self-consistency (linear mixing); non-convergence is flagged, not thrown.
inline MeanFieldResult solve(const TightBindingModel& model, const field::SiteVector& v_emb,
                             const SolveOptions& opts = {}) {
  validate_model(model);
  if (v_emb.basis_tag != model.basis_tag)
    throw ValidationError("potential basis '" + v_emb.basis_tag +
                          "' does not match model basis '" + model.basis_tag + "'");
  if (v_emb.values.size() != model.n_sites())
    throw ValidationError("potential length does not match model site count");

  const int n = model.n_sites();
  const double w = model.smearing_width;
  Eigen::MatrixXd h0 = model.hamiltonian();
  h0.diagonal() += v_emb.values;

  MeanFieldResult res;
  if (n == 0) return res;  // empty model: zero energy, empty density

  const bool interacting = model.interaction_u && model.interaction_u->cwiseAbs().maxCoeff() > 0;

  if (model.spin_mode == SpinMode::Restricted && model.n_up != model.n_dn && interacting)
    throw ValidationError("restricted mean field with U requires n_up == n_dn");

  auto finish = [&](const detail::Channel& up, const detail::Channel& dn, double u_dc,
                    bool conv, int iters) {
    res.density_up = up.density;
    res.density_dn = dn.density;
    res.orbital_energies_up = up.eps;
    res.orbital_energies_dn = dn.eps;
    res.orbitals_up = up.orbitals;
    res.orbitals_dn = dn.orbitals;
    res.occ_up = up.occ;
    res.occ_dn = dn.occ;
    res.energy = up.band_energy + dn.band_energy - w * (up.entropy + dn.entropy) - u_dc;
    res.converged = conv;
    res.scf_iterations = iters;
  };

  if (!interacting) {
    if (model.spin_mode == SpinMode::Restricted) {
      auto ch = detail::solve_channel(h0, model.n_up, w);
      auto dn = model.n_dn == model.n_up ? ch : detail::solve_channel(h0, model.n_dn, w);
      finish(ch, dn, 0.0, true, 0);
    } else {
      auto up = detail::solve_channel(h0, model.n_up, w);
      auto dn = detail::solve_channel(h0, model.n_dn, w);
      finish(up, dn, 0.0, true, 0);
    }
    return res;
  }

  const Eigen::VectorXd& u = *model.interaction_u;
  Eigen::VectorXd n_up_in =
      Eigen::VectorXd::Constant(n, static_cast<double>(model.n_up) / n);
  Eigen::VectorXd n_dn_in =
      Eigen::VectorXd::Constant(n, static_cast<double>(model.n_dn) / n);
  bool conv = false;
  int it = 0;
  detail::Channel up, dn;
  for (; it < opts.scf_max_iter; ++it) {
    Eigen::MatrixXd h_up = h0, h_dn = h0;
    h_up.diagonal() += u.cwiseProduct(n_dn_in);
    h_dn.diagonal() += u.cwiseProduct(n_up_in);
    up = detail::solve_channel(h_up, model.n_up, w);
    dn = model.spin_mode == SpinMode::Restricted && model.n_dn == model.n_up
             ? up
             : detail::solve_channel(h_dn, model.n_dn, w);
    double change = std::max((up.density - n_up_in).cwiseAbs().maxCoeff(),
                             (dn.density - n_dn_in).cwiseAbs().maxCoeff());
    if (change < opts.scf_tol) {
      conv = true;
      ++it;
      break;
    }
    n_up_in += opts.mixing * (up.density - n_up_in);
    n_dn_in += opts.mixing * (dn.density - n_dn_in);
  }
  double u_dc = u.cwiseProduct(up.density).dot(dn.density);
  finish(up, dn, u_dc, conv, it);
  return res;
}

inline MeanFieldResult solve(const TightBindingModel& model, const SolveOptions& opts = {}) {
  field::SiteVector zero;
  zero.values = Eigen::VectorXd::Zero(model.n_sites());
  zero.basis_tag = model.basis_tag;
  return solve(model, zero, opts);
}

inline field::SiteVector zero_potential(const TightBindingModel& model) {
  field::SiteVector v;
  v.values = Eigen::VectorXd::Zero(model.n_sites());
  v.basis_tag = model.basis_tag;
  return v;
}

// ---------------------------------------------------------------------------
// Capping of a model fragment.

struct CapSpec {
  double onsite_offset = 0.0;  // added to the lost neighbor's onsite energy
};

struct SeveredBond {
  int inside, outside;
  double t;
};

/// A fragment model plus the bookkeeping tying it back to the parent model:
/// shared_index[k] is the parent site whose potential fragment site k feels
/// (caps map to the site they replace).
struct CappedModel {
  TightBindingModel model;
  std::vector<int> shared_index;
  std::vector<SeveredBond> severed;
  int n_caps = 0;
};

/// Cut `fragment_sites` out of the model. Each severed bond (i inside,
/// j outside) gets a cap site at j's position carrying the severed hopping
/// and one electron; electrons are (native_up, native_dn) plus the cap
/// electrons split as evenly as possible (extra one spin-up).
inline CappedModel capped_model(const TightBindingModel& model,
                                const std::set<int>& fragment_sites, int native_up,
                                int native_dn, const CapSpec& cap = {}) {
  validate_model(model);
  for (int s : fragment_sites)
    if (s < 0 || s >= model.n_sites())
      throw ValidationError("fragment site " + std::to_string(s) + " out of range");

  CappedModel out;
  std::vector<int> local(model.n_sites(), -1);
  for (int s : fragment_sites) {
    local[s] = static_cast<int>(out.model.onsite.size());
    out.model.onsite.conservativeResize(out.model.onsite.size() + 1);
    out.model.onsite[out.model.onsite.size() - 1] = model.onsite[s];
    out.model.site_positions.push_back(model.site_positions[s]);
    out.shared_index.push_back(s);
  }
  std::vector<double> u_values;
  if (model.interaction_u)
    for (int s : fragment_sites) u_values.push_back((*model.interaction_u)[s]);

  for (const auto& b : model.bonds) {
    bool in_i = fragment_sites.count(b.i) > 0, in_j = fragment_sites.count(b.j) > 0;
    if (in_i && in_j) {
      out.model.bonds.push_back({local[b.i], local[b.j], b.t});
    } else if (in_i || in_j) {
      int inside = in_i ? b.i : b.j;
      int outside = in_i ? b.j : b.i;
      out.severed.push_back({inside, outside, b.t});
    }
  }
  // Deterministic cap ordering: by (inside, outside).
  std::sort(out.severed.begin(), out.severed.end(), [](const auto& a, const auto& b) {
    return std::tie(a.inside, a.outside) < std::tie(b.inside, b.outside);
  });
  for (const auto& sb : out.severed) {
    int cap_idx = static_cast<int>(out.model.onsite.size());
    out.model.onsite.conservativeResize(cap_idx + 1);
    out.model.onsite[cap_idx] = model.onsite[sb.outside] + cap.onsite_offset;
    out.model.site_positions.push_back(model.site_positions[sb.outside]);
    out.shared_index.push_back(sb.outside);
    out.model.bonds.push_back({local[sb.inside], cap_idx, sb.t});
    if (model.interaction_u) u_values.push_back((*model.interaction_u)[sb.outside]);
  }
  out.n_caps = static_cast<int>(out.severed.size());
  if (model.interaction_u)
    out.model.interaction_u =
        Eigen::Map<const Eigen::VectorXd>(u_values.data(), u_values.size());
  out.model.n_up = native_up + (out.n_caps + 1) / 2;
  out.model.n_dn = native_dn + out.n_caps / 2;
  out.model.spin_mode = model.spin_mode;
  out.model.smearing_width = model.smearing_width;
  out.model.basis_tag = model.basis_tag + "/fragment";
  validate_model(out.model);
  return out;
}

/// The auxiliary model: one bonded pair per severed bond, two electrons per
/// pair. shared_index lists, per auxiliary site, the parent site it sits on.
inline CappedModel auxiliary_model(const TightBindingModel& model,
                                   const std::vector<SeveredBond>& severed,
                                   const CapSpec& cap = {}) {
  CappedModel out;
  int idx = 0;
  for (const auto& sb : severed) {
    out.model.onsite.conservativeResize(idx + 2);
    out.model.onsite[idx] = model.onsite[sb.outside] + cap.onsite_offset;
    out.model.onsite[idx + 1] = model.onsite[sb.inside] + cap.onsite_offset;
    out.model.site_positions.push_back(model.site_positions[sb.outside]);
    out.model.site_positions.push_back(model.site_positions[sb.inside]);
    out.shared_index.push_back(sb.outside);
    out.shared_index.push_back(sb.inside);
    out.model.bonds.push_back({idx, idx + 1, sb.t});
    idx += 2;
  }
  out.n_caps = idx;
  out.model.n_up = static_cast<int>(severed.size());
  out.model.n_dn = static_cast<int>(severed.size());
  out.model.spin_mode = SpinMode::Restricted;
  out.model.smearing_width = model.smearing_width;
  out.model.basis_tag = model.basis_tag + "/auxiliary";
  validate_model(out.model);
  return out;
}

// ---------------------------------------------------------------------------
// Model definition file (line-oriented; layout in docs/formats.md).

inline TightBindingModel parse_model_file(const std::string& text) {
  auto lines = split_lines(text);
  if (lines.empty() ||
      split_tokens(lines[0]) != std::vector<std::string>{"embercap-model", "1"})
    throw ParseError("expected 'embercap-model 1' header", 1);

  TightBindingModel m;
  int n_sites = -1;
  std::vector<bool> site_seen;
  std::vector<double> u_values;
  bool any_u = false;
  bool electrons_seen = false;

  for (size_t i = 1; i < lines.size(); ++i) {
    int ln = static_cast<int>(i) + 1;
    std::string line = lines[i];
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto toks = split_tokens(line);
    if (toks.empty()) continue;
    const std::string& key = toks[0];
    if (key == "sites") {
      if (toks.size() != 2) throw ParseError("sites needs 1 integer", ln);
      n_sites = static_cast<int>(parse_int(toks[1], ln));
      if (n_sites < 0) throw ParseError("negative site count", ln);
      m.onsite = Eigen::VectorXd::Zero(n_sites);
      m.site_positions.assign(n_sites, Eigen::Vector3d::Zero());
      site_seen.assign(n_sites, false);
      u_values.assign(n_sites, 0.0);
    } else if (key == "site") {
      if (n_sites < 0) throw ParseError("'site' before 'sites'", ln);
      if (toks.size() != 6 && toks.size() != 7)
        throw ParseError("site needs: index x y z onsite [u]", ln);
      int idx = static_cast<int>(parse_int(toks[1], ln));
      if (idx < 0 || idx >= n_sites) throw ParseError("site index out of range", ln);
      if (site_seen[idx]) throw ParseError("duplicate site " + std::to_string(idx), ln);
      site_seen[idx] = true;
      m.site_positions[idx] = Eigen::Vector3d(
          parse_double(toks[2], ln), parse_double(toks[3], ln), parse_double(toks[4], ln));
      m.onsite[idx] = parse_double(toks[5], ln);
      if (toks.size() == 7) {
        u_values[idx] = parse_double(toks[6], ln);
        any_u = true;
      }
    } else if (key == "bond") {
      if (toks.size() != 4) throw ParseError("bond needs: i j t", ln);
      int bi = static_cast<int>(parse_int(toks[1], ln));
      int bj = static_cast<int>(parse_int(toks[2], ln));
      m.bonds.push_back({bi, bj, parse_double(toks[3], ln)});
    } else if (key == "electrons") {
      if (toks.size() == 2) {
        int total = static_cast<int>(parse_int(toks[1], ln));
        m.n_up = (total + 1) / 2;
        m.n_dn = total / 2;
      } else if (toks.size() == 3) {
        m.n_up = static_cast<int>(parse_int(toks[1], ln));
        m.n_dn = static_cast<int>(parse_int(toks[2], ln));
      } else {
        throw ParseError("electrons needs 1 or 2 integers", ln);
      }
      electrons_seen = true;
    } else if (key == "spin") {
      if (toks.size() != 2 || (toks[1] != "restricted" && toks[1] != "unrestricted"))
        throw ParseError("spin must be 'restricted' or 'unrestricted'", ln);
      m.spin_mode = toks[1] == "restricted" ? SpinMode::Restricted : SpinMode::Unrestricted;
    } else if (key == "smearing") {
      if (toks.size() != 2) throw ParseError("smearing needs 1 number", ln);
      m.smearing_width = parse_double(toks[1], ln);
      if (m.smearing_width < 0) throw ParseError("smearing must be >= 0", ln);
    } else if (key == "basis") {
      if (toks.size() != 2) throw ParseError("basis needs 1 tag", ln);
      m.basis_tag = toks[1];
    } else {
      throw ParseError("unknown model key '" + key + "'", ln);
    }
  }
  if (n_sites < 0) throw ParseError("missing 'sites' line");
  for (int k = 0; k < n_sites; ++k)
    if (!site_seen[k]) throw ParseError("missing 'site " + std::to_string(k) + "' line");
  if (!electrons_seen) throw ParseError("missing 'electrons' line");
  if (any_u) m.interaction_u = Eigen::Map<const Eigen::VectorXd>(u_values.data(), n_sites);
  validate_model(m);
  return m;
}

inline std::string emit_model_file(const TightBindingModel& m) {
  std::string out = "embercap-model 1\n";
  out += "sites " + std::to_string(m.n_sites()) + "\n";
  for (int i = 0; i < m.n_sites(); ++i) {
    out += "site " + std::to_string(i);
    for (int k = 0; k < 3; ++k) out += " " + format_double(m.site_positions[i][k]);
    out += " " + format_double(m.onsite[i]);
    if (m.interaction_u) out += " " + format_double((*m.interaction_u)[i]);
    out += "\n";
  }
  for (const auto& b : m.bonds)
    out += "bond " + std::to_string(b.i) + " " + std::to_string(b.j) + " " +
           format_double(b.t) + "\n";
  out += "electrons " + std::to_string(m.n_up) + " " + std::to_string(m.n_dn) + "\n";
  out += std::string("spin ") +
         (m.spin_mode == SpinMode::Restricted ? "restricted" : "unrestricted") + "\n";
  out += "smearing " + format_double(m.smearing_width) + "\n";
  out += "basis " + m.basis_tag + "\n";
  return out;
}

/// Density of a solved model as a sites-space field (for the field file format).
inline field::SiteVector density_vector(const TightBindingModel& model,
                                        const MeanFieldResult& res) {
  field::SiteVector v;
  v.values = res.density();
  v.basis_tag = model.basis_tag;
  v.kind = field::FieldKind::Density;
  v.electrons = static_cast<double>(model.n_electrons());
  return v;
}

}  // namespace embercap::meanfield
