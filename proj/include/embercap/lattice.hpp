#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "embercap/errors.hpp"
#include "embercap/textio.hpp"

namespace embercap::lattice {

inline constexpr double kDefaultBondCutoff = 1.8;  // Å, between diamond 1st/2nd shells

inline const std::set<std::string>& known_elements() {
  static const std::set<std::string> table = {
      "H", "He", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl"};
  return table;
}

struct Site {
  std::string element;
  Eigen::Vector3d frac;  // fractional, wrapped into [0,1) on periodic axes
};

/// Periodic crystal structure. Lattice rows are the lattice vectors in Å;
/// Cartesian position of fractional f is lattice^T * f.
struct CrystalCell {
  Eigen::Matrix3d lattice = Eigen::Matrix3d::Identity();
  std::vector<Site> sites;
  std::array<bool, 3> periodic{true, true, true};
  std::string comment;

  Eigen::Vector3d cartesian(int i) const { return lattice.transpose() * sites[i].frac; }
  Eigen::Vector3d to_cartesian(const Eigen::Vector3d& frac) const {
    return lattice.transpose() * frac;
  }
  Eigen::Vector3d to_fractional(const Eigen::Vector3d& cart) const {
    return lattice.transpose().inverse() * cart;
  }
  int n_sites() const { return static_cast<int>(sites.size()); }

  std::map<std::string, int> element_counts() const {
    std::map<std::string, int> counts;
    for (const auto& s : sites) counts[s.element]++;
    return counts;
  }
};

inline double wrap_unit(double x) {
  double y = x - std::floor(x);
  if (y >= 1.0) y -= 1.0;
  return y;
}

/// Enforce cell invariants in place: nonsingular lattice, known elements,
/// coordinates wrapped on periodic axes.
inline void validate_cell(CrystalCell& cell) {
  if (std::abs(cell.lattice.determinant()) <= 1e-9)
    throw ValidationError("lattice matrix is singular (|det| <= 1e-9 A^3)");
  for (auto& site : cell.sites) {
    if (!known_elements().count(site.element))
      throw ValidationError("unknown element symbol '" + site.element + "'");
    for (int k = 0; k < 3; ++k) {
      if (!std::isfinite(site.frac[k]))
        throw ValidationError("non-finite fractional coordinate");
      if (cell.periodic[k]) site.frac[k] = wrap_unit(site.frac[k]);
    }
  }
}

// ---------------------------------------------------------------------------
// Structure file parsing.  Two formats are accepted (documented in
// docs/formats.md): VASP-style POSCAR and extended-XYZ with a Lattice header.

namespace detail {

inline bool looks_like_extxyz(const std::vector<std::string>& lines) {
  if (lines.size() < 2) return false;
  auto toks = split_tokens(lines[0]);
  if (toks.size() != 1) return false;
  for (char c : toks[0])
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  return lines[1].find("Lattice=") != std::string::npos ||
         lines[1].find("lattice=") != std::string::npos;
}

inline CrystalCell parse_poscar(const std::vector<std::string>& lines) {
  auto need = [&](size_t idx, const char* what) -> const std::string& {
    if (idx >= lines.size())
      throw ParseError(std::string("unexpected end of file, expected ") + what,
                       static_cast<int>(lines.size()) + 1);
    return lines[idx];
  };

  CrystalCell cell;
  cell.comment = need(0, "comment line");

  auto scale_toks = split_tokens(need(1, "scale factor"));
  if (scale_toks.size() != 1) throw ParseError("expected a single scale factor", 2);
  double scale = parse_double(scale_toks[0], 2);
  if (scale <= 0.0) throw ParseError("scale factor must be positive", 2);

  for (int r = 0; r < 3; ++r) {
    auto toks = split_tokens(need(2 + r, "lattice row"));
    if (toks.size() < 3) throw ParseError("lattice row needs 3 numbers", 3 + r);
    for (int c = 0; c < 3; ++c) cell.lattice(r, c) = scale * parse_double(toks[c], 3 + r);
  }

  auto species = split_tokens(need(5, "species line"));
  if (species.empty()) throw ParseError("empty species line", 6);
  for (const auto& sp : species) {
    if (!sp.empty() && std::isdigit(static_cast<unsigned char>(sp[0])))
      throw ParseError("species line must hold element symbols, got '" + sp + "'", 6);
  }

  auto count_toks = split_tokens(need(6, "counts line"));
  if (count_toks.size() != species.size())
    throw ParseError("species/count mismatch: " + std::to_string(species.size()) +
                         " symbols vs " + std::to_string(count_toks.size()) + " counts",
                     7);
  std::vector<long> counts;
  long total = 0;
  for (const auto& t : count_toks) {
    long c = parse_int(t, 7);
    if (c < 0) throw ParseError("negative species count", 7);
    counts.push_back(c);
    total += c;
  }

  size_t idx = 7;
  std::string mode = need(idx, "coordinate mode");
  if (!mode.empty() && (mode[0] == 's' || mode[0] == 'S')) {
    ++idx;  // selective-dynamics marker; per-atom flags are ignored below
    mode = need(idx, "coordinate mode");
  }
  bool direct;
  char m = mode.empty() ? '\0' : mode[0];
  if (m == 'd' || m == 'D') direct = true;
  else if (m == 'c' || m == 'C' || m == 'k' || m == 'K') direct = false;
  else throw ParseError("expected 'Direct' or 'Cartesian', got '" + mode + "'",
                        static_cast<int>(idx) + 1);
  ++idx;

  Eigen::Matrix3d inv = cell.lattice.transpose().inverse();
  for (size_t g = 0; g < species.size(); ++g) {
    for (long k = 0; k < counts[g]; ++k) {
      auto toks = split_tokens(need(idx, "coordinate line"));
      if (toks.size() < 3)
        throw ParseError("coordinate line needs 3 numbers", static_cast<int>(idx) + 1);
      Eigen::Vector3d v(parse_double(toks[0], static_cast<int>(idx) + 1),
                        parse_double(toks[1], static_cast<int>(idx) + 1),
                        parse_double(toks[2], static_cast<int>(idx) + 1));
      Site s;
      s.element = species[g];
      s.frac = direct ? v : Eigen::Vector3d(inv * v);
      cell.sites.push_back(std::move(s));
      ++idx;
    }
  }
  validate_cell(cell);
  return cell;
}

inline CrystalCell parse_extxyz(const std::vector<std::string>& lines) {
  long n_atoms = parse_int(split_tokens(lines[0])[0], 1);
  if (n_atoms < 0) throw ParseError("negative atom count", 1);

  const std::string& header = lines[1];
  size_t pos = header.find("Lattice=");
  if (pos == std::string::npos) pos = header.find("lattice=");
  if (pos == std::string::npos)
    throw ParseError("extended-XYZ requires a Lattice=\"...\" header", 2);
  size_t q1 = header.find('"', pos);
  size_t q2 = q1 == std::string::npos ? std::string::npos : header.find('"', q1 + 1);
  if (q1 == std::string::npos || q2 == std::string::npos)
    throw ParseError("Lattice value must be double-quoted", 2);
  auto lat_toks = split_tokens(header.substr(q1 + 1, q2 - q1 - 1));
  if (lat_toks.size() != 9) throw ParseError("Lattice needs 9 numbers", 2);

  CrystalCell cell;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) cell.lattice(r, c) = parse_double(lat_toks[3 * r + c], 2);
  cell.comment = "";

  Eigen::Matrix3d inv = cell.lattice.transpose().inverse();
  for (long k = 0; k < n_atoms; ++k) {
    size_t idx = 2 + static_cast<size_t>(k);
    if (idx >= lines.size())
      throw ParseError("unexpected end of file, expected atom line",
                       static_cast<int>(lines.size()) + 1);
    auto toks = split_tokens(lines[idx]);
    if (toks.size() < 4)
      throw ParseError("atom line needs 'element x y z'", static_cast<int>(idx) + 1);
    Site s;
    s.element = toks[0];
    Eigen::Vector3d cart(parse_double(toks[1], static_cast<int>(idx) + 1),
                         parse_double(toks[2], static_cast<int>(idx) + 1),
                         parse_double(toks[3], static_cast<int>(idx) + 1));
    s.frac = inv * cart;
    cell.sites.push_back(std::move(s));
  }
  validate_cell(cell);
  return cell;
}

}  // namespace detail

inline CrystalCell parse_structure(const std::string& text) {
  auto lines = split_lines(text);
  if (lines.empty()) throw ParseError("empty structure file", 1);
  if (detail::looks_like_extxyz(lines)) return detail::parse_extxyz(lines);
  return detail::parse_poscar(lines);
}

/// Emit a VASP-style file. Site ordering is preserved exactly: the species
/// line lists consecutive runs of equal elements (legal in the format), so
/// parse(emit(cell)) reproduces the cell including ordering.
inline std::string emit_structure(const CrystalCell& cell) {
  std::string out;
  out += cell.comment.empty() ? "embercap structure" : cell.comment;
  out += "\n1.0\n";
  char buf[96];
  for (int r = 0; r < 3; ++r) {
    std::snprintf(buf, sizeof(buf), "  %20.16f %20.16f %20.16f\n", cell.lattice(r, 0),
                  cell.lattice(r, 1), cell.lattice(r, 2));
    out += buf;
  }
  std::vector<std::pair<std::string, int>> runs;
  for (const auto& s : cell.sites) {
    if (runs.empty() || runs.back().first != s.element) runs.push_back({s.element, 1});
    else runs.back().second++;
  }
  std::string symbols, counts;
  for (const auto& [el, n] : runs) {
    symbols += " " + el;
    counts += " " + std::to_string(n);
  }
  out += symbols + "\n" + counts + "\nDirect\n";
  for (const auto& s : cell.sites) {
    std::snprintf(buf, sizeof(buf), "  %20.16f %20.16f %20.16f\n", s.frac[0], s.frac[1],
                  s.frac[2]);
    out += buf;
  }
  return out;
}

inline std::string emit_extxyz(const CrystalCell& cell) {
  std::string out = std::to_string(cell.sites.size()) + "\n";
  out += "Lattice=\"";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      out += format_double(cell.lattice(r, c)) + (r == 2 && c == 2 ? "" : " ");
  out += "\" Properties=species:S:1:pos:R:3\n";
  for (int i = 0; i < cell.n_sites(); ++i) {
    Eigen::Vector3d r = cell.cartesian(i);
    out += cell.sites[i].element + " " + format_double(r[0]) + " " + format_double(r[1]) +
           " " + format_double(r[2]) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Replicate the cell reps[0]*reps[1]*reps[2] times. Ordering is
/// deterministic: original site major, image (lexicographic) minor.
inline CrystalCell build_supercell(const CrystalCell& cell, const std::array<int, 3>& reps) {
  for (int k = 0; k < 3; ++k)
    if (reps[k] < 1) throw ValidationError("supercell repetitions must be >= 1");
  CrystalCell out;
  out.comment = cell.comment;
  out.periodic = cell.periodic;
  out.lattice = cell.lattice;
  for (int k = 0; k < 3; ++k) out.lattice.row(k) *= static_cast<double>(reps[k]);
  out.sites.reserve(cell.sites.size() * reps[0] * reps[1] * reps[2]);
  for (const auto& s : cell.sites) {
    for (int i0 = 0; i0 < reps[0]; ++i0)
      for (int i1 = 0; i1 < reps[1]; ++i1)
        for (int i2 = 0; i2 < reps[2]; ++i2) {
          Site t = s;
          t.frac = Eigen::Vector3d((s.frac[0] + i0) / reps[0], (s.frac[1] + i1) / reps[1],
                                   (s.frac[2] + i2) / reps[2]);
          out.sites.push_back(std::move(t));
        }
  }
  validate_cell(out);
  return out;
}

// ---------------------------------------------------------------------------

struct Edge {
  int neighbor;
  Eigen::Vector3i image;  // periodic image offset of the neighbor
  double distance;        // Å
};

struct BondGraph {
  double cutoff = 0.0;
  Eigen::Matrix3d lattice;
  std::array<bool, 3> periodic{true, true, true};
  std::vector<std::vector<Edge>> adjacency;

  int degree(int i) const { return static_cast<int>(adjacency[i].size()); }
  /// Distinct neighbor sites bonded to `i` (image multiplicity collapsed).
  std::set<int> neighbor_sites(int i) const {
    std::set<int> out;
    for (const auto& e : adjacency[i]) out.insert(e.neighbor);
    return out;
  }
};

/// All-pairs neighbor search within `cutoff`, extended over every periodic
/// image that can reach into the cutoff sphere (no silent truncation for
/// cutoffs beyond half the cell extent).
inline BondGraph neighbor_graph(const CrystalCell& cell, double cutoff) {
  if (cutoff <= 0.0) throw ValidationError("bond cutoff must be positive");
  BondGraph g;
  g.cutoff = cutoff;
  g.lattice = cell.lattice;
  g.periodic = cell.periodic;
  g.adjacency.assign(cell.sites.size(), {});

  // Image search range per axis: cutoff divided by the spacing between
  // lattice planes normal to that axis.
  double vol = std::abs(cell.lattice.determinant());
  std::array<int, 3> range{0, 0, 0};
  for (int k = 0; k < 3; ++k) {
    if (!cell.periodic[k]) continue;
    Eigen::Vector3d cross =
        cell.lattice.row((k + 1) % 3).cross(Eigen::Vector3d(cell.lattice.row((k + 2) % 3)));
    double plane_distance = vol / cross.norm();
    range[k] = static_cast<int>(std::ceil(cutoff / plane_distance));
  }

  const int n = cell.n_sites();
  std::vector<Eigen::Vector3d> cart(n);
  for (int i = 0; i < n; ++i) cart[i] = cell.cartesian(i);

  const double cutoff2 = cutoff * cutoff;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int o0 = -range[0]; o0 <= range[0]; ++o0)
        for (int o1 = -range[1]; o1 <= range[1]; ++o1)
          for (int o2 = -range[2]; o2 <= range[2]; ++o2) {
            if (i == j && o0 == 0 && o1 == 0 && o2 == 0) continue;
            Eigen::Vector3d shift =
                cell.lattice.transpose() * Eigen::Vector3d(o0, o1, o2);
            Eigen::Vector3d d = cart[j] + shift - cart[i];
            double d2 = d.squaredNorm();
            if (d2 <= cutoff2)
              g.adjacency[i].push_back({j, Eigen::Vector3i(o0, o1, o2), std::sqrt(d2)});
          }
    }
  }
  return g;
}

inline std::map<int, int> degree_histogram(const BondGraph& g) {
  std::map<int, int> hist;
  for (const auto& adj : g.adjacency) hist[static_cast<int>(adj.size())]++;
  return hist;
}

// ---------------------------------------------------------------------------

/// Carve an NV-style defect: remove the C atom at `vacancy_site` and relabel
/// the adjacent C at `substitution_site` as N. Deletion compacts site indices;
/// all other sites keep their relative order.
inline CrystalCell make_nv_defect(const CrystalCell& cell, int vacancy_site,
                                  int substitution_site,
                                  double bond_cutoff = kDefaultBondCutoff) {
  auto check_index = [&](int i) {
    if (i < 0 || i >= cell.n_sites())
      throw ValidationError("site index " + std::to_string(i) + " out of range");
  };
  check_index(vacancy_site);
  check_index(substitution_site);
  if (vacancy_site == substitution_site)
    throw ValidationError("vacancy and substitution sites must differ");
  for (int i : {vacancy_site, substitution_site}) {
    if (cell.sites[i].element != "C")
      throw ValidationError("site " + std::to_string(i) + " is " + cell.sites[i].element +
                            ", expected C");
  }
  BondGraph g = neighbor_graph(cell, bond_cutoff);
  if (!g.neighbor_sites(vacancy_site).count(substitution_site))
    throw ValidationError("sites " + std::to_string(vacancy_site) + " and " +
                          std::to_string(substitution_site) +
                          " are not bonded at cutoff " + format_double(bond_cutoff));
  CrystalCell out = cell;
  out.sites[substitution_site].element = "N";
  out.sites.erase(out.sites.begin() + vacancy_site);
  return out;
}

/// Conventional cubic diamond cell: 8 C atoms, lattice constant a (Å).
inline CrystalCell diamond_conventional_cell(double a) {
  CrystalCell cell;
  cell.comment = "cubic diamond";
  cell.lattice = a * Eigen::Matrix3d::Identity();
  const double q = 0.25, h = 0.5;
  const double pos[8][3] = {{0, 0, 0}, {0, h, h}, {h, 0, h}, {h, h, 0},
                            {q, q, q}, {q, 3 * q, 3 * q}, {3 * q, q, 3 * q}, {3 * q, 3 * q, q}};
  for (const auto& p : pos) cell.sites.push_back({"C", Eigen::Vector3d(p[0], p[1], p[2])});
  validate_cell(cell);
  return cell;
}

/// Primitive fcc diamond cell: 2 C atoms.
inline CrystalCell diamond_primitive_cell(double a) {
  CrystalCell cell;
  cell.comment = "primitive diamond";
  cell.lattice << 0, a / 2, a / 2, a / 2, 0, a / 2, a / 2, a / 2, 0;
  cell.sites.push_back({"C", Eigen::Vector3d(0, 0, 0)});
  cell.sites.push_back({"C", Eigen::Vector3d(0.25, 0.25, 0.25)});
  validate_cell(cell);
  return cell;
}

}  // namespace embercap::lattice
