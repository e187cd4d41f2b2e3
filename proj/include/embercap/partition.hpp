#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "embercap/errors.hpp"
#include "embercap/lattice.hpp"
#include "embercap/textio.hpp"

namespace embercap::partition {

using lattice::BondGraph;
using lattice::CrystalCell;

// ---------------------------------------------------------------------------
// Cluster selection.

/// One neighbor-expansion directive. Source atoms are the current selection
/// filtered by element and/or the growth generation that added them (seeds
/// are generation 0). Candidate neighbors can be filtered by element, by the
/// number of bonds they share with the current selection, and by a Cartesian
/// half-space (evaluated in the unwrapped frame anchored at the first seed).
struct GrowthRule {
  std::optional<std::string> from_element;
  std::optional<int> from_generation;
  std::optional<std::string> neighbor_element;
  int min_shared = 1;
  /// Plane anchored at a selected atom (lowest index of anchor_element, or
  /// the first seed when unset) displaced by `offset`; candidates survive when
  /// side * dot(pos - plane_point, normal) > 0. Anchoring keeps the filter
  /// meaningful in the unwrapped growth frame.
  struct Halfspace {
    std::optional<std::string> anchor_element;
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
    Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
    int side = 1;
  };
  std::optional<Halfspace> halfspace;
};

struct FragmentSelection {
  std::set<int> cluster_atoms;
  std::set<int> environment_atoms;
};

inline FragmentSelection select_cluster(const CrystalCell& cell, const BondGraph& graph,
                                        const std::set<int>& seeds,
                                        const std::vector<GrowthRule>& rules) {
  if (seeds.empty()) throw ValidationError("seed set is empty");
  for (int s : seeds)
    if (s < 0 || s >= cell.n_sites())
      throw ValidationError("seed index " + std::to_string(s) + " out of range");

  std::map<int, int> generation;
  std::map<int, Eigen::Vector3d> placed;  // unwrapped Cartesian positions

  auto edge_vector = [&](int from, const lattice::Edge& e) -> Eigen::Vector3d {
    return cell.to_cartesian(cell.sites[e.neighbor].frac + e.image.cast<double>()) -
           cell.to_cartesian(cell.sites[from].frac);
  };

  const int anchor = *seeds.begin();
  placed[anchor] = cell.cartesian(anchor);
  generation[anchor] = 0;
  for (int s : seeds) {
    if (s == anchor) continue;
    generation[s] = 0;
    bool done = false;
    for (const auto& e : graph.adjacency[s]) {
      if (placed.count(e.neighbor)) {  // place through a bond when possible
        placed[s] = placed[e.neighbor] - edge_vector(s, e);
        done = true;
        break;
      }
    }
    if (!done) {  // minimum image relative to the anchor
      Eigen::Vector3d df = cell.sites[s].frac - cell.sites[anchor].frac;
      for (int k = 0; k < 3; ++k)
        if (cell.periodic[k]) df[k] -= std::round(df[k]);
      placed[s] = placed[anchor] + cell.to_cartesian(df);
    }
  }

  int max_gen = 0;
  for (size_t r = 0; r < rules.size(); ++r) {
    const GrowthRule& rule = rules[r];
    const int gen = static_cast<int>(r) + 1;
    if (rule.from_generation && (*rule.from_generation < 0 || *rule.from_generation > max_gen))
      throw ValidationError("rule " + std::to_string(r + 1) + " references generation " +
                            std::to_string(*rule.from_generation) + " which does not exist");
    if (rule.min_shared < 1) throw ValidationError("min_shared must be >= 1");
    if (rule.halfspace && rule.halfspace->normal.norm() < 1e-12)
      throw ValidationError("halfspace normal must be nonzero");

    // Candidates and their anchoring source edges (batch semantics: all
    // filters see the selection as it stood when the rule started).
    std::map<int, Eigen::Vector3d> candidates;
    for (const auto& [src, src_gen] : generation) {
      if (rule.from_element && cell.sites[src].element != *rule.from_element) continue;
      if (rule.from_generation && src_gen != *rule.from_generation) continue;
      for (const auto& e : graph.adjacency[src]) {
        int m = e.neighbor;
        if (generation.count(m)) continue;
        if (rule.neighbor_element && cell.sites[m].element != *rule.neighbor_element)
          continue;
        if (!candidates.count(m)) candidates[m] = placed.at(src) + edge_vector(src, e);
      }
    }

    Eigen::Vector3d plane_point = Eigen::Vector3d::Zero();
    if (rule.halfspace) {
      int anchor_atom = anchor;
      if (rule.halfspace->anchor_element) {
        anchor_atom = -1;
        for (const auto& [atom, g] : generation) {
          if (cell.sites[atom].element == *rule.halfspace->anchor_element) {
            anchor_atom = atom;
            break;
          }
        }
        if (anchor_atom < 0)
          throw ValidationError("halfspace anchor element '" +
                                *rule.halfspace->anchor_element +
                                "' not present in the selection");
      }
      plane_point = placed.at(anchor_atom) + rule.halfspace->offset;
    }

    std::vector<std::pair<int, Eigen::Vector3d>> accepted;
    for (const auto& [m, pos] : candidates) {
      std::set<int> sharers;
      for (const auto& e : graph.adjacency[m])
        if (generation.count(e.neighbor)) sharers.insert(e.neighbor);
      if (static_cast<int>(sharers.size()) < rule.min_shared) continue;
      if (rule.halfspace) {
        const auto& hs = *rule.halfspace;
        double side = hs.side * (pos - plane_point).dot(hs.normal.normalized());
        if (side <= 0) continue;
      }
      accepted.push_back({m, pos});
    }
    for (const auto& [m, pos] : accepted) {
      generation[m] = gen;
      placed[m] = pos;
    }
    max_gen = gen;
  }

  FragmentSelection sel;
  for (const auto& [atom, g] : generation) sel.cluster_atoms.insert(atom);
  for (int i = 0; i < cell.n_sites(); ++i)
    if (!sel.cluster_atoms.count(i)) sel.environment_atoms.insert(i);
  return sel;
}

// ---------------------------------------------------------------------------
// Capping.

struct Atom {
  std::string element;
  Eigen::Vector3d position;  // Å
};

struct CapAtom {
  std::string element;  // F, O, or B
  Eigen::Vector3d position;
  int provenance;  // the missing site this cap replaces
};

struct CappedFragment {
  std::vector<Atom> native_atoms;
  std::vector<CapAtom> cap_atoms;
  int total_charge = 0;
  int spin_multiplicity = 1;
  bool periodic = false;  // environment fragments keep the cell's periodicity
};

inline int cap_valence(const std::string& element) {
  if (element == "F") return 1;
  if (element == "O") return 2;
  if (element == "B") return 3;
  throw ValidationError("not a cap element: " + element);
}

/// Number of severed bonds healed by this fragment's caps.
inline int severed_bond_count(const CappedFragment& f) {
  int n = 0;
  for (const auto& c : f.cap_atoms) n += cap_valence(c.element);
  return n;
}

/// Composition string: native elements (C, N) first, then caps in valence
/// order (F, O, B), count suffix omitted when 1. "C15NF12O12" style.
inline std::string composition_string(const std::map<std::string, int>& counts) {
  static const std::vector<std::string> order = {"C", "N", "F", "O", "B", "H"};
  std::string out;
  auto emit = [&](const std::string& el, int n) {
    if (n <= 0) return;
    out += el;
    if (n > 1) out += std::to_string(n);
  };
  for (const auto& el : order) {
    auto it = counts.find(el);
    if (it != counts.end()) emit(el, it->second);
  }
  for (const auto& [el, n] : counts)
    if (std::find(order.begin(), order.end(), el) == order.end()) emit(el, n);
  return out;
}

inline std::string composition(const CappedFragment& f) {
  std::map<std::string, int> counts;
  for (const auto& a : f.native_atoms) counts[a.element]++;
  for (const auto& c : f.cap_atoms) counts[c.element]++;
  return composition_string(counts);
}

struct CapOptions {
  /// Per-element bond-length scale along each severed bond; 1.0 places the
  /// cap exactly at the missing site's lattice position.
  std::map<std::string, double> bond_scale;
};

namespace detail {

struct OffsetKey {
  int site;
  Eigen::Vector3i offset;
  bool operator<(const OffsetKey& o) const {
    if (site != o.site) return site < o.site;
    return std::lexicographical_compare(offset.data(), offset.data() + 3, o.offset.data(),
                                        o.offset.data() + 3);
  }
};

/// Unwrap a fragment into a connected Cartesian molecule: BFS over
/// intra-fragment bonds plus two-hop paths through missing neighbors (the
/// paths the caps will heal). Leftover components are anchored by minimum
/// image relative to the centroid of what is already placed.
inline std::map<int, Eigen::Vector3i> unwrap_fragment(const CrystalCell& cell,
                                                      const BondGraph& graph,
                                                      const std::set<int>& fragment) {
  std::map<int, Eigen::Vector3i> shift;
  std::deque<int> queue;
  auto place = [&](int site, const Eigen::Vector3i& s) {
    shift[site] = s;
    queue.push_back(site);
  };

  while (shift.size() < fragment.size()) {
    int start = -1;
    for (int s : fragment)
      if (!shift.count(s)) {
        start = s;
        break;
      }
    Eigen::Vector3i anchor_shift = Eigen::Vector3i::Zero();
    if (!shift.empty()) {
      Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
      for (const auto& [site, sh] : shift)
        centroid += cell.to_cartesian(cell.sites[site].frac + sh.cast<double>());
      centroid /= static_cast<double>(shift.size());
      Eigen::Vector3d df = cell.to_fractional(centroid) - cell.sites[start].frac;
      for (int k = 0; k < 3; ++k)
        anchor_shift[k] = cell.periodic[k] ? static_cast<int>(std::round(df[k])) : 0;
    }
    place(start, anchor_shift);
    while (!queue.empty()) {
      int i = queue.front();
      queue.pop_front();
      for (const auto& e : graph.adjacency[i]) {
        Eigen::Vector3i s1 = shift.at(i) + e.image;
        if (fragment.count(e.neighbor)) {
          if (!shift.count(e.neighbor)) place(e.neighbor, s1);
        } else {
          // Hop through the missing site to reach fragment atoms that share it.
          for (const auto& e2 : graph.adjacency[e.neighbor]) {
            if (!fragment.count(e2.neighbor) || shift.count(e2.neighbor)) continue;
            place(e2.neighbor, s1 + e2.image);
          }
        }
      }
    }
  }
  return shift;
}

}  // namespace detail

/// Cap both fragments of a selection. Cap elements follow the sharing count
/// of each missing site in the full cell's bond graph: 1 -> F (terminal),
/// 2 -> O (bridge), 3 -> B (facial). The cluster is emitted as an unwrapped
/// molecule (missing sites distinguished per periodic image); the environment
/// keeps the cell's periodic frame (missing sites keyed per site).
inline std::pair<CappedFragment, CappedFragment> cap_selection(
    const CrystalCell& cell, const BondGraph& graph, const FragmentSelection& sel,
    int cluster_charge, int cluster_multiplicity, const CapOptions& opts = {}) {
  if (sel.cluster_atoms.empty()) throw ValidationError("cluster selection is empty");
  for (int s : sel.cluster_atoms)
    if (sel.environment_atoms.count(s))
      throw ValidationError("cluster and environment overlap at site " + std::to_string(s));
  if (sel.cluster_atoms.size() + sel.environment_atoms.size() !=
      static_cast<size_t>(cell.n_sites()))
    throw ValidationError("selection does not cover the cell");

  auto scale_for = [&](const std::string& el) {
    auto it = opts.bond_scale.find(el);
    return it == opts.bond_scale.end() ? 1.0 : it->second;
  };

  auto build = [&](const std::set<int>& atoms, bool molecular, int charge,
                   int multiplicity) {
    CappedFragment frag;
    frag.total_charge = charge;
    frag.spin_multiplicity = multiplicity;
    frag.periodic = !molecular;

    std::map<int, Eigen::Vector3i> shift;
    if (molecular) shift = detail::unwrap_fragment(cell, graph, atoms);

    auto atom_position = [&](int i) {
      Eigen::Vector3d f = cell.sites[i].frac;
      if (molecular) f += shift.at(i).cast<double>();
      return cell.to_cartesian(f);
    };

    for (int i : atoms) frag.native_atoms.push_back({cell.sites[i].element, atom_position(i)});

    // Missing sites with their sharers.
    std::map<detail::OffsetKey, std::set<int>> missing;
    for (int i : atoms) {
      for (const auto& e : graph.adjacency[i]) {
        if (atoms.count(e.neighbor)) continue;
        Eigen::Vector3i off = molecular ? Eigen::Vector3i(shift.at(i) + e.image)
                                        : Eigen::Vector3i::Zero();
        missing[{e.neighbor, off}].insert(i);
      }
    }
    for (const auto& [key, sharers] : missing) {
      int count = static_cast<int>(sharers.size());
      if (count > 3)
        throw ValidationError(
            "missing site " + std::to_string(key.site) + " is shared by " +
            std::to_string(count) +
            " fragment atoms; no tetravalent cap exists in the scheme - include the site "
            "in the fragment instead");
      std::string element = count == 1 ? "F" : count == 2 ? "O" : "B";
      Eigen::Vector3d site_pos =
          cell.to_cartesian(cell.sites[key.site].frac + key.offset.cast<double>());
      double f = scale_for(element);
      Eigen::Vector3d pos = Eigen::Vector3d::Zero();
      for (int i : sharers) {
        Eigen::Vector3d pi = atom_position(i);
        pos += pi + f * (site_pos - pi);
      }
      pos /= static_cast<double>(count);
      frag.cap_atoms.push_back({element, pos, key.site});
    }
    return frag;
  };

  CappedFragment cluster = build(sel.cluster_atoms, true, cluster_charge, cluster_multiplicity);
  CappedFragment environment = build(sel.environment_atoms, false, 0, 1);
  return {cluster, environment};
}

// ---------------------------------------------------------------------------
// Auxiliary fragment.

struct AuxAtom {
  std::string element;
  Eigen::Vector3d position;
  int provenance;
  bool from_cluster;
};

struct AuxiliaryFragment {
  std::vector<AuxAtom> atoms;
  std::vector<std::vector<int>> components;  // atom indices, ascending
  Eigen::Matrix3d lattice;
  std::array<bool, 3> periodic{true, true, true};

  std::map<std::string, int> component_counts(int c) const {
    std::map<std::string, int> counts;
    for (int k : components[c]) counts[atoms[k].element]++;
    return counts;
  }
  std::string component_composition(int c) const {
    return composition_string(component_counts(c));
  }
  int component_valence_sum(int c) const {
    int v = 0;
    for (int k : components[c]) v += cap_valence(atoms[k].element);
    return v;
  }
  bool component_closed_shell(int c) const { return component_valence_sum(c) % 2 == 0; }
};

/// Union of both fragments' cap atoms with connected components computed at
/// the bond graph's cutoff (periodic minimum-image distances).
inline AuxiliaryFragment auxiliary_fragment(const CappedFragment& cluster,
                                            const CappedFragment& environment,
                                            const BondGraph& graph) {
  AuxiliaryFragment aux;
  aux.lattice = graph.lattice;
  aux.periodic = graph.periodic;
  for (const auto& c : cluster.cap_atoms) aux.atoms.push_back({c.element, c.position, c.provenance, true});
  for (const auto& c : environment.cap_atoms)
    aux.atoms.push_back({c.element, c.position, c.provenance, false});

  const int n = static_cast<int>(aux.atoms.size());
  Eigen::Matrix3d inv = aux.lattice.transpose().inverse();
  auto distance = [&](int i, int j) {
    Eigen::Vector3d df = inv * (aux.atoms[j].position - aux.atoms[i].position);
    for (int k = 0; k < 3; ++k)
      if (aux.periodic[k]) df[k] -= std::round(df[k]);
    return (aux.lattice.transpose() * df).norm();
  };

  std::vector<int> parent(n);
  for (int i = 0; i < n; ++i) parent[i] = i;
  std::function<int(int)> find = [&](int x) {
    return parent[x] == x ? x : parent[x] = find(parent[x]);
  };
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (distance(i, j) <= graph.cutoff) parent[find(i)] = find(j);

  std::map<int, std::vector<int>> comps;
  for (int i = 0; i < n; ++i) comps[find(i)].push_back(i);
  for (auto& [root, members] : comps) aux.components.push_back(members);
  std::sort(aux.components.begin(), aux.components.end());
  return aux;
}

// ---------------------------------------------------------------------------
// Geometry emission: extended-XYZ with a provenance column (-1 for natives,
// the replaced site index for caps).

inline std::string fragment_xyz(const CappedFragment& f, const std::string& name = "fragment") {
  std::string out = std::to_string(f.native_atoms.size() + f.cap_atoms.size()) + "\n";
  out += "Properties=species:S:1:pos:R:3:provenance:I:1 name=" + name +
         " composition=" + composition(f) + " charge=" + std::to_string(f.total_charge) +
         " multiplicity=" + std::to_string(f.spin_multiplicity) + "\n";
  auto line = [&](const std::string& el, const Eigen::Vector3d& p, int prov) {
    out += el + " " + format_double(p[0]) + " " + format_double(p[1]) + " " +
           format_double(p[2]) + " " + std::to_string(prov) + "\n";
  };
  for (const auto& a : f.native_atoms) line(a.element, a.position, -1);
  for (const auto& c : f.cap_atoms) line(c.element, c.position, c.provenance);
  return out;
}

inline std::string auxiliary_xyz(const AuxiliaryFragment& aux) {
  std::string out = std::to_string(aux.atoms.size()) + "\n";
  out += "Properties=species:S:1:pos:R:3:provenance:I:1:component:I:1 name=auxiliary\n";
  std::vector<int> comp_of(aux.atoms.size(), -1);
  for (size_t c = 0; c < aux.components.size(); ++c)
    for (int k : aux.components[c]) comp_of[k] = static_cast<int>(c);
  for (size_t k = 0; k < aux.atoms.size(); ++k) {
    const auto& a = aux.atoms[k];
    out += a.element + " " + format_double(a.position[0]) + " " +
           format_double(a.position[1]) + " " + format_double(a.position[2]) + " " +
           std::to_string(a.provenance) + " " + std::to_string(comp_of[k]) + "\n";
  }
  return out;
}

}  // namespace embercap::partition
