#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "embercap/manybody.hpp"
#include "embercap/oep.hpp"
#include "embercap/partition.hpp"
#include "embercap/textio.hpp"
#include "embercap/version.hpp"

namespace embercap::reports {

using json = nlohmann::ordered_json;

/// Excitation energies are rounded to 12 significant digits wherever they are
/// reported, so machine outputs stay byte-identical under exact symmetries
/// (constant shifts) that only move the last bits.
inline double round12(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::strtod(buf, nullptr);
}

// ---------------------------------------------------------------------------
// Partition report.

struct PartitionClusterRecord {
  std::string name;
  partition::CappedFragment cluster, environment;
  partition::AuxiliaryFragment auxiliary;
  double csm_score = -1.0;
  double csm_threshold = 1e-3;
  std::string csm_group;
};

inline json fragment_json(const partition::CappedFragment& f) {
  std::map<std::string, int> caps;
  for (const auto& c : f.cap_atoms) caps[c.element]++;
  json j;
  j["composition"] = partition::composition(f);
  j["n_native"] = f.native_atoms.size();
  j["n_caps"] = f.cap_atoms.size();
  j["cap_counts"] = caps;
  j["severed_bonds"] = partition::severed_bond_count(f);
  j["charge"] = f.total_charge;
  j["multiplicity"] = f.spin_multiplicity;
  j["periodic"] = f.periodic;
  return j;
}

inline json cluster_record_json(const PartitionClusterRecord& rec) {
  json j;
  j["name"] = rec.name;
  j["cluster"] = fragment_json(rec.cluster);
  j["environment"] = fragment_json(rec.environment);
  json aux;
  std::map<std::string, int> counts;
  for (const auto& a : rec.auxiliary.atoms) counts[a.element]++;
  aux["composition"] = partition::composition_string(counts);
  aux["n_atoms"] = rec.auxiliary.atoms.size();
  json comps = json::array();
  for (size_t c = 0; c < rec.auxiliary.components.size(); ++c) {
    json jc;
    jc["composition"] = rec.auxiliary.component_composition(static_cast<int>(c));
    jc["n_atoms"] = rec.auxiliary.components[c].size();
    jc["valence_sum"] = rec.auxiliary.component_valence_sum(static_cast<int>(c));
    jc["closed_shell"] = rec.auxiliary.component_closed_shell(static_cast<int>(c));
    comps.push_back(jc);
  }
  aux["components"] = comps;
  j["auxiliary"] = aux;
  if (rec.csm_score >= 0.0) {
    json sym;
    sym["group"] = rec.csm_group;
    sym["score"] = rec.csm_score;
    sym["threshold"] = rec.csm_threshold;
    sym["symmetric"] = rec.csm_score < rec.csm_threshold;
    j["symmetry"] = sym;
  }
  return j;
}

// ---------------------------------------------------------------------------
// OEP result.

inline json oep_result_json(const oep::OepResult& res) {
  json j;
  j["schema"] = kSchemaOepResult;
  j["converged"] = res.converged;
  j["status"] = res.status;
  j["iterations"] = res.iterations;
  j["w_value"] = res.w_value;
  j["residual_max"] = res.residual_max;
  j["basis_tag"] = res.v_emb.basis_tag;
  j["v_emb"] = std::vector<double>(res.v_emb.values.begin(), res.v_emb.values.end());
  j["residual"] = std::vector<double>(res.residual.begin(), res.residual.end());
  return j;
}

inline std::string trace_tsv(const oep::OepResult& res) {
  std::string out = "iter\tW\tgrad_inf\n";
  for (size_t k = 0; k < res.trace.size(); ++k)
    out += std::to_string(k) + "\t" + format_double(res.trace[k].w) + "\t" +
           format_double(res.trace[k].grad_inf) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Spectrum report.

inline json spectrum_json(const manybody::SpectrumReport& rep) {
  json j;
  j["schema"] = kSchemaSpectrumReport;
  j["degeneracy_tol"] = rep.degeneracy_tol;
  j["report_threshold"] = rep.report_threshold;
  json states = json::array();
  for (const auto& st : rep.states) {
    json s;
    s["energy"] = st.energy;
    s["delta_e"] = round12(st.delta_e);
    s["sz"] = st.sz;
    s["s_squared"] = st.s_squared;
    s["multiplicity"] = st.multiplicity;
    s["degeneracy_group"] = st.degeneracy_group;
    if (!st.label.empty()) s["label"] = st.label;
    if (st.double_excitation_flag) s["double_excitation"] = true;
    json rows = json::array();
    for (const auto& row : st.dominant.rows) {
      json r;
      r["ket"] = row.ket;
      r["c"] = row.c;
      rows.push_back(r);
    }
    s["dominant"] = rows;
    s["sum_c2"] = st.dominant.sum_c2;
    states.push_back(s);
  }
  j["states"] = states;
  return j;
}

/// Aligned plain-text table: one row per state with its label, spin,
/// excitation energy, the leading dominant kets with coefficients, and the
/// summed weight over every reported configuration.
inline std::string spectrum_table(const manybody::SpectrumReport& rep,
                                  size_t max_kets = 6) {
  std::string out;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%-10s %4s %6s %14s %14s %8s  %s\n", "state", "2S+1",
                "sz", "E", "dE", "sum c^2", "dominant configurations");
  out += buf;
  out += std::string(100, '-') + "\n";
  for (const auto& st : rep.states) {
    std::string configs;
    for (size_t k = 0; k < st.dominant.rows.size(); ++k) {
      if (k == max_kets) {
        configs += "...";
        break;
      }
      std::snprintf(buf, sizeof(buf), "%+.3f|%s> ", st.dominant.rows[k].c,
                    st.dominant.rows[k].ket.c_str());
      configs += buf;
    }
    std::snprintf(buf, sizeof(buf), "%-10s %4d %6.1f %14.8f %14.10g %8.4f  ",
                  st.label.empty() ? "-" : st.label.c_str(), st.multiplicity, st.sz,
                  st.energy, round12(st.delta_e), st.dominant.sum_c2);
    out += buf;
    out += configs + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

inline json error_record(const std::string& kind, const std::string& message) {
  json j;
  j["schema"] = kSchemaErrorRecord;
  j["error"] = kind;
  j["message"] = message;
  return j;
}

}  // namespace embercap::reports
