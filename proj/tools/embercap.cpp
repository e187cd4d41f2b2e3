// embercap command-line workbench: carve and cap defect clusters, optimize
// embedding potentials, and compute embedded excitation spectra.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <set>
#include <string>

#include "embercap/lattice.hpp"
#include "embercap/manybody.hpp"
#include "embercap/meanfield.hpp"
#include "embercap/nvmodel.hpp"
#include "embercap/oep.hpp"
#include "embercap/partition.hpp"
#include "embercap/reports.hpp"
#include "embercap/symmetry.hpp"
#include "embercap/textio.hpp"
#include "embercap/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace embercap;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitParse = 3;
constexpr int kExitConvergence = 4;
constexpr int kExitInternal = 5;

struct CliContext {
  fs::path config_path;
  fs::path out_dir = "out";
  double seed_tolerance = 1e-3;  // Å, for position-specified seeds
  bool verbose = false;

  fs::path resolve(const std::string& p) const {
    fs::path path(p);
    if (path.is_absolute()) return path;
    return config_path.parent_path() / path;
  }
  void note(const std::string& msg) const {
    if (verbose) std::cerr << "embercap: " << msg << "\n";
  }
};

void require_keys(const json& obj, const std::set<std::string>& allowed,
                  const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key))
      throw ValidationError("unknown key '" + key + "' in " + where +
                            " (strict parsing; see docs/formats.md)");
}

json load_config(const CliContext& ctx, const std::string& expected_schema) {
  std::string text = read_file(ctx.config_path);
  json cfg;
  try {
    cfg = json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!cfg.is_object() || !cfg.contains("schema") || cfg["schema"] != expected_schema)
    throw ValidationError("config must declare \"schema\": \"" + expected_schema + "\"");
  return cfg;
}

void write_out(const CliContext& ctx, const std::string& name, const std::string& content) {
  fs::create_directories(ctx.out_dir);
  write_file_atomic(ctx.out_dir / name, content);
  ctx.note("wrote " + (ctx.out_dir / name).string());
}

Eigen::Vector3d parse_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3)
    throw ValidationError(where + " must be a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

// ---------------------------------------------------------------------------
// carve

struct DefectInfo {
  bool present = false;
  Eigen::Vector3d axis = Eigen::Vector3d::Zero();  // vacancy - substitution
};

lattice::CrystalCell apply_defect(const json& spec, const lattice::CrystalCell& cell,
                                  double cutoff, DefectInfo& info) {
  require_keys(spec, {"vacancy_site", "substitution_site"}, "defect");
  lattice::BondGraph g = lattice::neighbor_graph(cell, cutoff);
  int vac = 0;
  if (spec.contains("vacancy_site") && spec["vacancy_site"] != "auto")
    vac = spec["vacancy_site"].get<int>();
  if (vac < 0 || vac >= cell.n_sites())
    throw ValidationError("defect vacancy_site out of range");
  int sub = -1;
  if (spec.contains("substitution_site") && spec["substitution_site"] != "auto")
    sub = spec["substitution_site"].get<int>();
  else
    sub = *g.neighbor_sites(vac).begin();

  Eigen::Vector3d df = cell.sites[vac].frac - cell.sites[sub].frac;
  for (int k = 0; k < 3; ++k)
    if (cell.periodic[k]) df[k] -= std::round(df[k]);
  info.present = true;
  info.axis = cell.to_cartesian(df);
  return lattice::make_nv_defect(cell, vac, sub, cutoff);
}

std::set<int> resolve_seeds(const json& seeds, const lattice::CrystalCell& cell,
                            const lattice::BondGraph& graph, double seed_tol) {
  if (!seeds.is_array() || seeds.empty())
    throw ValidationError("cluster seeds must be a nonempty array");
  std::set<int> out;
  for (const auto& s : seeds) {
    require_keys(s, {"element", "degree", "index", "position"}, "seed selector");
    if (s.contains("index")) {
      out.insert(s["index"].get<int>());
      continue;
    }
    if (s.contains("position")) {
      Eigen::Vector3d target = parse_vec3(s["position"], "seed position");
      std::vector<int> hits;
      for (int i = 0; i < cell.n_sites(); ++i) {
        Eigen::Vector3d df = cell.sites[i].frac - cell.to_fractional(target);
        for (int k = 0; k < 3; ++k)
          if (cell.periodic[k]) df[k] -= std::round(df[k]);
        if (cell.to_cartesian(df).norm() <= seed_tol) hits.push_back(i);
      }
      if (hits.size() != 1)
        throw ValidationError("seed position matches " + std::to_string(hits.size()) +
                              " sites within the seed tolerance");
      out.insert(hits[0]);
      continue;
    }
    if (!s.contains("element"))
      throw ValidationError("seed selector needs element, index, or position");
    std::string el = s["element"].get<std::string>();
    std::optional<int> degree;
    if (s.contains("degree")) degree = s["degree"].get<int>();
    bool matched = false;
    for (int i = 0; i < cell.n_sites(); ++i) {
      if (cell.sites[i].element != el) continue;
      if (degree && static_cast<int>(graph.neighbor_sites(i).size()) != *degree) continue;
      out.insert(i);
      matched = true;
    }
    if (!matched)
      throw ValidationError("seed selector matched no sites (element " + el + ")");
  }
  return out;
}

std::vector<partition::GrowthRule> parse_grow_rules(const json& grow,
                                                    const DefectInfo& defect) {
  std::vector<partition::GrowthRule> rules;
  if (grow.is_null()) return rules;
  if (!grow.is_array()) throw ValidationError("grow must be an array of directives");
  for (const auto& g : grow) {
    require_keys(g,
                 {"from_element", "from_generation", "neighbor_element", "min_shared",
                  "halfspace"},
                 "grow directive");
    partition::GrowthRule r;
    if (g.contains("from_element")) r.from_element = g["from_element"].get<std::string>();
    if (g.contains("from_generation")) r.from_generation = g["from_generation"].get<int>();
    if (g.contains("neighbor_element"))
      r.neighbor_element = g["neighbor_element"].get<std::string>();
    if (g.contains("min_shared")) r.min_shared = g["min_shared"].get<int>();
    if (g.contains("halfspace")) {
      const json& h = g["halfspace"];
      require_keys(h, {"anchor_element", "offset", "normal", "side"}, "halfspace");
      partition::GrowthRule::Halfspace hs;
      if (h.contains("anchor_element"))
        hs.anchor_element = h["anchor_element"].get<std::string>();
      auto defect_vec = [&](const std::string& tag) {
        if (!defect.present)
          throw ValidationError("halfspace '" + tag + "' needs a defect section");
        return defect.axis;
      };
      if (h.contains("offset")) {
        if (h["offset"].is_string()) {
          std::string tag = h["offset"].get<std::string>();
          if (tag == "half-defect-axis") hs.offset = 0.5 * defect_vec(tag);
          else if (tag == "defect-axis") hs.offset = defect_vec(tag);
          else throw ValidationError("unknown offset tag '" + tag + "'");
        } else {
          hs.offset = parse_vec3(h["offset"], "halfspace offset");
        }
      }
      if (h.contains("normal")) {
        if (h["normal"].is_string()) {
          std::string tag = h["normal"].get<std::string>();
          if (tag == "defect-axis") hs.normal = defect_vec(tag);
          else throw ValidationError("unknown normal tag '" + tag + "'");
        } else {
          hs.normal = parse_vec3(h["normal"], "halfspace normal");
        }
      }
      if (h.contains("side")) hs.side = h["side"].get<int>();
      r.halfspace = hs;
    }
    rules.push_back(r);
  }
  return rules;
}

json run_carve_job(const CliContext& ctx, const json& job) {
  require_keys(job,
               {"name", "structure", "supercell", "defect", "bond_cutoff", "charge",
                "multiplicity", "clusters", "symmetry"},
               "carve job");
  std::string name = job.value("name", std::string("job"));
  if (!job.contains("structure")) throw ValidationError("carve job needs a structure path");
  fs::path structure = ctx.resolve(job["structure"].get<std::string>());
  lattice::CrystalCell cell = lattice::parse_structure(read_file(structure));

  if (job.contains("supercell")) {
    const json& reps = job["supercell"];
    if (!reps.is_array() || reps.size() != 3)
      throw ValidationError("supercell must be a 3-element array");
    cell = lattice::build_supercell(
        cell, {reps[0].get<int>(), reps[1].get<int>(), reps[2].get<int>()});
  }
  double cutoff = job.value("bond_cutoff", lattice::kDefaultBondCutoff);

  DefectInfo defect;
  if (job.contains("defect")) cell = apply_defect(job["defect"], cell, cutoff, defect);

  lattice::BondGraph graph = lattice::neighbor_graph(cell, cutoff);
  int charge = job.value("charge", 0);
  int multiplicity = job.value("multiplicity", 1);

  std::string sym_group = "C3v";
  double sym_threshold = 1e-3;
  bool sym_enabled = true;
  if (job.contains("symmetry")) {
    require_keys(job["symmetry"], {"group", "threshold", "enabled"}, "symmetry");
    sym_group = job["symmetry"].value("group", sym_group);
    sym_threshold = job["symmetry"].value("threshold", sym_threshold);
    sym_enabled = job["symmetry"].value("enabled", true);
  }

  if (!job.contains("clusters") || !job["clusters"].is_array() || job["clusters"].empty())
    throw ValidationError("carve job needs a nonempty clusters array");

  json out;
  out["name"] = name;
  out["structure_file"] = structure.filename().string();
  out["composition_full"] =
      partition::composition_string(cell.element_counts());
  out["n_sites"] = cell.n_sites();
  json clusters = json::array();

  for (const auto& cj : job["clusters"]) {
    require_keys(cj, {"name", "seeds", "grow"}, "cluster");
    std::string cname = cj.value("name", std::string("cluster"));
    std::set<int> seeds =
        resolve_seeds(cj.contains("seeds") ? cj["seeds"] : json(), cell, graph,
                      ctx.seed_tolerance);
    auto rules = parse_grow_rules(cj.contains("grow") ? cj["grow"] : json(), defect);

    auto sel = partition::select_cluster(cell, graph, seeds, rules);
    auto [cluster, environment] =
        partition::cap_selection(cell, graph, sel, charge, multiplicity);
    auto aux = partition::auxiliary_fragment(cluster, environment, graph);

    reports::PartitionClusterRecord rec;
    rec.name = cname;
    rec.cluster = cluster;
    rec.environment = environment;
    rec.auxiliary = aux;
    if (sym_enabled) {
      rec.csm_group = sym_group;
      rec.csm_threshold = sym_threshold;
      rec.csm_score = partition::symmetry_measure(cluster, sym_group);
    }
    clusters.push_back(reports::cluster_record_json(rec));

    std::string prefix = name + "_" + cname;
    write_out(ctx, prefix + "_cluster.xyz", partition::fragment_xyz(cluster, cname));
    write_out(ctx, prefix + "_environment.xyz",
              partition::fragment_xyz(environment, cname + "-environment"));
    write_out(ctx, prefix + "_auxiliary.xyz", partition::auxiliary_xyz(aux));
  }
  out["clusters"] = clusters;
  return out;
}

int run_carve(const CliContext& ctx) {
  json cfg = load_config(ctx, "embercap/carve-config/1");
  json jobs = json::array();
  if (cfg.contains("jobs")) {
    require_keys(cfg, {"schema", "jobs"}, "carve config");
    for (const auto& job : cfg["jobs"]) jobs.push_back(run_carve_job(ctx, job));
  } else {
    json job = cfg;
    job.erase("schema");
    jobs.push_back(run_carve_job(ctx, job));
  }
  json report;
  report["schema"] = kSchemaPartitionReport;
  report["jobs"] = jobs;
  write_out(ctx, "partition.json", report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// optimize

int run_optimize(const CliContext& ctx) {
  json cfg = load_config(ctx, "embercap/optimize-config/1");
  require_keys(cfg,
               {"schema", "model", "fragment_sites", "cluster_electrons", "cap", "solver",
                "oep", "outputs"},
               "optimize config");
  if (!cfg.contains("model")) throw ValidationError("optimize config needs a model path");
  auto model =
      meanfield::parse_model_file(read_file(ctx.resolve(cfg["model"].get<std::string>())));

  if (!cfg.contains("fragment_sites") || !cfg["fragment_sites"].is_array())
    throw ValidationError("optimize config needs fragment_sites");
  std::set<int> frag;
  for (const auto& s : cfg["fragment_sites"]) frag.insert(s.get<int>());

  int cl_up = 0, cl_dn = 0;
  if (!cfg.contains("cluster_electrons"))
    throw ValidationError("optimize config needs cluster_electrons");
  if (cfg["cluster_electrons"].is_array()) {
    cl_up = cfg["cluster_electrons"][0].get<int>();
    cl_dn = cfg["cluster_electrons"][1].get<int>();
  } else {
    int total = cfg["cluster_electrons"].get<int>();
    cl_up = (total + 1) / 2;
    cl_dn = total / 2;
  }

  meanfield::CapSpec cap;
  oep::CapCoupling coupling = oep::CapCoupling::Sampled;
  if (cfg.contains("cap")) {
    require_keys(cfg["cap"], {"onsite_offset", "coupling"}, "cap");
    cap.onsite_offset = cfg["cap"].value("onsite_offset", 0.0);
    std::string mode = cfg["cap"].value("coupling", std::string("sampled"));
    if (mode == "sampled") coupling = oep::CapCoupling::Sampled;
    else if (mode == "none") coupling = oep::CapCoupling::None;
    else throw ValidationError("cap coupling must be 'sampled' or 'none'");
  }

  meanfield::SolveOptions solver;
  if (cfg.contains("solver")) {
    require_keys(cfg["solver"], {"scf_tol", "scf_max_iter", "mixing"}, "solver");
    solver.scf_tol = cfg["solver"].value("scf_tol", solver.scf_tol);
    solver.scf_max_iter = cfg["solver"].value("scf_max_iter", solver.scf_max_iter);
    solver.mixing = cfg["solver"].value("mixing", solver.mixing);
  }

  oep::OepOptions opts;
  if (cfg.contains("oep")) {
    require_keys(cfg["oep"],
                 {"tolerance", "max_iter", "regularization_weight", "gauge"}, "oep");
    opts.tolerance = cfg["oep"].value("tolerance", opts.tolerance);
    opts.max_iter = cfg["oep"].value("max_iter", opts.max_iter);
    opts.regularization_weight =
        cfg["oep"].value("regularization_weight", opts.regularization_weight);
    std::string gauge = cfg["oep"].value("gauge", std::string("mean-zero"));
    if (gauge == "mean-zero") opts.gauge = oep::Gauge::MeanZero;
    else if (gauge == "none") opts.gauge = oep::Gauge::None;
    else throw ValidationError("gauge must be 'mean-zero' or 'none'");
  }

  std::string prefix = "oep";
  if (cfg.contains("outputs")) {
    require_keys(cfg["outputs"], {"prefix"}, "outputs");
    prefix = cfg["outputs"].value("prefix", prefix);
  }

  auto problem = oep::make_embedding_problem(model, frag, cl_up, cl_dn, cap, coupling, solver);
  auto res = oep::optimize_vemb(problem, opts);

  write_out(ctx, prefix + ".oep.json", reports::oep_result_json(res).dump(2) + "\n");
  field::SiteVector v = res.v_emb;
  write_out(ctx, prefix + ".vemb.field", field::write_field_file(v));
  write_out(ctx, prefix + ".trace.tsv", reports::trace_tsv(res));

  // Cluster-side artifacts for the spectrum step: the capped cluster model
  // and the potential restricted onto it.
  write_out(ctx, prefix + ".cluster.model", meanfield::emit_model_file(problem.cluster.model));
  field::SiteVector v_cl;
  v_cl.basis_tag = problem.cluster.model.basis_tag;
  v_cl.values.resize(problem.cluster.model.n_sites());
  for (int k = 0; k < problem.cluster.model.n_sites(); ++k)
    v_cl.values[k] = res.v_emb.values[problem.cluster.shared_index[k]];
  write_out(ctx, prefix + ".vemb.cluster.field", field::write_field_file(v_cl));

  std::cout << (res.converged ? "converged" : res.status) << " after " << res.iterations
            << " iterations, residual_max = " << format_double(res.residual_max) << "\n";
  return res.converged ? kExitOk : kExitConvergence;
}

// ---------------------------------------------------------------------------
// spectrum

struct SpectrumInput {
  manybody::ActiveSpace space;
  bool nv_flow = false;  // canonical triplet+singlet assembly with C3v labels
};

SpectrumInput load_spectrum_source(const CliContext& ctx, const json& src) {
  require_keys(src, {"type", "path", "hubbard_u"}, "spectrum source");
  if (!src.contains("type") || !src.contains("path"))
    throw ValidationError("spectrum source needs type and path");
  std::string type = src["type"].get<std::string>();
  fs::path path = ctx.resolve(src["path"].get<std::string>());
  SpectrumInput in;
  if (type == "fcidump") {
    in.space = manybody::parse_fcidump(read_file(path));
  } else if (type == "nv-params") {
    in.space = nvmodel::build_nv_active_space(nvmodel::parse_params_file(read_file(path)));
    in.nv_flow = true;
  } else if (type == "site-model") {
    auto model = meanfield::parse_model_file(read_file(path));
    Eigen::VectorXd u = Eigen::VectorXd::Constant(model.n_sites(),
                                                  src.value("hubbard_u", 0.0));
    if (model.interaction_u) u = *model.interaction_u;
    in.space = manybody::active_space_from_site_model(model, u);
  } else {
    throw ValidationError("spectrum source type must be fcidump, nv-params, or site-model");
  }
  return in;
}

manybody::SpectrumReport compute_spectrum(const SpectrumInput& in,
                                          const manybody::ActiveSpace& space,
                                          const json& sectors,
                                          const manybody::SpectrumOptions& sopts,
                                          bool classify) {
  std::vector<manybody::CIState> states;
  if (in.nv_flow) {
    states = nvmodel::nv_states(space, sopts.degeneracy_tol);
  } else {
    manybody::FciOptions fci;
    fci.degeneracy_tol = sopts.degeneracy_tol;
    if (classify) fci.label_signs = nvmodel::label_signs();
    if (!sectors.is_array() || sectors.empty())
      throw ValidationError("spectrum config needs a nonempty sectors array");
    for (const auto& sec : sectors) {
      require_keys(sec, {"sz2", "n_states"}, "sector");
      auto part = manybody::fci_solve(space, sec.value("sz2", 0),
                                      sec.value("n_states", 1), fci);
      states.insert(states.end(), part.begin(), part.end());
    }
    std::sort(states.begin(), states.end(),
              [](const auto& a, const auto& b) { return a.energy < b.energy; });
  }
  auto report = manybody::excitation_energies(states, sopts);
  if (classify || in.nv_flow) report = nvmodel::classify_states(report);
  return report;
}

int run_spectrum(const CliContext& ctx) {
  json cfg = load_config(ctx, "embercap/spectrum-config/1");
  require_keys(cfg,
               {"schema", "source", "embedding", "compare_bare", "sectors", "report",
                "outputs"},
               "spectrum config");
  if (!cfg.contains("source")) throw ValidationError("spectrum config needs a source");
  SpectrumInput in = load_spectrum_source(ctx, cfg["source"]);

  manybody::SpectrumOptions sopts;
  bool classify = false;
  if (cfg.contains("report")) {
    require_keys(cfg["report"], {"threshold", "degeneracy_tol", "classify_nv"}, "report");
    sopts.report_threshold = cfg["report"].value("threshold", sopts.report_threshold);
    sopts.degeneracy_tol = cfg["report"].value("degeneracy_tol", sopts.degeneracy_tol);
    classify = cfg["report"].value("classify_nv", false);
  }

  std::string prefix = "spectrum";
  if (cfg.contains("outputs")) {
    require_keys(cfg["outputs"], {"prefix"}, "outputs");
    prefix = cfg["outputs"].value("prefix", prefix);
  }

  manybody::ActiveSpace embedded_space = in.space;
  bool have_embedding = false;
  if (cfg.contains("embedding")) {
    require_keys(cfg["embedding"], {"potential", "orbital_map"}, "embedding");
    if (!cfg["embedding"].contains("potential"))
      throw ValidationError("embedding needs a potential file");
    auto v = field::read_site_field_file(
        read_file(ctx.resolve(cfg["embedding"]["potential"].get<std::string>())));
    Eigen::MatrixXd cmap =
        Eigen::MatrixXd::Identity(v.values.size(), in.space.n_orbitals);
    if (cfg["embedding"].contains("orbital_map") &&
        !(cfg["embedding"]["orbital_map"].is_string() &&
          cfg["embedding"]["orbital_map"] == "identity")) {
      const json& m = cfg["embedding"]["orbital_map"];
      if (!m.is_array()) throw ValidationError("orbital_map must be 'identity' or a matrix");
      cmap.resize(m.size(), m[0].size());
      for (size_t r = 0; r < m.size(); ++r)
        for (size_t c = 0; c < m[r].size(); ++c) cmap(r, c) = m[r][c].get<double>();
    }
    embedded_space = manybody::embed_one_body(in.space, v, cmap);
    have_embedding = true;
  }

  json sectors = cfg.contains("sectors") ? cfg["sectors"] : json();
  auto report = compute_spectrum(in, embedded_space, sectors, sopts, classify);
  write_out(ctx, prefix + ".spectrum.json", reports::spectrum_json(report).dump(2) + "\n");
  write_out(ctx, prefix + ".spectrum.txt", reports::spectrum_table(report));
  std::cout << reports::spectrum_table(report);

  if (cfg.value("compare_bare", false)) {
    if (!have_embedding)
      throw ValidationError("compare_bare requires an embedding section");
    auto bare = compute_spectrum(in, in.space, sectors, sopts, classify);
    write_out(ctx, prefix + ".bare.spectrum.json",
              reports::spectrum_json(bare).dump(2) + "\n");
    write_out(ctx, prefix + ".bare.spectrum.txt", reports::spectrum_table(bare));
    json diff;
    diff["schema"] = kSchemaSpectrumDiff;
    std::vector<double> de_emb, de_bare;
    for (const auto& st : report.states) de_emb.push_back(reports::round12(st.delta_e));
    for (const auto& st : bare.states) de_bare.push_back(reports::round12(st.delta_e));
    diff["delta_e_embedded"] = de_emb;
    diff["delta_e_bare"] = de_bare;
    double max_diff = 0.0;
    for (size_t k = 0; k < std::min(de_emb.size(), de_bare.size()); ++k)
      max_diff = std::max(max_diff, std::abs(de_emb[k] - de_bare[k]));
    diff["max_delta_e_difference"] = max_diff;
    write_out(ctx, prefix + ".diff.json", diff.dump(2) + "\n");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// nv-demo

int run_nv_demo(const CliContext& ctx, const std::string& params_path) {
  fs::path path = params_path.empty() ? fs::path("data/nv_reference.params")
                                      : fs::path(params_path);
  if (!fs::exists(path))
    throw ValidationError("parameter file '" + path.string() +
                          "' not found; pass --params");
  auto params = nvmodel::parse_params_file(read_file(path));
  auto space = nvmodel::build_nv_active_space(params);
  auto report =
      nvmodel::classify_states(manybody::excitation_energies(nvmodel::nv_states(space)));
  write_out(ctx, "nv_demo.spectrum.json", reports::spectrum_json(report).dump(2) + "\n");
  write_out(ctx, "nv_demo.spectrum.txt", reports::spectrum_table(report));
  std::cout << reports::spectrum_table(report);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// report (pretty-print any embercap JSON artifact)

int run_report(const std::string& file) {
  json j;
  try {
    j = json::parse(read_file(file));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("not valid JSON: ") + e.what());
  }
  std::string schema = j.value("schema", std::string());
  if (schema == kSchemaPartitionReport) {
    for (const auto& job : j["jobs"]) {
      std::cout << job["name"].get<std::string>() << ": full "
                << job["composition_full"].get<std::string>() << "\n";
      for (const auto& c : job["clusters"]) {
        std::cout << "  " << c["name"].get<std::string>() << ": cluster "
                  << c["cluster"]["composition"].get<std::string>() << " | environment "
                  << c["environment"]["composition"].get<std::string>() << " | auxiliary "
                  << c["auxiliary"]["composition"].get<std::string>() << " ("
                  << c["auxiliary"]["components"].size() << " components)";
        if (c.contains("symmetry"))
          std::cout << " | CSM(" << c["symmetry"]["group"].get<std::string>()
                    << ") = " << c["symmetry"]["score"].get<double>();
        std::cout << "\n";
      }
    }
  } else if (schema == kSchemaOepResult) {
    std::cout << "status: " << j["status"].get<std::string>()
              << ", iterations: " << j["iterations"].get<int>()
              << ", W = " << j["w_value"].get<double>()
              << ", residual_max = " << j["residual_max"].get<double>() << "\n";
  } else if (schema == kSchemaSpectrumReport) {
    char buf[64];
    for (const auto& st : j["states"]) {
      std::snprintf(buf, sizeof(buf), "%-10s dE = %.10g",
                    st.contains("label") ? st["label"].get<std::string>().c_str() : "-",
                    st["delta_e"].get<double>());
      std::cout << buf << "\n";
    }
  } else {
    throw ValidationError("unrecognized schema '" + schema + "'");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"embercap: capped density-embedding workbench"};
  app.require_subcommand(1);

  CliContext ctx;
  std::string config, params, report_file;

  auto add_common = [&](CLI::App* cmd, bool needs_config) {
    if (needs_config)
      cmd->add_option("--config", config, "configuration file (JSON)")->required();
    cmd->add_option("--out", ctx.out_dir, "output directory (default: out)");
    cmd->add_option("--seed-tolerance", ctx.seed_tolerance,
                    "matching tolerance in A for position-specified seeds");
    cmd->add_flag("--verbose", ctx.verbose, "log written files to stderr");
  };

  CLI::App* carve = app.add_subcommand("carve", "carve, cap, and verify fragments");
  add_common(carve, true);
  CLI::App* optimize = app.add_subcommand("optimize", "optimize the embedding potential");
  add_common(optimize, true);
  CLI::App* spectrum = app.add_subcommand("spectrum", "embedded excitation spectra");
  add_common(spectrum, true);
  CLI::App* nv_demo = app.add_subcommand("nv-demo", "labeled NV-model multiplet demo");
  nv_demo->add_option("--params", params, "model parameter file");
  add_common(nv_demo, false);
  CLI::App* report = app.add_subcommand("report", "pretty-print a result file");
  report->add_option("file", report_file, "result JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  auto fail = [&](const std::string& kind, const std::string& msg, int code) {
    std::cerr << reports::error_record(kind, msg).dump() << "\n";
    return code;
  };

  try {
    ctx.config_path = config;
    if (carve->parsed()) return run_carve(ctx);
    if (optimize->parsed()) return run_optimize(ctx);
    if (spectrum->parsed()) return run_spectrum(ctx);
    if (nv_demo->parsed()) return run_nv_demo(ctx, params);
    if (report->parsed()) return run_report(report_file);
  } catch (const ParseError& e) {
    return fail("parse", e.what(), kExitParse);
  } catch (const ValidationError& e) {
    return fail("validation", e.what(), kExitValidation);
  } catch (const ConvergenceError& e) {
    return fail("convergence", e.what(), kExitConvergence);
  } catch (const std::exception& e) {
    return fail("internal", e.what(), kExitInternal);
  }
  return kExitInternal;
}
