#pragma once

#include <Eigen/Dense>
#include <cstdlib>
#include <deque>
#include <future>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "embercap/errors.hpp"
#include "embercap/field.hpp"
#include "embercap/meanfield.hpp"

namespace embercap::oep {

enum class CapCoupling { Sampled, None };

/// Max worker threads for fragment solves, capped by EMBERCAP_THREADS.
inline int max_threads() {
  if (const char* env = std::getenv("EMBERCAP_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) return v;
  }
  return 1;
}

/// A full model plus its capped cluster/environment/auxiliary fragments and
/// the restriction maps into the shared (full-model site) potential space.
/// The full and auxiliary densities are fixed targets, solved once at V = 0.
struct EmbeddingProblem {
  meanfield::TightBindingModel full;
  meanfield::CappedModel cluster, environment, auxiliary;
  CapCoupling cap_coupling = CapCoupling::Sampled;
  meanfield::SolveOptions solver;
  Eigen::VectorXd rho_full;
  Eigen::VectorXd rho_aux_shared;
  double e_full = 0.0;

  int dim() const { return full.n_sites(); }
};

namespace detail {

inline Eigen::VectorXd restrict_potential(const Eigen::VectorXd& v,
                                          const meanfield::CappedModel& frag,
                                          CapCoupling coupling) {
  const int n = frag.model.n_sites();
  const int n_native = n - frag.n_caps;
  Eigen::VectorXd out(n);
  for (int k = 0; k < n; ++k) {
    bool is_cap = k >= n_native;
    out[k] = (is_cap && coupling == CapCoupling::None) ? 0.0 : v[frag.shared_index[k]];
  }
  return out;
}

/// Adjoint of restrict_potential: scatter a fragment density into shared space.
inline void lift_density(const Eigen::VectorXd& rho, const meanfield::CappedModel& frag,
                         CapCoupling coupling, Eigen::VectorXd& out) {
  const int n = frag.model.n_sites();
  const int n_native = n - frag.n_caps;
  for (int k = 0; k < n; ++k) {
    if (k >= n_native && coupling == CapCoupling::None) continue;
    out[frag.shared_index[k]] += rho[k];
  }
}

inline meanfield::MeanFieldResult solve_fragment(const EmbeddingProblem& p,
                                                 const meanfield::CappedModel& frag,
                                                 const Eigen::VectorXd& v_shared,
                                                 const char* name) {
  field::SiteVector v;
  v.values = restrict_potential(v_shared, frag, p.cap_coupling);
  v.basis_tag = frag.model.basis_tag;
  auto res = meanfield::solve(frag.model, v, p.solver);
  if (!res.converged)
    throw ConvergenceError(std::string(name) + " fragment SCF did not converge");
  return res;
}

}  // namespace detail

/// Build the embedding problem for a fragment cut of `full`. Native electrons
/// are assigned explicitly per spin; the environment receives the remainder,
/// so N_cluster + N_environment - N_auxiliary = N_full holds by construction.
inline EmbeddingProblem make_embedding_problem(
    const meanfield::TightBindingModel& full, const std::set<int>& fragment_sites,
    int cluster_native_up, int cluster_native_dn, const meanfield::CapSpec& cap = {},
    CapCoupling coupling = CapCoupling::Sampled, const meanfield::SolveOptions& solver = {}) {
  EmbeddingProblem p;
  p.full = full;
  p.cap_coupling = coupling;
  p.solver = solver;

  if (cluster_native_up < 0 || cluster_native_dn < 0 ||
      cluster_native_up > full.n_up || cluster_native_dn > full.n_dn)
    throw ValidationError("cluster native electron count outside the full model's count");

  std::set<int> env_sites;
  for (int s = 0; s < full.n_sites(); ++s)
    if (!fragment_sites.count(s)) env_sites.insert(s);

  p.cluster = meanfield::capped_model(full, fragment_sites, cluster_native_up,
                                      cluster_native_dn, cap);
  p.environment = meanfield::capped_model(full, env_sites, full.n_up - cluster_native_up,
                                          full.n_dn - cluster_native_dn, cap);
  p.cluster.model.basis_tag = full.basis_tag + "/cluster";
  p.environment.model.basis_tag = full.basis_tag + "/environment";
  if (p.cluster.severed.size() != p.environment.severed.size())
    throw ValidationError("cluster and environment disagree on severed bonds");
  p.auxiliary = meanfield::auxiliary_model(full, p.cluster.severed, cap);

  int n_lhs = p.cluster.model.n_electrons() + p.environment.model.n_electrons() -
              p.auxiliary.model.n_electrons();
  if (n_lhs != full.n_electrons())
    throw ValidationError("electron-count identity violated: " + std::to_string(n_lhs) +
                          " vs " + std::to_string(full.n_electrons()));

  auto full_res = meanfield::solve(full, p.solver);
  if (!full_res.converged) throw ConvergenceError("full-system SCF did not converge");
  p.rho_full = full_res.density();
  p.e_full = full_res.energy;

  p.rho_aux_shared = Eigen::VectorXd::Zero(full.n_sites());
  if (p.auxiliary.model.n_sites() > 0) {
    auto aux_res = meanfield::solve(p.auxiliary.model, p.solver);
    if (!aux_res.converged) throw ConvergenceError("auxiliary fragment SCF did not converge");
    Eigen::VectorXd rho = aux_res.density();
    for (int k = 0; k < p.auxiliary.model.n_sites(); ++k)
      p.rho_aux_shared[p.auxiliary.shared_index[k]] += rho[k];
  }
  return p;
}

/// W(V) and its gradient (the density-sum residual), both in shared space:
///   W = E_cluster(V) + E_environment(V) - <V, rho_full + rho_aux>
///   dW/dV = rho_cluster^ + rho_environment^ - rho_full - rho_aux
/// where ^ lifts fragment densities through the adjoint restriction map.
/// The plain (uncapped) functional is the special case with no severed bonds.
inline std::pair<double, Eigen::VectorXd> wu_yang_value_and_gradient(
    const EmbeddingProblem& p, const Eigen::VectorXd& v) {
  if (v.size() != p.dim()) throw ValidationError("potential length mismatch");
  if (!v.allFinite()) throw ValidationError("potential must be finite");

  meanfield::MeanFieldResult cl, env;
  if (max_threads() >= 2) {
    auto fut = std::async(std::launch::async, [&] {
      return detail::solve_fragment(p, p.cluster, v, "cluster");
    });
    env = detail::solve_fragment(p, p.environment, v, "environment");
    cl = fut.get();
  } else {
    cl = detail::solve_fragment(p, p.cluster, v, "cluster");
    env = detail::solve_fragment(p, p.environment, v, "environment");
  }

  double w = cl.energy + env.energy - v.dot(p.rho_full + p.rho_aux_shared);
  Eigen::VectorXd grad = -p.rho_full - p.rho_aux_shared;
  detail::lift_density(cl.density(), p.cluster, p.cap_coupling, grad);
  detail::lift_density(env.density(), p.environment, p.cap_coupling, grad);
  return {w, grad};
}

inline std::pair<double, Eigen::VectorXd> wu_yang_value_and_gradient(
    const EmbeddingProblem& p, const field::SiteVector& v) {
  if (v.basis_tag != p.full.basis_tag)
    throw ValidationError("potential basis '" + v.basis_tag + "' does not match '" +
                          p.full.basis_tag + "'");
  return wu_yang_value_and_gradient(p, v.values);
}

// ---------------------------------------------------------------------------

enum class Gauge { MeanZero, None };

struct OepOptions {
  double tolerance = 1e-6;  // on ||grad||_inf
  int max_iter = 500;
  double regularization_weight = 0.0;  // Tikhonov penalty (weight/2)*|V|^2, off by default
  Gauge gauge = Gauge::MeanZero;
  int history = 10;
  std::optional<Eigen::MatrixXd> restriction_basis;  // optimize V = B*c over c
  std::optional<Eigen::VectorXd> initial;
};

struct TracePoint {
  double w;
  double grad_inf;
};

struct OepResult {
  field::SiteVector v_emb;
  double w_value = 0.0;
  Eigen::VectorXd residual;  // full-space density-sum gradient at the solution
  double residual_max = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string status;  // converged | max-iterations | line-search-failure
  std::vector<TracePoint> trace;
};

/// Maximize W by limited-memory quasi-Newton ascent with a backtracking
/// (Armijo) line search, starting from V = 0. Convergence is on the inf-norm
/// of the (optionally basis-projected) gradient.
inline OepResult optimize_vemb(const EmbeddingProblem& p, const OepOptions& opts = {}) {
  if (opts.tolerance <= 0) throw ValidationError("tolerance must be positive");

  const bool reduced = opts.restriction_basis.has_value();
  const Eigen::MatrixXd* basis = reduced ? &*opts.restriction_basis : nullptr;
  if (reduced && basis->rows() != p.dim())
    throw ValidationError("restriction basis row count must match shared dimension");
  const long nx = reduced ? basis->cols() : p.dim();

  Eigen::VectorXd x = Eigen::VectorXd::Zero(nx);
  if (opts.initial) {
    if (opts.initial->size() != nx) throw ValidationError("initial vector length mismatch");
    x = *opts.initial;
  }

  auto expand = [&](const Eigen::VectorXd& xc) -> Eigen::VectorXd {
    return reduced ? Eigen::VectorXd((*basis) * xc) : xc;
  };

  double w_plain = 0.0;        // Eq. 4 value, reported
  Eigen::VectorXd grad_full;   // Eq. 5 vector at the current V
  // Objective used by the optimizer: W minus the Tikhonov penalty.
  auto eval = [&](const Eigen::VectorXd& xc, double& f, Eigen::VectorXd& g) {
    Eigen::VectorXd v = expand(xc);
    auto [w, gw] = wu_yang_value_and_gradient(p, v);
    w_plain = w;
    grad_full = gw;
    f = w - 0.5 * opts.regularization_weight * v.squaredNorm();
    Eigen::VectorXd gv = gw - opts.regularization_weight * v;
    g = reduced ? Eigen::VectorXd(basis->transpose() * gv) : gv;
  };

  OepResult res;
  double f = 0.0;
  Eigen::VectorXd g(nx);
  eval(x, f, g);
  res.trace.push_back({w_plain, grad_full.cwiseAbs().maxCoeff()});

  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> pairs;  // (s, y) wrt -f
  int it = 0;
  std::string status = "max-iterations";
  for (; it < opts.max_iter; ++it) {
    if (g.cwiseAbs().maxCoeff() < opts.tolerance) {
      status = "converged";
      break;
    }
    // Two-loop recursion on the minimization problem min -f.
    Eigen::VectorXd q = -g;
    std::vector<double> alpha(pairs.size());
    for (int k = static_cast<int>(pairs.size()) - 1; k >= 0; --k) {
      const auto& [s, y] = pairs[k];
      alpha[k] = s.dot(q) / y.dot(s);
      q -= alpha[k] * y;
    }
    if (!pairs.empty()) {
      const auto& [s, y] = pairs.back();
      q *= s.dot(y) / y.dot(y);
    }
    for (size_t k = 0; k < pairs.size(); ++k) {
      const auto& [s, y] = pairs[k];
      double beta = y.dot(q) / y.dot(s);
      q += (alpha[k] - beta) * s;
    }
    Eigen::VectorXd dir = -q;  // ascent direction for f
    double slope = g.dot(dir);
    if (slope <= 0) {  // stale curvature; fall back to steepest ascent
      dir = g;
      slope = g.dot(dir);
    }

    double step = 1.0;
    double f_new = 0.0;
    Eigen::VectorXd g_new(nx), x_new(nx);
    bool ok = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = x + step * dir;
      eval(x_new, f_new, g_new);
      if (f_new >= f + 1e-4 * step * slope) {
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) {
      status = "line-search-failure";
      break;
    }
    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = (-g_new) - (-g);
    if (s.dot(y) > 1e-14 * s.norm() * y.norm()) {
      pairs.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(pairs.size()) > opts.history) pairs.pop_front();
    }
    x = x_new;
    f = f_new;
    g = g_new;
    res.trace.push_back({w_plain, grad_full.cwiseAbs().maxCoeff()});
  }
  if (status == "max-iterations" && g.cwiseAbs().maxCoeff() < opts.tolerance)
    status = "converged";

  Eigen::VectorXd v = expand(x);
  if (opts.gauge == Gauge::MeanZero && !reduced && v.size() > 0)
    v.array() -= v.mean();  // constant shifts are a null direction of W

  // Report value and Eq. 5 residual at the returned (gauge-fixed) potential.
  auto [w_final, grad_final] = wu_yang_value_and_gradient(p, v);
  res.v_emb.values = v;
  res.v_emb.basis_tag = p.full.basis_tag;
  res.w_value = w_final;
  res.residual = grad_final;
  res.residual_max = grad_final.size() ? grad_final.cwiseAbs().maxCoeff() : 0.0;
  res.iterations = it;
  res.converged = status == "converged";
  res.status = status;
  return res;
}

}  // namespace embercap::oep
