#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "embercap/errors.hpp"
#include "embercap/partition.hpp"

namespace embercap::partition {

namespace csm_detail {

/// Minimum-cost assignment (Hungarian algorithm with potentials), O(n^3).
/// Returns row -> column.
inline std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> match(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j] > 0) match[p[j] - 1] = j - 1;
  return match;
}

inline Eigen::Matrix3d rotation_about(const Eigen::Vector3d& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

inline Eigen::Matrix3d reflection_across(const Eigen::Vector3d& plane_normal) {
  Eigen::Vector3d m = plane_normal.normalized();
  return Eigen::Matrix3d::Identity() - 2.0 * m * m.transpose();
}

struct Structure {
  std::vector<Eigen::Vector3d> q;            // centered positions
  std::vector<std::vector<int>> blocks;      // indices grouped by element
  double norm2 = 0.0;                        // sum |q|^2
};

/// Fold score for one operation set: match the structure to each transformed
/// copy (per element block, Hungarian), average the matched copies, and
/// return sum |Q - mean|^2 / sum |Q|^2. Zero iff exactly symmetric.
inline double fold_score(const Structure& st, const std::vector<Eigen::Matrix3d>& ops) {
  const int n = static_cast<int>(st.q.size());
  std::vector<Eigen::Vector3d> mean(n, Eigen::Vector3d::Zero());
  for (const auto& g : ops) {
    std::vector<Eigen::Vector3d> gq(n);
    for (int i = 0; i < n; ++i) gq[i] = g * st.q[i];
    for (const auto& block : st.blocks) {
      const int b = static_cast<int>(block.size());
      Eigen::MatrixXd cost(b, b);
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j) cost(i, j) = (st.q[block[i]] - gq[block[j]]).squaredNorm();
      auto match = hungarian(cost);
      for (int i = 0; i < b; ++i) mean[block[i]] += gq[block[match[i]]];
    }
  }
  double dev = 0.0;
  const double w = 1.0 / static_cast<double>(ops.size() + 1);  // +1 for identity
  for (int i = 0; i < n; ++i) {
    Eigen::Vector3d m = (mean[i] + st.q[i]) * w;
    dev += (st.q[i] - m).squaredNorm();
  }
  return dev / st.norm2;
}

inline std::vector<Eigen::Matrix3d> c3v_ops(const Eigen::Vector3d& axis, double phi) {
  Eigen::Vector3d n = axis.normalized();
  Eigen::Vector3d e1 = n.unitOrthogonal();
  Eigen::Vector3d e2 = n.cross(e1);
  std::vector<Eigen::Matrix3d> ops;
  ops.push_back(rotation_about(n, 2.0 * M_PI / 3.0));
  ops.push_back(rotation_about(n, 4.0 * M_PI / 3.0));
  for (int k = 0; k < 3; ++k) {
    double a = phi + k * M_PI / 3.0;  // undirected planes 60 degrees apart
    Eigen::Vector3d in_plane = std::cos(a) * e1 + std::sin(a) * e2;
    ops.push_back(reflection_across(n.cross(in_plane)));
  }
  return ops;
}

/// Compact Nelder-Mead on a small fixed dimension.
template <typename F>
inline double nelder_mead(F&& f, Eigen::VectorXd& x, double step, int max_iter, double ftol) {
  const int n = static_cast<int>(x.size());
  std::vector<Eigen::VectorXd> pts(n + 1, x);
  std::vector<double> val(n + 1);
  for (int k = 1; k <= n; ++k) pts[k][k - 1] += step;
  for (int k = 0; k <= n; ++k) val[k] = f(pts[k]);
  for (int it = 0; it < max_iter; ++it) {
    std::vector<int> order(n + 1);
    for (int k = 0; k <= n; ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return val[a] < val[b]; });
    if (val[order[n]] - val[order[0]] < ftol) break;
    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < n; ++k) centroid += pts[order[k]];
    centroid /= n;
    int worst = order[n];
    Eigen::VectorXd refl = centroid + (centroid - pts[worst]);
    double fr = f(refl);
    if (fr < val[order[0]]) {
      Eigen::VectorXd exp_pt = centroid + 2.0 * (centroid - pts[worst]);
      double fe = f(exp_pt);
      if (fe < fr) {
        pts[worst] = exp_pt;
        val[worst] = fe;
      } else {
        pts[worst] = refl;
        val[worst] = fr;
      }
    } else if (fr < val[order[n - 1]]) {
      pts[worst] = refl;
      val[worst] = fr;
    } else {
      Eigen::VectorXd con = centroid + 0.5 * (pts[worst] - centroid);
      double fc = f(con);
      if (fc < val[worst]) {
        pts[worst] = con;
        val[worst] = fc;
      } else {
        for (int k = 0; k <= n; ++k) {
          if (k == order[0]) continue;
          pts[k] = pts[order[0]] + 0.5 * (pts[k] - pts[order[0]]);
          val[k] = f(pts[k]);
        }
      }
    }
  }
  int best = 0;
  for (int k = 1; k <= n; ++k)
    if (val[k] < val[best]) best = k;
  x = pts[best];
  return val[best];
}

}  // namespace csm_detail

struct CsmOptions {
  int mirror_steps = 60;      // coarse scan of the mirror base angle over [0, 60deg)
  int refine_iterations = 400;
  double refine_ftol = 1e-15;
};

/// Continuous symmetry measure for the given point group (C3v only): the
/// normalized mean-square deviation between the structure and its folded
/// (symmetrized) counterpart, minimized over axis direction, mirror-plane
/// placement, and per-operation atom assignments within element groups.
/// 0 for exactly symmetric structures; dimensionless.
inline double symmetry_measure(const std::vector<Atom>& atoms, const std::string& group,
                               const CsmOptions& opts = {}) {
  if (group != "C3v") throw ValidationError("unsupported point group '" + group + "'");
  if (atoms.empty()) throw ValidationError("symmetry measure of an empty fragment");
  const int n = static_cast<int>(atoms.size());
  if (n == 1) return 0.0;

  csm_detail::Structure st;
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (const auto& a : atoms) centroid += a.position;
  centroid /= n;
  std::map<std::string, std::vector<int>> by_element;
  for (int i = 0; i < n; ++i) {
    st.q.push_back(atoms[i].position - centroid);
    st.norm2 += st.q.back().squaredNorm();
    by_element[atoms[i].element].push_back(i);
  }
  for (auto& [el, block] : by_element) st.blocks.push_back(block);
  if (st.norm2 < 1e-20) return 0.0;

  Eigen::Matrix3d gyration = Eigen::Matrix3d::Zero();
  for (const auto& q : st.q) gyration += q * q.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> ges(gyration);
  if (ges.eigenvalues()[1] <= 1e-12 * ges.eigenvalues()[2])
    throw ValidationError("collinear geometry: C3v axis search is ill-posed");

  std::vector<Eigen::Vector3d> candidates;
  auto add_candidate = [&](const Eigen::Vector3d& v) {
    if (v.norm() < 1e-9) return;
    Eigen::Vector3d u = v.normalized();
    for (const auto& c : candidates)
      if (std::abs(c.dot(u)) > 1.0 - 1e-9) return;
    candidates.push_back(u);
  };
  for (int k = 0; k < 3; ++k) add_candidate(ges.eigenvectors().col(k));
  for (const auto& [el, block] : by_element)
    if (block.size() <= 2)
      for (int i : block) add_candidate(st.q[i]);

  // Rank candidates by the rotation-only fold, keep the best few.
  std::vector<std::pair<double, Eigen::Vector3d>> ranked;
  for (const auto& axis : candidates) {
    std::vector<Eigen::Matrix3d> rot = {csm_detail::rotation_about(axis, 2 * M_PI / 3),
                                        csm_detail::rotation_about(axis, 4 * M_PI / 3)};
    ranked.push_back({csm_detail::fold_score(st, rot), axis});
  }
  std::sort(ranked.begin(), ranked.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  if (ranked.size() > 3) ranked.resize(3);

  double best = std::numeric_limits<double>::infinity();
  for (const auto& [rot_score, axis] : ranked) {
    double phi_best = 0.0, score_best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < opts.mirror_steps; ++k) {
      double phi = k * (M_PI / 3.0) / opts.mirror_steps;
      double s = csm_detail::fold_score(st, csm_detail::c3v_ops(axis, phi));
      if (s < score_best) {
        score_best = s;
        phi_best = phi;
      }
    }
    // Joint refinement of axis tilt and mirror angle.
    Eigen::Vector3d e1 = axis.unitOrthogonal();
    Eigen::Vector3d e2 = axis.cross(e1);
    auto objective = [&](const Eigen::VectorXd& x) {
      Eigen::Vector3d a = (axis + x[0] * e1 + x[1] * e2).normalized();
      return csm_detail::fold_score(st, csm_detail::c3v_ops(a, phi_best + x[2]));
    };
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
    double refined =
        csm_detail::nelder_mead(objective, x, 0.02, opts.refine_iterations, opts.refine_ftol);
    best = std::min(best, std::min(score_best, refined));
  }
  return std::max(0.0, best);
}

inline double symmetry_measure(const CappedFragment& fragment, const std::string& group,
                               const CsmOptions& opts = {}) {
  std::vector<Atom> atoms = fragment.native_atoms;
  for (const auto& c : fragment.cap_atoms) atoms.push_back({c.element, c.position});
  return symmetry_measure(atoms, group, opts);
}

}  // namespace embercap::partition
