#pragma once

// Independent dense Hamiltonian builder by explicit second-quantized operator
// algebra: determinants are sorted spin-orbital lists, operators act by
// insertion/removal with literal sign counting, and
//   H = sum_pq h_pq a+_p a_q  +  1/2 sum_pqrs (pq|rs) a+_p a+_r a_s a_q  + core
// is applied term by term. Spin-orbital index: alpha p -> p, beta p -> n + p,
// which reproduces the alpha-block-then-beta-block ordering of the library's
// determinant kets, so matrices are comparable element-wise.

#include <Eigen/Dense>
#include <algorithm>
#include <map>
#include <vector>

#include "embercap/manybody.hpp"

namespace sq_oracle {

using Det = std::vector<int>;  // strictly increasing spin-orbital list

struct Ket {
  Det det;
  double coeff = 0.0;
};

inline bool annihilate(Det& d, int so, int& sign) {
  auto it = std::find(d.begin(), d.end(), so);
  if (it == d.end()) return false;
  int pos = static_cast<int>(it - d.begin());
  sign *= (pos % 2 == 0) ? 1 : -1;
  d.erase(it);
  return true;
}

inline bool create(Det& d, int so, int& sign) {
  auto it = std::lower_bound(d.begin(), d.end(), so);
  if (it != d.end() && *it == so) return false;
  int pos = static_cast<int>(it - d.begin());
  sign *= (pos % 2 == 0) ? 1 : -1;
  d.insert(it, so);
  return true;
}

inline Det det_from_masks(const embercap::manybody::Determinant& d, int n_orb) {
  Det out;
  for (int p = 0; p < n_orb; ++p)
    if (d.alpha >> p & 1u) out.push_back(p);
  for (int p = 0; p < n_orb; ++p)
    if (d.beta >> p & 1u) out.push_back(n_orb + p);
  return out;
}

inline Eigen::MatrixXd dense_hamiltonian(const embercap::manybody::ActiveSpace& as,
                                         const std::vector<embercap::manybody::Determinant>& basis) {
  const int n = as.n_orbitals;
  const long dim = static_cast<long>(basis.size());
  std::map<Det, long> index;
  std::vector<Det> dets(dim);
  for (long k = 0; k < dim; ++k) {
    dets[k] = det_from_masks(basis[k], n);
    index[dets[k]] = k;
  }

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
  for (long c = 0; c < dim; ++c) {
    H(c, c) += as.core_energy;
    // One-electron terms.
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q) {
        if (as.h(p, q) == 0.0) continue;
        for (int spin = 0; spin < 2; ++spin) {
          Det d = dets[c];
          int sign = 1;
          if (!annihilate(d, q + spin * n, sign)) continue;
          if (!create(d, p + spin * n, sign)) continue;
          auto it = index.find(d);
          if (it != index.end()) H(it->second, c) += sign * as.h(p, q);
        }
      }
    // Two-electron terms: 1/2 (pq|rs) a+_ps a+_rt a_st a_qs.
    for (int p = 0; p < n; ++p)
      for (int q = 0; q < n; ++q)
        for (int r = 0; r < n; ++r)
          for (int s = 0; s < n; ++s) {
            double v = as.eri.get(p, q, r, s);
            if (v == 0.0) continue;
            for (int s1 = 0; s1 < 2; ++s1)
              for (int s2 = 0; s2 < 2; ++s2) {
                Det d = dets[c];
                int sign = 1;
                if (!annihilate(d, q + s1 * n, sign)) continue;
                if (!annihilate(d, s + s2 * n, sign)) continue;
                if (!create(d, r + s2 * n, sign)) continue;
                if (!create(d, p + s1 * n, sign)) continue;
                auto it = index.find(d);
                if (it != index.end()) H(it->second, c) += 0.5 * sign * v;
              }
          }
  }
  return H;
}

}  // namespace sq_oracle
