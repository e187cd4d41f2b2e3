#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "embercap/errors.hpp"
#include "embercap/lattice.hpp"
#include "embercap/textio.hpp"

namespace embercap::field {

enum class FieldKind { Potential, Density };

/// Scalar field on a periodic uniform grid over a cell. Storage is C-order:
/// index = (i0*dims[1] + i1)*dims[2] + i2, grid node (i0,i1,i2) at fractional
/// coordinate (i0/n0, i1/n1, i2/n2).
struct ScalarField {
  std::array<int, 3> dims{0, 0, 0};
  Eigen::Matrix3d lattice = Eigen::Matrix3d::Identity();
  Eigen::VectorXd values;
  FieldKind kind = FieldKind::Potential;
  std::optional<double> electrons;  // declared count for density-typed fields

  int size() const { return dims[0] * dims[1] * dims[2]; }
  double voxel_volume() const {
    return std::abs(lattice.determinant()) / static_cast<double>(size());
  }
  double& at(int i0, int i1, int i2) {
    return values[(i0 * dims[1] + i1) * dims[2] + i2];
  }
  double at(int i0, int i1, int i2) const {
    return values[(i0 * dims[1] + i1) * dims[2] + i2];
  }
  /// Midpoint/Riemann quadrature over the cell.
  double integral() const { return values.sum() * voxel_volume(); }
};

inline void validate_field(const ScalarField& f) {
  if (f.dims[0] < 1 || f.dims[1] < 1 || f.dims[2] < 1)
    throw ValidationError("grid dims must be positive");
  if (f.values.size() != f.size())
    throw ValidationError("value count " + std::to_string(f.values.size()) +
                          " does not match dims product " + std::to_string(f.size()));
  if (!f.values.allFinite()) throw ValidationError("field values must be finite");
  if (f.kind == FieldKind::Density && f.electrons) {
    double got = f.integral();
    if (std::abs(got - *f.electrons) > 1e-8)
      throw ValidationError("density integrates to " + format_double(got) +
                            ", declared " + format_double(*f.electrons));
  }
}

/// Vector in a discrete site basis. basis_tag ties it to one specific model
/// site ordering; pairings across mismatched tags are rejected.
struct SiteVector {
  Eigen::VectorXd values;
  std::string basis_tag;
  FieldKind kind = FieldKind::Potential;
  std::optional<double> electrons;

  int size() const { return static_cast<int>(values.size()); }
};

// ---------------------------------------------------------------------------
// Dual pairing <V, rho>.

inline double integrate_product(const ScalarField& v, const ScalarField& rho) {
  if (v.dims != rho.dims) throw ValidationError("grid shape mismatch in pairing");
  return v.values.dot(rho.values) * v.voxel_volume();
}

inline double integrate_product(const SiteVector& v, const SiteVector& rho) {
  if (v.basis_tag != rho.basis_tag)
    throw ValidationError("site basis mismatch: '" + v.basis_tag + "' vs '" +
                          rho.basis_tag + "'");
  if (v.values.size() != rho.values.size())
    throw ValidationError("site vector length mismatch in pairing");
  return v.values.dot(rho.values);
}

// ---------------------------------------------------------------------------
// Grid -> site projection.

enum class Weighting { Trilinear, Gaussian };

struct ProjectionOptions {
  Weighting scheme = Weighting::Trilinear;
  double gaussian_width = 0.5;  // Å, standard deviation
  std::string basis_tag = "sites";
};

/// Sample the field at each site position. Trilinear: periodic trilinear
/// interpolation. Gaussian: normalized minimum-image Gaussian average over
/// all grid nodes.
inline SiteVector project_to_sites(const ScalarField& f,
                                   const std::vector<Eigen::Vector3d>& positions,
                                   const ProjectionOptions& opts = {}) {
  if (positions.empty()) throw ValidationError("empty site position list");
  validate_field(f);
  Eigen::Matrix3d inv = f.lattice.transpose().inverse();
  SiteVector out;
  out.basis_tag = opts.basis_tag;
  out.kind = f.kind;
  out.values.resize(static_cast<long>(positions.size()));

  if (opts.scheme == Weighting::Trilinear) {
    for (size_t s = 0; s < positions.size(); ++s) {
      Eigen::Vector3d frac = inv * positions[s];
      double acc = 0.0;
      double u[3], w0[3];
      int base[3];
      for (int k = 0; k < 3; ++k) {
        double x = lattice::wrap_unit(frac[k]) * f.dims[k];
        base[k] = static_cast<int>(std::floor(x));
        u[k] = x - base[k];
        w0[k] = 1.0 - u[k];
        base[k] %= f.dims[k];
      }
      for (int d0 = 0; d0 < 2; ++d0)
        for (int d1 = 0; d1 < 2; ++d1)
          for (int d2 = 0; d2 < 2; ++d2) {
            double w = (d0 ? u[0] : w0[0]) * (d1 ? u[1] : w0[1]) * (d2 ? u[2] : w0[2]);
            acc += w * f.at((base[0] + d0) % f.dims[0], (base[1] + d1) % f.dims[1],
                            (base[2] + d2) % f.dims[2]);
          }
      out.values[static_cast<long>(s)] = acc;
    }
    return out;
  }

  // Gaussian scheme.
  const double two_sigma2 = 2.0 * opts.gaussian_width * opts.gaussian_width;
  if (two_sigma2 <= 0.0) throw ValidationError("gaussian width must be positive");
  for (size_t s = 0; s < positions.size(); ++s) {
    Eigen::Vector3d sfrac = inv * positions[s];
    double num = 0.0, den = 0.0;
    for (int i0 = 0; i0 < f.dims[0]; ++i0)
      for (int i1 = 0; i1 < f.dims[1]; ++i1)
        for (int i2 = 0; i2 < f.dims[2]; ++i2) {
          Eigen::Vector3d df(static_cast<double>(i0) / f.dims[0] - sfrac[0],
                             static_cast<double>(i1) / f.dims[1] - sfrac[1],
                             static_cast<double>(i2) / f.dims[2] - sfrac[2]);
          for (int k = 0; k < 3; ++k) df[k] -= std::round(df[k]);  // minimum image
          double r2 = (f.lattice.transpose() * df).squaredNorm();
          double w = std::exp(-r2 / two_sigma2);
          num += w * f.at(i0, i1, i2);
          den += w;
        }
    out.values[static_cast<long>(s)] = num / den;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain-text field files (byte layout in docs/formats.md). Values are written
// in shortest round-trip form, so write -> read is exact and writing the same
// field twice yields identical bytes.

inline std::string write_field_file(const ScalarField& f) {
  validate_field(f);
  std::string out = "embercap-field 1\n";
  out += std::string("kind ") + (f.kind == FieldKind::Density ? "density" : "potential") + "\n";
  out += "space grid\n";
  out += "lattice";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out += " " + format_double(f.lattice(r, c));
  out += "\n";
  out += "dims " + std::to_string(f.dims[0]) + " " + std::to_string(f.dims[1]) + " " +
         std::to_string(f.dims[2]) + "\n";
  if (f.electrons) out += "electrons " + format_double(*f.electrons) + "\n";
  out += "values\n";
  for (long i = 0; i < f.values.size(); ++i) {
    out += format_double(f.values[i]);
    out += (i % 4 == 3 || i + 1 == f.values.size()) ? "\n" : " ";
  }
  return out;
}

inline std::string write_field_file(const SiteVector& v) {
  std::string out = "embercap-field 1\n";
  out += std::string("kind ") + (v.kind == FieldKind::Density ? "density" : "potential") + "\n";
  out += "space sites\n";
  out += "basis " + v.basis_tag + "\n";
  out += "sites " + std::to_string(v.values.size()) + "\n";
  if (v.electrons) out += "electrons " + format_double(*v.electrons) + "\n";
  out += "values\n";
  for (long i = 0; i < v.values.size(); ++i) {
    out += format_double(v.values[i]);
    out += (i % 4 == 3 || i + 1 == v.values.size()) ? "\n" : " ";
  }
  return out;
}

namespace detail {

struct FieldHeader {
  std::string space;
  FieldKind kind = FieldKind::Potential;
  std::optional<double> electrons;
  std::array<int, 3> dims{0, 0, 0};
  Eigen::Matrix3d lattice;
  std::string basis_tag;
  long n_sites = -1;
  std::vector<double> values;
};

inline FieldHeader parse_field_file(const std::string& text) {
  auto lines = split_lines(text);
  if (lines.empty() || split_tokens(lines[0]) != std::vector<std::string>{"embercap-field", "1"})
    throw ParseError("expected 'embercap-field 1' header", 1);
  FieldHeader h;
  size_t i = 1;
  bool in_values = false;
  for (; i < lines.size(); ++i) {
    auto toks = split_tokens(lines[i]);
    if (toks.empty()) continue;
    int ln = static_cast<int>(i) + 1;
    if (in_values) {
      for (const auto& t : toks) h.values.push_back(parse_double(t, ln));
      continue;
    }
    const std::string& key = toks[0];
    if (key == "kind") {
      if (toks.size() != 2 || (toks[1] != "density" && toks[1] != "potential"))
        throw ParseError("kind must be 'density' or 'potential'", ln);
      h.kind = toks[1] == "density" ? FieldKind::Density : FieldKind::Potential;
    } else if (key == "space") {
      if (toks.size() != 2 || (toks[1] != "grid" && toks[1] != "sites"))
        throw ParseError("space must be 'grid' or 'sites'", ln);
      h.space = toks[1];
    } else if (key == "lattice") {
      if (toks.size() != 10) throw ParseError("lattice needs 9 numbers", ln);
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) h.lattice(r, c) = parse_double(toks[1 + 3 * r + c], ln);
    } else if (key == "dims") {
      if (toks.size() != 4) throw ParseError("dims needs 3 integers", ln);
      for (int k = 0; k < 3; ++k) h.dims[k] = static_cast<int>(parse_int(toks[1 + k], ln));
    } else if (key == "sites") {
      if (toks.size() != 2) throw ParseError("sites needs 1 integer", ln);
      h.n_sites = parse_int(toks[1], ln);
    } else if (key == "basis") {
      if (toks.size() != 2) throw ParseError("basis needs 1 tag", ln);
      h.basis_tag = toks[1];
    } else if (key == "electrons") {
      if (toks.size() != 2) throw ParseError("electrons needs 1 number", ln);
      h.electrons = parse_double(toks[1], ln);
    } else if (key == "values") {
      in_values = true;
    } else {
      throw ParseError("unknown field-file key '" + key + "'", ln);
    }
  }
  return h;
}

}  // namespace detail

inline ScalarField read_grid_field_file(const std::string& text) {
  auto h = detail::parse_field_file(text);
  if (h.space != "grid") throw ParseError("expected a grid-space field file");
  ScalarField f;
  f.kind = h.kind;
  f.electrons = h.electrons;
  f.dims = h.dims;
  f.lattice = h.lattice;
  long expect = static_cast<long>(h.dims[0]) * h.dims[1] * h.dims[2];
  if (static_cast<long>(h.values.size()) != expect)
    throw ParseError("value count " + std::to_string(h.values.size()) + ", expected " +
                     std::to_string(expect));
  f.values = Eigen::Map<const Eigen::VectorXd>(h.values.data(), expect);
  validate_field(f);
  return f;
}

inline SiteVector read_site_field_file(const std::string& text) {
  auto h = detail::parse_field_file(text);
  if (h.space != "sites") throw ParseError("expected a sites-space field file");
  if (h.n_sites < 0) throw ParseError("sites-space file missing 'sites' line");
  if (static_cast<long>(h.values.size()) != h.n_sites)
    throw ParseError("value count " + std::to_string(h.values.size()) + ", expected " +
                     std::to_string(h.n_sites));
  SiteVector v;
  v.kind = h.kind;
  v.electrons = h.electrons;
  v.basis_tag = h.basis_tag;
  v.values = Eigen::Map<const Eigen::VectorXd>(h.values.data(), h.n_sites);
  if (v.kind == FieldKind::Density && v.electrons &&
      std::abs(v.values.sum() - *v.electrons) > 1e-8)
    throw ValidationError("site density sums to " + format_double(v.values.sum()) +
                          ", declared " + format_double(*v.electrons));
  return v;
}

}  // namespace embercap::field
