#include <catch_amalgamated.hpp>

#include <random>

#include "embercap/field.hpp"
#include "embercap/meanfield.hpp"

using namespace embercap;
using namespace embercap::field;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

ScalarField random_field(int n, unsigned seed, FieldKind kind = FieldKind::Potential) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ScalarField f;
  f.dims = {n, n, n};
  f.lattice = 4.0 * Eigen::Matrix3d::Identity();
  f.kind = kind;
  f.values.resize(f.size());
  for (long i = 0; i < f.values.size(); ++i) f.values[i] = u(rng);
  return f;
}

}  // namespace

TEST_CASE("pairing with a zero potential vanishes") {
  ScalarField rho = random_field(4, 1);
  ScalarField v = rho;
  v.values.setZero();
  CHECK(integrate_product(v, rho) == 0.0);
}

TEST_CASE("constant potential pairs to c times the electron count") {
  ScalarField rho = random_field(4, 2, FieldKind::Density);
  rho.values = rho.values.cwiseAbs();
  double n_elec = rho.integral();
  rho.electrons = n_elec;
  ScalarField v = rho;
  v.kind = FieldKind::Potential;
  v.electrons.reset();
  v.values.setConstant(2.5);
  CHECK_THAT(integrate_product(v, rho), WithinRel(2.5 * n_elec, 1e-12));
}

TEST_CASE("grid pairing matches an independent accumulation loop") {
  ScalarField v = random_field(8, 3), rho = random_field(8, 4);
  // Oracle: plain long-double accumulation over explicit indices.
  long double acc = 0.0L;
  for (int i0 = 0; i0 < 8; ++i0)
    for (int i1 = 0; i1 < 8; ++i1)
      for (int i2 = 0; i2 < 8; ++i2)
        acc += static_cast<long double>(v.at(i0, i1, i2)) * rho.at(i0, i1, i2);
  acc *= static_cast<long double>(v.voxel_volume());
  CHECK_THAT(integrate_product(v, rho), WithinRel(static_cast<double>(acc), 1e-12));
}

TEST_CASE("pairing is bilinear") {
  ScalarField v1 = random_field(6, 5), v2 = random_field(6, 6), rho = random_field(6, 7);
  double a = 0.37, b = -1.91;
  ScalarField combo = v1;
  combo.values = a * v1.values + b * v2.values;
  CHECK_THAT(integrate_product(combo, rho),
             WithinRel(a * integrate_product(v1, rho) + b * integrate_product(v2, rho), 1e-12));

  auto site_vec = [](const Eigen::VectorXd& vals) {
    SiteVector s;
    s.values = vals;
    s.basis_tag = "tag";
    return s;
  };
  SiteVector s1 = site_vec(Eigen::VectorXd::Random(12));
  SiteVector s2 = site_vec(Eigen::VectorXd::Random(12));
  SiteVector sr = site_vec(Eigen::VectorXd::Random(12));
  SiteVector sc = site_vec(a * s1.values + b * s2.values);
  CHECK_THAT(integrate_product(sc, sr),
             WithinRel(a * integrate_product(s1, sr) + b * integrate_product(s2, sr), 1e-12));
}

TEST_CASE("pairing rejects mismatched shapes and bases") {
  ScalarField a = random_field(4, 8), b = random_field(5, 9);
  CHECK_THROWS_AS(integrate_product(a, b), ValidationError);
  SiteVector s1, s2;
  s1.values = Eigen::VectorXd::Zero(3);
  s1.basis_tag = "one";
  s2.values = Eigen::VectorXd::Zero(3);
  s2.basis_tag = "two";
  CHECK_THROWS_AS(integrate_product(s1, s2), ValidationError);
}

TEST_CASE("projection of a constant field is constant for every scheme") {
  ScalarField f = random_field(6, 10);
  f.values.setConstant(3.25);
  std::vector<Eigen::Vector3d> sites = {{0.1, 0.2, 0.3}, {1.9, 3.2, 2.7}, {3.99, 0.01, 2.0}};
  for (auto scheme : {Weighting::Trilinear, Weighting::Gaussian}) {
    ProjectionOptions opts;
    opts.scheme = scheme;
    SiteVector v = project_to_sites(f, sites, opts);
    for (int k = 0; k < v.size(); ++k) CHECK_THAT(v.values[k], WithinAbs(3.25, 1e-12));
  }
}

TEST_CASE("trilinear projection reproduces a linear ramp within one voxel") {
  // Analytic oracle: ramp along axis 0, value = fractional coordinate.
  ScalarField f;
  f.dims = {16, 4, 4};
  f.lattice = 4.0 * Eigen::Matrix3d::Identity();
  f.values.resize(f.size());
  for (int i0 = 0; i0 < 16; ++i0)
    for (int i1 = 0; i1 < 4; ++i1)
      for (int i2 = 0; i2 < 4; ++i2) f.at(i0, i1, i2) = i0 / 16.0;

  std::vector<Eigen::Vector3d> sites = {{0.25 * 4.0, 0.5, 0.5}};
  SiteVector v = project_to_sites(f, sites);
  CHECK_THAT(v.values[0], WithinAbs(0.25, 1.0 / 16.0));
}

TEST_CASE("gaussian projection of a distant spike stays below 1e-6") {
  ScalarField f;
  f.dims = {16, 16, 16};
  f.lattice = 8.0 * Eigen::Matrix3d::Identity();
  f.values = Eigen::VectorXd::Zero(f.size());
  f.at(0, 0, 0) = 1.0;  // unit spike at the origin

  ProjectionOptions opts;
  opts.scheme = Weighting::Gaussian;
  opts.gaussian_width = 0.3;
  // Site at the cell center: 4*sqrt(3) / 0.3 > 20 widths from the spike.
  std::vector<Eigen::Vector3d> sites = {{4.0, 4.0, 4.0}};
  SiteVector v = project_to_sites(f, sites, opts);
  CHECK(std::abs(v.values[0]) < 1e-6);

  // Direct convolution oracle.
  double num = 0.0, den = 0.0;
  for (int i0 = 0; i0 < 16; ++i0)
    for (int i1 = 0; i1 < 16; ++i1)
      for (int i2 = 0; i2 < 16; ++i2) {
        Eigen::Vector3d d(i0 / 16.0 - 0.5, i1 / 16.0 - 0.5, i2 / 16.0 - 0.5);
        for (int k = 0; k < 3; ++k) d[k] -= std::round(d[k]);
        double w = std::exp(-(8.0 * d).squaredNorm() / (2 * 0.3 * 0.3));
        num += w * f.at(i0, i1, i2);
        den += w;
      }
  CHECK_THAT(v.values[0], WithinAbs(num / den, 1e-15));
}

TEST_CASE("grid field files round trip exactly and are byte-stable") {
  ScalarField f = random_field(4, 11, FieldKind::Density);
  f.values = f.values.cwiseAbs();
  f.electrons = f.integral();
  std::string text = write_field_file(f);
  ScalarField back = read_grid_field_file(text);
  CHECK(back.values == f.values);
  CHECK(back.dims == f.dims);
  CHECK(write_field_file(back) == text);
}

TEST_CASE("site field files round trip") {
  SiteVector v;
  v.values = Eigen::VectorXd::Random(9);
  v.basis_tag = "chain9";
  std::string text = write_field_file(v);
  SiteVector back = read_site_field_file(text);
  CHECK(back.values == v.values);
  CHECK(back.basis_tag == "chain9");
  CHECK(write_field_file(back) == text);
}

TEST_CASE("value-count mismatch names the expected count") {
  ScalarField f = random_field(4, 12);
  std::string text = write_field_file(f);
  // Declare a 4x4x4 grid but supply 63 values.
  size_t cut = text.find_last_of(' ');
  text.resize(cut);
  text += "\n";
  try {
    read_grid_field_file(text);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("64") != std::string::npos);
    CHECK(std::string(e.what()).find("63") != std::string::npos);
  }
}

TEST_CASE("density files validate their declared electron count") {
  ScalarField f = random_field(4, 13, FieldKind::Density);
  f.values = f.values.cwiseAbs();
  f.electrons = f.integral() + 1.0;  // deliberately wrong
  CHECK_THROWS_AS(write_field_file(f), ValidationError);
}

TEST_CASE("solved-model density written as a field sums to the electron count") {
  meanfield::TightBindingModel m;
  m.onsite = Eigen::VectorXd::Zero(4);
  m.site_positions.assign(4, Eigen::Vector3d::Zero());
  for (int i = 0; i + 1 < 4; ++i) m.bonds.push_back({i, i + 1, -1.0});
  m.n_up = 2;
  m.n_dn = 2;
  m.smearing_width = 0.05;
  auto res = meanfield::solve(m);
  SiteVector rho = meanfield::density_vector(m, res);
  std::string text = write_field_file(rho);
  SiteVector back = read_site_field_file(text);
  CHECK_THAT(back.values.sum(), WithinAbs(4.0, 1e-10));
}
