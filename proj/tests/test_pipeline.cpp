#include <catch_amalgamated.hpp>

#include "chain_fixture.hpp"

using namespace embercap;

TEST_CASE("embedded excitation energies are insensitive to the host size") {
  auto emb12 = chainfix::embedded_excitation(12, false);
  auto emb24 = chainfix::embedded_excitation(24, false);
  REQUIRE(emb12.converged);
  REQUIRE(emb24.converged);
  CHECK(emb12.residual_max < 1e-6);
  CHECK(emb24.residual_max < 1e-6);

  double emb_diff = std::abs(emb12.delta_e - emb24.delta_e);
  CHECK(emb_diff < 1e-3);

  // The unembedded fragment misses the environment by more than the
  // embedded host-size spread.
  auto bare = chainfix::embedded_excitation(24, true);
  CHECK(std::abs(bare.delta_e - emb24.delta_e) > emb_diff);
}

TEST_CASE("the bare fragment is literally host-independent") {
  auto bare12 = chainfix::embedded_excitation(12, true);
  auto bare24 = chainfix::embedded_excitation(24, true);
  CHECK_THAT(bare12.delta_e, Catch::Matchers::WithinAbs(bare24.delta_e, 1e-12));
}

TEST_CASE("embedding shifts the cluster spectrum") {
  auto emb = chainfix::embedded_excitation(12, false);
  auto bare = chainfix::embedded_excitation(12, true);
  CHECK(std::abs(emb.delta_e - bare.delta_e) > 1e-4);
}
