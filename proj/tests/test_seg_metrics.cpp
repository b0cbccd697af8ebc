#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "svls/seg_metrics.hpp"

using namespace svls;

namespace {

Mask cube_mask(const Geometry& g, Index3 lo, std::size_t side) {
  Mask m{g, std::vector<std::uint8_t>(g.voxel_count(), 0)};
  for (std::size_t z = lo[0]; z < lo[0] + side; ++z)
    for (std::size_t y = lo[1]; y < lo[1] + side; ++y)
      for (std::size_t x = lo[2]; x < lo[2] + side; ++x) m.inside[g.index(z, y, x)] = 1;
  return m;
}

Mask random_blob(std::mt19937_64& rng, const Geometry& g) {
  // A few random boxes so that boundaries have structure.
  Mask m{g, std::vector<std::uint8_t>(g.voxel_count(), 0)};
  const int boxes = 1 + int(rng() % 3);
  for (int b = 0; b < boxes; ++b) {
    Index3 lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      lo[a] = rng() % g.extents[a];
      hi[a] = lo[a] + rng() % (g.extents[a] - lo[a]) + 1;
    }
    for (std::size_t z = lo[0]; z < hi[0]; ++z)
      for (std::size_t y = lo[1]; y < hi[1]; ++y)
        for (std::size_t x = lo[2]; x < hi[2]; ++x) m.inside[g.index(z, y, x)] = 1;
  }
  if (rng() % 4 == 0)
    for (auto& v : m.inside) v ^= (rng() % 10 == 0);
  return m;
}

}  // namespace

TEST(Dice, TrivialCases) {
  const auto g = Geometry::volumetric(10, 10, 10);
  const auto a = cube_mask(g, {0, 0, 0}, 3);
  EXPECT_EQ(dice(a, a), 1.0);
  EXPECT_EQ(dice(a, cube_mask(g, {5, 5, 5}, 3)), 0.0);
  Mask empty{g, std::vector<std::uint8_t>(g.voxel_count(), 0)};
  EXPECT_EQ(dice(empty, empty), 1.0);

  // |T| = |P| = 100 with 50 shared voxels.
  Mask t{g, std::vector<std::uint8_t>(1000, 0)}, p = t;
  for (std::size_t v = 0; v < 100; ++v) t.inside[v] = 1;
  for (std::size_t v = 50; v < 150; ++v) p.inside[v] = 1;
  EXPECT_EQ(dice(t, p), 0.5);
}

TEST(Dice, LabelVolumesAndInvariance) {
  const auto g = Geometry::planar(2, 3);
  const LabelVolume ref(g, 3, std::vector<Label>{0, 1, 1, 2, 2, 0});
  const LabelVolume pred(g, 3, std::vector<Label>{0, 1, 2, 2, 1, 0});
  const LabelVolume relabeled(g, 3, std::vector<Label>{2, 1, 0, 0, 1, 2});
  EXPECT_EQ(dice(ref, pred, 1), 0.5);
  EXPECT_EQ(dice(pred, ref, 1), 0.5);
  EXPECT_EQ(dice(ref, relabeled, 1), dice(ref, pred, 1));
  EXPECT_EQ(dice(ref, ref, 2), 1.0);
  EXPECT_THROW(dice(ref, LabelVolume(Geometry::planar(3, 2), 3, Label{0}), 1), Error);
}

TEST(Boundary, Cube) {
  const auto g = Geometry::volumetric(7, 7, 7);
  const auto b = boundary_voxels(cube_mask(g, {2, 2, 2}, 3));
  EXPECT_EQ(b.size(), 26u);
  for (const auto& v : b) EXPECT_NE(v, (Index3{3, 3, 3}));
}

TEST(Boundary, SingleAndEmpty) {
  const auto g = Geometry::volumetric(5, 5, 5);
  const auto b = boundary_voxels(cube_mask(g, {2, 2, 2}, 1));
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0], (Index3{2, 2, 2}));
  EXPECT_TRUE(boundary_voxels(Mask{g, std::vector<std::uint8_t>(125, 0)}).empty());
}

TEST(Boundary, MatchesDefinition) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = oracle::random_geometry(rng, trial % 2 ? 3 : 2, 9);
    const auto m = random_blob(rng, g);
    EXPECT_EQ(boundary_voxels(m), oracle::naive_boundary(g, m.inside));
  }
}

TEST(DistanceTransform, MatchesBruteForceAnisotropic) {
  std::mt19937_64 rng(2);
  const double choices[] = {0.5, 1.0, 1.5, 2.0, 1.62, 3.22};
  for (int trial = 0; trial < 30; ++trial) {
    auto g = oracle::random_geometry(rng, trial % 2 ? 3 : 2, 8);
    for (std::size_t a = g.first_axis(); a < 3; ++a) g.spacing[a] = choices[rng() % 6];
    Mask f{g, std::vector<std::uint8_t>(g.voxel_count(), 0)};
    for (auto& v : f.inside) v = rng() % 7 == 0;
    const auto dt = squared_distance_transform(f);
    for (std::size_t v = 0; v < dt.size(); ++v) {
      double best = INFINITY;
      for (std::size_t u = 0; u < dt.size(); ++u)
        if (f.inside[u]) best = std::min(best, oracle::squared_mm(g, g.coordinates(v), g.coordinates(u)));
      if (std::isinf(best)) ASSERT_TRUE(std::isinf(dt[v]));
      else ASSERT_NEAR(dt[v], best, 1e-9 * (1 + best));
    }
  }
}

TEST(SurfaceDice, TrivialCases) {
  const auto g = Geometry::volumetric(8, 8, 8);
  const auto a = cube_mask(g, {1, 1, 1}, 3);
  for (double tol : {0.0, 0.5, 2.0}) EXPECT_EQ(surface_dice(a, a, tol), 1.0);
  const auto far = cube_mask(g, {4, 5, 4}, 2);
  const double diagonal = std::sqrt(3.0) * 8;
  EXPECT_EQ(surface_dice(a, far, diagonal), 1.0);
  Mask empty{g, std::vector<std::uint8_t>(g.voxel_count(), 0)};
  EXPECT_EQ(surface_dice(empty, empty, 1.0), 1.0);
  EXPECT_EQ(surface_dice(a, empty, 100.0), 0.0);
}

TEST(SurfaceDice, ShiftedCube) {
  const auto g = Geometry::volumetric(9, 9, 9);
  const auto a = cube_mask(g, {2, 2, 2}, 4);
  const auto b = cube_mask(g, {2, 2, 3}, 4);
  EXPECT_EQ(surface_dice(a, b, 1.0), 1.0);
  EXPECT_EQ(oracle::brute_surface_dice(g, a.inside, b.inside, 1.0), 1.0);
  const double half = surface_dice(a, b, 0.5);
  EXPECT_LT(half, 1.0);
  EXPECT_EQ(half, oracle::brute_surface_dice(g, a.inside, b.inside, 0.5));
}

TEST(SurfaceDice, SpacingMattersAndErrors) {
  auto g = Geometry::volumetric(9, 9, 9, {1.0, 1.0, 3.0});
  const auto a = cube_mask(g, {2, 2, 2}, 4);
  const auto b = cube_mask(g, {2, 2, 3}, 4);
  EXPECT_LT(surface_dice(a, b, 2.0), 1.0);
  EXPECT_EQ(surface_dice(a, b, 3.0), 1.0);
  EXPECT_THROW(surface_dice(a, b, -1.0), Error);
  Mask other{Geometry::volumetric(9, 9, 9), b.inside};
  EXPECT_THROW(surface_dice(a, other, 1.0), Error);
}

TEST(SurfaceDice, MatchesBruteForceSymmetricMonotone) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 25; ++trial) {
    auto g = oracle::random_geometry(rng, trial % 3 ? 3 : 2, 10);
    if (trial % 4 == 0) g.spacing = {1.5, 1.0, 0.5};
    const auto t = random_blob(rng, g), p = random_blob(rng, g);
    double prev = -1;
    for (double tol : {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0}) {
      const double sd = surface_dice(t, p, tol);
      ASSERT_EQ(sd, oracle::brute_surface_dice(g, t.inside, p.inside, tol));
      ASSERT_EQ(sd, surface_dice(p, t, tol));
      ASSERT_GE(sd, prev);
      prev = sd;
    }
  }
}

TEST(Evaluate, RowsRegionsComposite) {
  const auto g = Geometry::planar(4, 4);
  const LabelVolume ref(g, 3, std::vector<Label>{0, 0, 0, 0, 0, 1, 1, 0, 0, 1, 2, 0, 0, 0, 0, 0});
  const auto s = evaluate_segmentation(ref, ref, 2.0, {}, true);
  ASSERT_EQ(s.rows.size(), 4u);
  EXPECT_EQ(s.rows[3].name, "composite");
  for (const auto& r : s.rows) {
    EXPECT_EQ(r.dsc, 1.0);
    EXPECT_EQ(r.sd, 1.0);
  }
  const LabelVolume pred(g, 3, std::vector<Label>{0, 0, 0, 0, 0, 1, 2, 0, 0, 2, 1, 0, 0, 0, 0, 0});
  const auto merged = evaluate_segmentation(ref, pred, 2.0, {{"tumor", {1, 2}}});
  ASSERT_EQ(merged.rows.size(), 1u);
  EXPECT_EQ(merged.rows[0].dsc, 1.0);
  const auto split = evaluate_segmentation(ref, pred, 2.0);
  EXPECT_EQ(split.rows[1].dsc, dice(ref, pred, 1));
}
