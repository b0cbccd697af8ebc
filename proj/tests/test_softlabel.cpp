#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "svls/phantom.hpp"
#include "svls/softlabel.hpp"

using namespace svls;

namespace {

LabelVolume patch3x3(std::vector<Label> labels, std::size_t classes = 2) {
  return LabelVolume(Geometry::planar(3, 3), classes, std::move(labels));
}

void expect_on_simplex(const SoftLabelVolume& p) {
  EXPECT_EQ(p.first_off_simplex(kSimplexTolerance), p.voxel_count());
}

}  // namespace

TEST(LabelSmooth, SpotValues) {
  const LabelVolume l(Geometry::planar(1, 1), 4, std::vector<Label>{0});
  const auto p = label_smooth<double>(l, 0.1);
  EXPECT_DOUBLE_EQ(p.at(0, 0), 0.925);
  for (std::size_t c = 1; c < 4; ++c) EXPECT_DOUBLE_EQ(p.at(c, 0), 0.025);

  const LabelVolume two(Geometry::planar(1, 1), 2, std::vector<Label>{1});
  const auto q = label_smooth<double>(two, 0.3);
  EXPECT_DOUBLE_EQ(q.at(0, 0), 0.15);
  EXPECT_DOUBLE_EQ(q.at(1, 0), 0.85);
}

TEST(LabelSmooth, AlphaZeroIsOneHot) {
  std::mt19937_64 rng(1);
  const auto l = oracle::random_labels(rng, Geometry::volumetric(3, 4, 5), 4);
  EXPECT_EQ(label_smooth(l, 0.0), one_hot_encode(l));
}

TEST(LabelSmooth, RejectsAlphaOutsideUnitInterval) {
  const LabelVolume l(Geometry::planar(2, 2), 2, Label{0});
  EXPECT_THROW(label_smooth(l, -0.01), Error);
  EXPECT_THROW(label_smooth(l, 1.01), Error);
}

TEST(LabelSmooth, ArgmaxReproducesLabels) {
  std::mt19937_64 rng(2);
  for (std::size_t classes = 2; classes <= 5; ++classes)
    for (double alpha : {0.0, 0.1, 0.2, 0.3}) {
      const auto l = oracle::random_labels(rng, Geometry::volumetric(4, 4, 4), classes);
      EXPECT_EQ(argmax_labels(label_smooth(l, alpha)), l);
    }
}

TEST(SvlsSmooth, HomogeneousPatchStaysOneHot) {
  const LabelVolume l(Geometry::planar(5, 5), 2, Label{1});
  const auto p = svls_smooth(l, svls_weights(2));
  for (float x : p.plane(1)) EXPECT_EQ(x, 1.0f);
  for (float x : p.plane(0)) EXPECT_EQ(x, 0.0f);
}

TEST(SvlsSmooth, IsolatedCenterGivesEqualProbability) {
  for (double sigma : {0.5, 1.0, 2.0, 5.0}) {
    const auto p = svls_smooth(patch3x3({1, 1, 1, 1, 0, 1, 1, 1, 1}), svls_weights(2, sigma));
    EXPECT_EQ(p.at(0, 4), 0.5f);
    EXPECT_EQ(p.at(1, 4), 0.5f);
  }
}

TEST(SvlsSmooth, StraightBoundaryCenter) {
  // Top row class B (1), rest class A (0).
  const auto p = svls_smooth<double>(patch3x3({1, 1, 1, 0, 0, 0, 0, 0, 0}), svls_weights(2));
  EXPECT_NEAR(p.at(1, 4), 0.17219258359976817942, 1e-12);
  EXPECT_NEAR(p.at(0, 4), 0.82780741640023182058, 1e-12);
}

TEST(SvlsSmooth, RankMismatch) {
  const LabelVolume l(Geometry::volumetric(3, 3, 3), 2, Label{0});
  EXPECT_THROW(svls_smooth(l, svls_weights(2)), Error);
}

TEST(SvlsSmooth, MatchesNaiveConvolution) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int rank = trial % 2 ? 3 : 2;
    const auto g = oracle::random_geometry(rng, rank, 9);
    const std::size_t classes = 2 + rng() % 4;
    const double sigma = trial % 3 == 0 ? 0.7 : 1.0;
    const auto l = oracle::random_labels(rng, g, classes);
    const auto fast = svls_smooth(l, svls_weights(rank, sigma));
    const auto slow = oracle::naive_svls(l, sigma);
    for (std::size_t i = 0; i < slow.size(); ++i) ASSERT_NEAR(fast.values()[i], slow[i], 1e-6);
    expect_on_simplex(fast);
  }
}

TEST(SvlsSmooth, ThreadCountDoesNotChangeOutput) {
  std::mt19937_64 rng(6);
  const auto l = oracle::random_labels(rng, Geometry::volumetric(7, 9, 11), 4);
  const auto k = svls_weights(3);
  const auto one = svls_smooth(l, k, Execution{1});
  EXPECT_EQ(one, svls_smooth(l, k, Execution{3}));
  EXPECT_EQ(one, svls_smooth(l, k, Execution{16}));
}

TEST(SvlsSmooth, InteriorIdentity) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int rank = trial % 2 ? 3 : 2;
    const auto g = oracle::random_geometry(rng, rank, 8);
    // Blocky labels so uniform neighborhoods actually occur.
    std::vector<Label> data(g.voxel_count());
    for (std::size_t v = 0; v < data.size(); ++v) {
      const auto c = g.coordinates(v);
      data[v] = static_cast<Label>(((c[0] / 3) + (c[1] / 4) + (c[2] / 3)) % 3);
    }
    const LabelVolume l(g, 3, data);
    const auto p = svls_smooth(l, svls_weights(rank));
    const PaddedView<Label> view(l.labels(), g, 1);
    for (std::size_t v = 0; v < data.size(); ++v) {
      const auto c = g.coordinates(v);
      bool uniform = true;
      const int zr = rank == 3 ? 1 : 0;
      for (int a = -zr; a <= zr; ++a)
        for (int b = -1; b <= 1; ++b)
          for (int d = -1; d <= 1; ++d)
            uniform &= view.at((long)c[0] + a, (long)c[1] + b, (long)c[2] + d) == data[v];
      if (!uniform) continue;
      for (std::size_t cls = 0; cls < 3; ++cls)
        ASSERT_EQ(p.at(cls, v), cls == data[v] ? 1.0f : 0.0f);
    }
  }
}

TEST(SvlsSmooth, NeighborMonotonicityExhaustive) {
  const auto k = svls_weights(2);
  for (unsigned mask = 0; mask < 256; ++mask) {
    std::vector<Label> cells(9, 0);
    for (unsigned bit = 0, pos = 0; pos < 9; ++pos) {
      if (pos == 4) continue;
      cells[pos] = (mask >> bit++) & 1u;
    }
    const double base = svls_smooth<double>(patch3x3(cells), k).at(1, 4);
    for (unsigned pos = 0; pos < 9; ++pos) {
      if (pos == 4 || cells[pos] == 1) continue;
      auto flipped = cells;
      flipped[pos] = 1;
      ASSERT_GT(svls_smooth<double>(patch3x3(flipped), k).at(1, 4), base);
    }
  }
}

TEST(Fusion, SingleRaterMsvlsEqualsSvls) {
  std::mt19937_64 rng(8);
  const auto l = oracle::random_labels(rng, Geometry::volumetric(5, 6, 7), 3);
  const auto k = svls_weights(3);
  EXPECT_EQ(msvls_fuse(RaterSet({l}), k), svls_smooth(l, k));
}

TEST(Fusion, UnanimousInteriorIsOne) {
  const LabelVolume l(Geometry::volumetric(5, 5, 5), 2, Label{1});
  const auto p = msvls_fuse(RaterSet({l, l, l}), svls_weights(3));
  EXPECT_EQ(p.at(1, 62), 1.0f);
}

TEST(Fusion, MsvlsIsMeanOfRaterSvls) {
  // Rater 1 homogeneous class 1 (p1 = 1), rater 2 isolated center class 0
  // (p1 = 0.5 at the center), so the fused center value is 0.75.
  const auto a = patch3x3({1, 1, 1, 1, 1, 1, 1, 1, 1});
  const auto b = patch3x3({1, 1, 1, 1, 0, 1, 1, 1, 1});
  const auto p = msvls_fuse(RaterSet({a, b}), svls_weights(2));
  EXPECT_EQ(p.at(1, 4), 0.75f);
}

TEST(Fusion, MohCountsVotes) {
  const LabelVolume one(Geometry::planar(1, 1), 2, std::vector<Label>{1});
  const LabelVolume zero(Geometry::planar(1, 1), 2, std::vector<Label>{0});
  const auto p = moh_fuse(RaterSet({one, zero, one, one}));
  EXPECT_EQ(p.at(0, 0), 0.25f);
  EXPECT_EQ(p.at(1, 0), 0.75f);
  const auto u = moh_fuse(RaterSet({one, one}));
  EXPECT_EQ(u, one_hot_encode(one));
}

TEST(Fusion, PermutationInvariant) {
  std::mt19937_64 rng(9);
  const auto g = Geometry::volumetric(4, 5, 6);
  const auto a = oracle::random_labels(rng, g, 3), b = oracle::random_labels(rng, g, 3),
             c = oracle::random_labels(rng, g, 3);
  const auto k = svls_weights(3);
  const auto m1 = msvls_fuse<double>(RaterSet({a, b, c}), k);
  const auto m2 = msvls_fuse<double>(RaterSet({c, a, b}), k);
  for (std::size_t i = 0; i < m1.values().size(); ++i)
    EXPECT_NEAR(m1.values()[i], m2.values()[i], 1e-15);
  EXPECT_EQ(moh_fuse(RaterSet({a, b, c})), moh_fuse(RaterSet({b, c, a})));
}

TEST(Fusion, Fig3BlueOnlyInMsvls) {
  PhantomSpec spec;
  spec.kind = PhantomKind::fig3_multirater;
  spec.dims = {5, 5};
  spec.num_classes = 3;
  const auto raters = generate_rater_set(spec, 3, 0);
  const auto moh = moh_fuse(raters);
  const auto msvls = msvls_fuse(raters, svls_weights(2));
  const std::size_t center = raters.geometry().index(0, 2, 2);
  for (const auto& r : raters) ASSERT_NE(r[center], 2);
  EXPECT_EQ(moh.at(2, center), 0.0f);
  EXPECT_GT(msvls.at(2, center), 0.0f);
}

TEST(Fusion, RaterSetValidation) {
  EXPECT_THROW(RaterSet({}), Error);
  const LabelVolume a(Geometry::planar(2, 2), 2, Label{0});
  const LabelVolume b(Geometry::planar(2, 3), 2, Label{0});
  const LabelVolume c(Geometry::planar(2, 2), 3, Label{0});
  EXPECT_THROW(RaterSet({a, b}), Error);
  EXPECT_THROW(RaterSet({a, c}), Error);
}

TEST(Simplex, AllMethodsOnRandomInputs) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    const int rank = trial % 2 ? 3 : 2;
    const auto g = oracle::random_geometry(rng, rank, 8);
    const std::size_t classes = 2 + rng() % 4;
    std::vector<LabelVolume> raters;
    for (int j = 0; j < 3; ++j) raters.push_back(oracle::random_labels(rng, g, classes));
    const RaterSet set(raters);
    const auto k = svls_weights(rank);
    expect_on_simplex(label_smooth(raters[0], 0.2));
    expect_on_simplex(svls_smooth(raters[0], k));
    expect_on_simplex(msvls_fuse(set, k));
    expect_on_simplex(moh_fuse(set));
  }
}

TEST(MakeSoftLabels, DispatchAndArity) {
  const LabelVolume l(Geometry::planar(3, 3), 2, Label{1});
  SmoothingSpec spec{SmoothingMethod::ls, 0.2};
  EXPECT_EQ(make_soft_labels(RaterSet({l}), spec), label_smooth(l, 0.2));
  spec.method = SmoothingMethod::svls;
  EXPECT_THROW(make_soft_labels(RaterSet({l, l}), spec), Error);
  spec.method = SmoothingMethod::moh;
  EXPECT_EQ(make_soft_labels(RaterSet({l, l}), spec), one_hot_encode(l));
  EXPECT_EQ(parse_smoothing_method("onehot"), SmoothingMethod::one_hot);
  EXPECT_THROW(parse_smoothing_method("gauss"), Error);
}
