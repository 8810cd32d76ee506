#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "plseg/metrics.hpp"
#include "test_util.hpp"

using namespace plseg;

namespace {

/// 8^3 volume with the listed (k, i, j) voxels set.
MaskVolume with_voxels(std::initializer_list<std::array<int, 3>> vox) {
  MaskVolume m(8, 8, 8);
  for (const auto& v : vox) m(v[0], v[1], v[2]) = 1;
  return m;
}

/// Masks with prescribed TP/FP/FN counts laid out along a line of voxels.
std::pair<MaskVolume, MaskVolume> with_counts(int tp, int fp, int fn) {
  MaskVolume a(1, 10, 20), b(1, 10, 20);
  int n = 0;
  auto next = [&] {
    const int idx = n++;
    return std::array<int, 2>{idx / 20, idx % 20};
  };
  for (int t = 0; t < tp; ++t) {
    const auto p = next();
    a(0, p[0], p[1]) = b(0, p[0], p[1]) = 1;
  }
  for (int t = 0; t < fp; ++t) {
    const auto p = next();
    a(0, p[0], p[1]) = 1;
  }
  for (int t = 0; t < fn; ++t) {
    const auto p = next();
    b(0, p[0], p[1]) = 1;
  }
  return {a, b};
}

}  // namespace

TEST_CASE("worked DSC and VS examples") {
  {
    const auto [a, b] = with_counts(30, 10, 10);
    CHECK(confusion(a, b) == ConfusionCounts{30, 10, 10});
    CHECK(dsc(a, b) == doctest::Approx(0.75).epsilon(1e-15));
  }
  {
    const auto [a, b] = with_counts(30, 10, 20);
    CHECK(vs(a, b) == doctest::Approx(1.0 - 10.0 / 90.0).epsilon(1e-15));
    CHECK(vs(a, b) == doctest::Approx(0.889).epsilon(1e-3));
  }
  const auto [a, b] = with_counts(5, 0, 0);
  CHECK(dsc(a, a) == 1.0);
  const auto [c, d] = with_counts(0, 7, 7);
  CHECK(dsc(c, d) == 0.0);  // disjoint
  CHECK(vs(c, d) == 1.0);   // |A| = |B|
}

TEST_CASE("empty-mask conventions") {
  const MaskVolume e(4, 4, 4);
  MaskVolume b(4, 4, 4);
  b(1, 1, 1) = 1;
  CHECK(dsc(e, e) == 1.0);
  CHECK(vs(e, e) == 1.0);
  CHECK(vs(e, b) == 0.0);
  CHECK(dsc(e, b) == 0.0);
  CHECK_THROWS_AS(hausdorff_mm(e, b, {}), InvalidArgument);
  CHECK_THROWS_AS(hausdorff_mm(b, e, {}), InvalidArgument);
  CHECK_THROWS_AS(confusion(e, MaskVolume(4, 4, 5)), ShapeMismatch);
}

TEST_CASE("two voxels three slices apart are 3 mm apart at dz = 1") {
  const MaskVolume a = with_voxels({{{1, 4, 4}}});
  const MaskVolume b = with_voxels({{{4, 4, 4}}});
  CHECK(hausdorff_mm(a, b, {1.0, 1.0, 1.0}) == 3.0);
  CHECK(oracle::hausdorff(a, b, {1.0, 1.0, 1.0}) == 3.0);
  CHECK(hausdorff_mm(a, b, {2.5, 1.0, 1.0}) == 7.5);
  CHECK(hausdorff_mm(a, a, {1.0, 1.0, 1.0}) == 0.0);
}

TEST_CASE("metrics equal the brute-force oracles on random masks") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> density(0.005, 0.3);
  const Spacing3 spacings[] = {{1.0, 1.0, 1.0}, {2.5, 0.7, 0.9}, {0.5, 1.5, 1.25}};
  for (int trial = 0; trial < 40; ++trial) {
    const MaskVolume a = oracle::random_mask(rng, 12, density(rng));
    const MaskVolume b = oracle::random_mask(rng, 12, density(rng));
    const Spacing3 s = spacings[trial % 3];
    const auto c = oracle::count(a, b);
    CHECK(dsc(a, b) == oracle::dice(c));
    CHECK(vs(a, b) == oracle::volumetric_similarity(c));
    CHECK(dsc(a, b) == dsc(b, a));
    CHECK(vs(a, b) == vs(b, a));
    if (count_foreground(a) && count_foreground(b)) {
      // Same point sets; summation order of the squared terms may differ by an ulp.
      CHECK(hausdorff_mm(a, b, s) == doctest::Approx(oracle::hausdorff(a, b, s)).epsilon(1e-12));
      CHECK(hausdorff_mm(a, b, s) == hausdorff_mm(b, a, s));
    }
  }
}

TEST_CASE("distance transform is exact against brute force") {
  std::mt19937_64 rng(5);
  const MaskVolume m = oracle::random_mask(rng, 7, 0.05);
  const Spacing3 s{1.7, 0.6, 1.1};
  const Volume<double> d = squared_distance_to_foreground(m, s);
  const auto pts = oracle::points(m, s);
  for (std::ptrdiff_t k = 0; k < 7; ++k)
    for (std::ptrdiff_t i = 0; i < 7; ++i)
      for (std::ptrdiff_t j = 0; j < 7; ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : pts) {
          const double dz = k * s.dz - p.z, dy = i * s.dy - p.y, dx = j * s.dx - p.x;
          best = std::min(best, dz * dz + dy * dy + dx * dx);
        }
        CHECK(d(k, i, j) == doctest::Approx(best).epsilon(1e-12));
      }
}

TEST_CASE("evaluate and aggregate") {
  MaskVolume gt(5, 6, 6);
  gt(2, 2, 2) = gt(2, 2, 3) = 1;
  const EvalRow perfect = evaluate("a", gt, gt, {});
  CHECK(perfect.dsc == 1.0);
  CHECK(perfect.vs == 1.0);
  REQUIRE(perfect.hd_mm);
  CHECK(*perfect.hd_mm == 0.0);
  const EvalRow empty = evaluate("b", MaskVolume(5, 6, 6), gt, {});
  CHECK(empty.dsc == 0.0);
  CHECK(empty.vs == 0.0);
  CHECK(!empty.hd_mm);

  const EvalReport rep = aggregate({perfect, empty, {"c", 0.5, 0.8, 2.0}});
  CHECK(rep.dsc.n == 3);
  CHECK(rep.dsc.mean == doctest::Approx(0.5));
  // Sample standard deviation of {1, 0, 0.5}.
  CHECK(rep.dsc.std == doctest::Approx(0.5));
  CHECK(rep.hd_mm.n == 2);
  CHECK(rep.hd_mm.mean == doctest::Approx(1.0));

  testutil::TempDir dir;
  write_eval_csv(dir / "e.csv", rep);
  std::ifstream in(dir / "e.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  CHECK(text.rfind("lesion_id,dsc,vs,hd_mm\n", 0) == 0);
  CHECK(text.find("b,0.000000,0.000000,\n") != std::string::npos);
  CHECK(text.find("mean,0.500000,") != std::string::npos);
}

TEST_CASE("summaries of one and zero values") {
  const Summary one = summarize({0.3});
  CHECK(one.mean == 0.3);
  CHECK(one.std == 0.0);
  const Summary none = summarize({});
  CHECK(none.n == 0);
}
