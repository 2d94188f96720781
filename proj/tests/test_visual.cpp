#include <doctest.h>

#include <cmath>

#include "dvcr/dataset.hpp"
#include "dvcr/error.hpp"
#include "dvcr/visual.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dvcr;
using namespace dvcr::testing;

TEST_CASE("roi align: 2x2 grid pooled to one bin averages to 2.5") {
  FeatureGrid g(2, 2, 1, 1);
  g(0, 0, 0) = 1;
  g(0, 1, 0) = 2;
  g(1, 0, 0) = 3;
  g(1, 1, 0) = 4;
  CHECK(roi_align(g, {0, 0, 2, 2}, {1, 1, 2}) == std::vector<double>{2.5});
  CHECK(whole_image_feature(g) == std::vector<double>{2.5});
}

TEST_CASE("roi align matches explicit bilinear loops") {
  dvcr::Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t patch = 1 + rng.below(16);
    const auto g = random_grid(rng, 1 + rng.below(9), 1 + rng.below(9), 1 + rng.below(4), patch);
    const double W = double(g.cols * patch), H = double(g.rows * patch);
    const BBox box = random_overlapping_box(rng, W, H, 0.2);
    const RoiShape shape{1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(4)};
    const auto got = roi_align(g, box, shape);
    const auto want = roi_oracle(g, box, shape);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-9);
  }
}

TEST_CASE("roi align returns a constant grid's value exactly") {
  dvcr::Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    FeatureGrid g(1 + rng.below(6), 1 + rng.below(6), 2, 1 + rng.below(8));
    const double c = rng.uniform(-5, 5);
    for (auto& v : g.data) v = c;
    const double W = double(g.cols * g.patch), H = double(g.rows * g.patch);
    const BBox box{rng.uniform(0, W), rng.uniform(0, H), rng.uniform(0, W), rng.uniform(0, H)};
    for (double v : roi_align(g, box, {1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(5)})) CHECK(v == c);
  }
}

TEST_CASE("roi align rejects bad input") {
  FeatureGrid g(2, 2, 1, 4);
  CHECK_THROWS_AS(roi_align(FeatureGrid{}, {0, 0, 1, 1}), InvariantError);
  CHECK_THROWS_AS(roi_align(g, {0, 0, -1, 1}), InvariantError);
  CHECK_THROWS_AS(roi_align(g, {100, 0, 1, 1}), InvariantError);
  CHECK_THROWS_AS(roi_align(g, {0, 0, 1, 1}, {0, 1, 1}), InvariantError);
}

TEST_CASE("element features are zero without a grid or outside it") {
  FeatureGrid g(2, 2, 7, 4);
  for (auto& v : g.data) v = 1.0;
  CHECK(element_feature(nullptr, {0, 0, 4, 4}, VisualMode::kElement, 7) == std::vector<double>(7, 0.0));
  CHECK(element_feature(&g, {50, 50, 4, 4}, VisualMode::kElement, 7) == std::vector<double>(7, 0.0));
  CHECK(element_feature(&g, {50, 50, 4, 4}, VisualMode::kWhole, 7) == std::vector<double>(7, 1.0));
  CHECK(element_feature(&g, {0, 0, 4, 4}, VisualMode::kElement, 7) == std::vector<double>(7, 1.0));
}

TEST_CASE("patch statistics") {
  Image img(5, 3, {255, 0, 0});
  img.fill_rect({0, 0, 2, 3}, {0, 0, 255});
  const auto g = patch_featurize(img, 2, 8);
  CHECK(g.rows == 2);
  CHECK(g.cols == 3);
  CHECK(g.dim == 8);
  CHECK(g(0, 0, 0) == 0.0);
  CHECK(g(0, 0, 2) == 1.0);
  CHECK(g(0, 1, 0) == 1.0);
  CHECK(g(0, 0, 7) == 0.0);
  for (double v : g.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK_THROWS(patch_featurize(img, 2, 6));
  CHECK_THROWS(patch_featurize(img, 0, 8));
}

TEST_CASE("ppm round trip and malformed input") {
  dvcr::Rng rng(8);
  Image img(7, 4);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.below(256));
  const auto bytes = encode_ppm(img);
  CHECK(decode_ppm(bytes) == img);

  auto truncated = bytes;
  truncated.resize(truncated.size() - 5);
  CHECK_THROWS_AS(decode_ppm(truncated), FormatError);
  std::vector<std::uint8_t> p3{'P', '3', '\n', '1', ' ', '1', '\n', '2', '5', '5', '\n', '0', ' ', '0', ' ', '0'};
  CHECK_THROWS_AS(decode_ppm(p3), FormatError);

  const auto dir = testing::scratch_dir("ppm");
  save_image(dir / "a.ppm", img);
  CHECK(load_image(dir / "a.ppm") == img);
  CHECK_THROWS_AS(load_image(dir / "missing.ppm"), IoError);
}

TEST_CASE("projection matches a matrix oracle") {
  dvcr::Rng rng(12);
  auto p = Projection::zeros(7, 5, 4);
  for (auto* m : {&p.w1, &p.b1, &p.w2, &p.b2}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = rng.uniform(-1, 1);
  }
  std::vector<double> f(7);
  for (auto& v : f) v = rng.uniform(0, 1);
  const auto got = project(f, p);
  for (std::size_t j = 0; j < 4; ++j) {
    double out = p.b2(0, Eigen::Index(j));
    for (std::size_t h = 0; h < 5; ++h) {
      double pre = p.b1(0, Eigen::Index(h));
      for (std::size_t i = 0; i < 7; ++i) pre += f[i] * p.w1(Eigen::Index(i), Eigen::Index(h));
      out += std::max(pre, 0.0) * p.w2(Eigen::Index(h), Eigen::Index(j));
    }
    CHECK(got(Eigen::Index(j)) == doctest::Approx(out).epsilon(1e-12));
  }
}
