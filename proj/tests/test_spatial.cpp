#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "dvcr/error.hpp"
#include "dvcr/spatial.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dvcr;
using namespace dvcr::testing;

namespace {

// Hop counts by repeated relaxation over parent edges until a fixed point.
std::vector<std::size_t> relaxed_hops(const HtmlDocument& doc, std::size_t from) {
  const std::size_t n = doc.elements.size();
  const std::size_t inf = n + 1;
  std::vector<std::size_t> d(n, inf);
  d[from] = 0;
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!doc.elements[i].parent) continue;
      const std::size_t p = *doc.find(*doc.elements[i].parent);
      if (d[p] + 1 < d[i]) d[i] = d[p] + 1, changed = true;
      if (d[i] + 1 < d[p]) d[p] = d[i] + 1, changed = true;
    }
  }
  return d;
}

HtmlDocument two_boxes() {
  HtmlDocument doc;
  doc.elements.push_back({"a", "button", "A", {}, {0, 0, 10, 10}, true, true, std::nullopt});
  doc.elements.push_back({"b", "span", "B", {}, {30, 40, 10, 10}, true, false, std::string("a")});
  return doc;
}

}  // namespace

TEST_CASE("center distance is euclidean between box centers and symmetric") {
  const auto doc = two_boxes();
  CHECK(center_distance(doc.elements[0].bbox, doc.elements[1].bbox) == 50.0);
  dvcr::Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const BBox a{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(0, 50), rng.uniform(0, 50)};
    const BBox b{rng.uniform(-100, 100), rng.uniform(-100, 100), rng.uniform(0, 50), rng.uniform(0, 50)};
    CHECK(center_distance(a, b) == center_distance(b, a));
  }
}

TEST_CASE("visual neighbors match a full sort on random documents") {
  dvcr::Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const bool coarse = trial % 2 == 0;
    const auto doc = testing::random_document(rng, 2 + rng.below(120), coarse);
    for (std::size_t i = 0; i < doc.elements.size(); ++i) {
      if (!doc.elements[i].visible) continue;
      const std::size_t m = rng.below(8);
      const auto got = visual_neighbors(doc, doc.elements[i].id, m);
      REQUIRE(ids_of(got) == sorted_oracle(doc, i, m));
      for (std::size_t k = 1; k < got.size(); ++k) CHECK(got.neighbors[k - 1].distance <= got.neighbors[k].distance);
    }
  }
}

TEST_CASE("visual neighbors break exact ties by document order") {
  HtmlDocument doc;
  doc.elements.push_back({"c", "button", "", {}, {10, 10, 0, 0}, true, true, std::nullopt});
  doc.elements.push_back({"right", "span", "", {}, {20, 10, 0, 0}, true, false, std::nullopt});
  doc.elements.push_back({"left", "span", "", {}, {0, 10, 0, 0}, true, false, std::nullopt});
  doc.elements.push_back({"hidden", "span", "", {}, {10, 11, 0, 0}, false, false, std::nullopt});
  doc.elements.push_back({"up", "span", "", {}, {10, 0, 0, 0}, true, false, std::nullopt});
  const auto got = visual_neighbors(doc, "c", 5);
  CHECK(ids_of(got) == std::vector<std::string>{"right", "left", "up"});
}

TEST_CASE("visual neighbors edge cases") {
  const auto doc = two_boxes();
  CHECK(visual_neighbors(doc, "a", 0).neighbors.empty());
  CHECK(visual_neighbors(doc, "a", 10).size() == 1);
  CHECK_THROWS_AS(visual_neighbors(doc, "zzz", 1), InvariantError);
  auto hidden = doc;
  hidden.elements[0].visible = false;
  CHECK_THROWS_AS(visual_neighbors(hidden, "a", 1), InvariantError);
}

TEST_CASE("tree neighbors follow hop counts from relaxation") {
  dvcr::Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto doc = testing::random_document(rng, 2 + rng.below(60));
    const std::size_t cand = rng.below(doc.elements.size());
    const std::size_t m = rng.below(10);
    const auto hops = relaxed_hops(doc, cand);
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < doc.elements.size(); ++i) {
      if (i != cand) order.push_back(i);
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::pair(hops[a], a) < std::pair(hops[b], b);
    });
    order.resize(std::min(order.size(), m));
    const auto got = tree_neighbors(doc, doc.elements[cand].id, m);
    REQUIRE(got.size() == order.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      CHECK(got.neighbors[k].element_id == doc.elements[order[k]].id);
      CHECK(got.neighbors[k].distance == static_cast<double>(hops[order[k]]));
    }
  }
}

TEST_CASE("tree neighbors need parent links") {
  auto doc = two_boxes();
  doc.elements[1].parent.reset();
  CHECK_FALSE(doc.has_parent_links());
  CHECK_THROWS_AS(tree_neighbors(doc, "a", 2), InvariantError);
}

TEST_CASE("random neighbors are distinct, visible and reproducible") {
  dvcr::Rng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    const auto doc = testing::random_document(rng, 3 + rng.below(50));
    for (std::size_t i = 0; i < doc.elements.size(); ++i) {
      if (!doc.elements[i].visible) continue;
      const std::size_t m = rng.below(7);
      const auto a = random_neighbors(doc, doc.elements[i].id, m, 42);
      CHECK(a == random_neighbors(doc, doc.elements[i].id, m, 42));
      std::set<std::string> seen;
      for (const auto& n : a.neighbors) {
        CHECK(n.element_id != doc.elements[i].id);
        CHECK(doc.at(n.element_id).visible);
        CHECK(seen.insert(n.element_id).second);
      }
      std::size_t pool = 0;
      for (const auto& e : doc.elements) pool += (e.visible && e.id != doc.elements[i].id) ? 1 : 0;
      CHECK(a.size() == std::min(m, pool));
    }
  }
}

TEST_CASE("neighbor source names round trip") {
  for (auto s : {NeighborSource::kVisual, NeighborSource::kTree, NeighborSource::kRandom}) {
    CHECK(parse_neighbor_source(to_string(s)) == s);
  }
  CHECK_FALSE(parse_neighbor_source("nearest").has_value());
}
