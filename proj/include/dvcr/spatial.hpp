#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dvcr/document.hpp"

namespace dvcr {

enum class NeighborSource { kVisual, kTree, kRandom };

std::string_view to_string(NeighborSource s);
std::optional<NeighborSource> parse_neighbor_source(std::string_view s);

struct Neighbor {
  std::string element_id;
  double distance = 0.0;  // pixels (VISUAL), hops (TREE), 0 (RANDOM)

  bool operator==(const Neighbor&) const = default;
};

struct NeighborList {
  std::string candidate_id;
  std::vector<Neighbor> neighbors;
  NeighborSource source = NeighborSource::kVisual;

  std::size_t size() const { return neighbors.size(); }
  bool operator==(const NeighborList&) const = default;
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

Point center(const BBox& b);

// Euclidean distance between centers; symmetric bit-for-bit.
double center_distance(const BBox& a, const BBox& b);

// The M visible elements nearest to the candidate's center, ascending by
// distance with ties going to the earlier element in document order.
// Throws InvariantError if the candidate is unknown or invisible.
NeighborList visual_neighbors(const HtmlDocument& doc, std::string_view candidate_id, std::size_t m);

// The M elements with the smallest undirected hop count in the DOM tree.
// Throws InvariantError if the document has no parent links.
NeighborList tree_neighbors(const HtmlDocument& doc, std::string_view candidate_id, std::size_t m);

// M distinct visible elements other than the candidate, drawn without
// replacement from a PRNG seeded by (seed, candidate position).
NeighborList random_neighbors(const HtmlDocument& doc, std::string_view candidate_id, std::size_t m,
                              std::uint64_t seed);

NeighborList neighbors(const HtmlDocument& doc, std::string_view candidate_id, std::size_t m,
                       NeighborSource source, std::uint64_t seed);

}  // namespace dvcr
