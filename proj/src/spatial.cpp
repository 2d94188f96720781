#include "dvcr/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <unordered_map>

#include "dvcr/error.hpp"
#include "dvcr/rng.hpp"

namespace dvcr {

std::string_view to_string(NeighborSource s) {
  switch (s) {
    case NeighborSource::kVisual: return "visual";
    case NeighborSource::kTree: return "tree";
    case NeighborSource::kRandom: return "random";
  }
  return "visual";
}

std::optional<NeighborSource> parse_neighbor_source(std::string_view s) {
  if (s == "visual") return NeighborSource::kVisual;
  if (s == "tree") return NeighborSource::kTree;
  if (s == "random") return NeighborSource::kRandom;
  return std::nullopt;
}

Point center(const BBox& b) { return {b.x + b.w / 2.0, b.y + b.h / 2.0}; }

double center_distance(const BBox& a, const BBox& b) {
  const Point pa = center(a);
  const Point pb = center(b);
  // |dx| and |dy| are order-independent, so d(a,b) == d(b,a) exactly.
  const double dx = std::fabs(pa.x - pb.x);
  const double dy = std::fabs(pa.y - pb.y);
  return std::sqrt(dx * dx + dy * dy);
}

namespace {

std::size_t visible_candidate(const HtmlDocument& doc, std::string_view candidate_id) {
  auto idx = doc.find(candidate_id);
  if (!idx) throw InvariantError("unknown candidate id '" + std::string(candidate_id) + "'");
  if (!doc.elements[*idx].visible) {
    throw InvariantError("candidate '" + std::string(candidate_id) + "' is not visible");
  }
  return *idx;
}

}  // namespace

NeighborList visual_neighbors(const HtmlDocument& doc, std::string_view candidate_id, std::size_t m) {
  const std::size_t cand = visible_candidate(doc, candidate_id);
  NeighborList out{std::string(candidate_id), {}, NeighborSource::kVisual};
  if (m == 0) return out;

  struct Entry {
    double dist;
    std::size_t index;
  };
  std::vector<Entry> entries;
  entries.reserve(doc.elements.size());
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    if (i == cand || !doc.elements[i].visible) continue;
    entries.push_back({center_distance(doc.elements[cand].bbox, doc.elements[i].bbox), i});
  }
  const std::size_t take = std::min(m, entries.size());
  auto less = [](const Entry& a, const Entry& b) {
    return a.dist < b.dist || (a.dist == b.dist && a.index < b.index);
  };
  std::partial_sort(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(take), entries.end(), less);
  for (std::size_t i = 0; i < take; ++i) {
    out.neighbors.push_back({doc.elements[entries[i].index].id, entries[i].dist});
  }
  return out;
}

NeighborList tree_neighbors(const HtmlDocument& doc, std::string_view candidate_id, std::size_t m) {
  if (!doc.has_parent_links()) {
    throw InvariantError("document lacks parent links; tree neighbors need a DOM tree");
  }
  auto cand = doc.find(candidate_id);
  if (!cand) throw InvariantError("unknown candidate id '" + std::string(candidate_id) + "'");
  NeighborList out{std::string(candidate_id), {}, NeighborSource::kTree};
  if (m == 0) return out;

  const std::size_t n = doc.elements.size();
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < n; ++i) index.emplace(doc.elements[i].id, i);
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (const auto& p = doc.elements[i].parent) {
      const std::size_t j = index.at(*p);
      adj[i].push_back(j);
      adj[j].push_back(i);
    }
  }

  constexpr std::size_t kUnreached = static_cast<std::size_t>(-1);
  std::vector<std::size_t> hops(n, kUnreached);
  std::deque<std::size_t> queue{*cand};
  hops[*cand] = 0;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (std::size_t v : adj[u]) {
      if (hops[v] == kUnreached) {
        hops[v] = hops[u] + 1;
        queue.push_back(v);
      }
    }
  }

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != *cand && hops[i] != kUnreached) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return hops[a] < hops[b]; });
  order.resize(std::min(order.size(), m));
  for (std::size_t i : order) {
    out.neighbors.push_back({doc.elements[i].id, static_cast<double>(hops[i])});
  }
  return out;
}

NeighborList random_neighbors(const HtmlDocument& doc, std::string_view candidate_id, std::size_t m,
                              std::uint64_t seed) {
  const std::size_t cand = visible_candidate(doc, candidate_id);
  NeighborList out{std::string(candidate_id), {}, NeighborSource::kRandom};
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    if (i != cand && doc.elements[i].visible) pool.push_back(i);
  }
  Rng rng(mix_seed(seed, cand));
  // partial Fisher-Yates: the first `take` slots are a uniform draw without replacement
  const std::size_t take = std::min(m, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    out.neighbors.push_back({doc.elements[pool[i]].id, 0.0});
  }
  return out;
}

NeighborList neighbors(const HtmlDocument& doc, std::string_view candidate_id, std::size_t m,
                       NeighborSource source, std::uint64_t seed) {
  switch (source) {
    case NeighborSource::kVisual: return visual_neighbors(doc, candidate_id, m);
    case NeighborSource::kTree: return tree_neighbors(doc, candidate_id, m);
    case NeighborSource::kRandom: return random_neighbors(doc, candidate_id, m, seed);
  }
  return visual_neighbors(doc, candidate_id, m);
}

}  // namespace dvcr
