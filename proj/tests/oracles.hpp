#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dvcr/chooser.hpp"
#include "dvcr/predictor.hpp"
#include "dvcr/rng.hpp"
#include "dvcr/spatial.hpp"
#include "dvcr/visual.hpp"

namespace dvcr::testing {

// Full sort of every other visible element by (distance, document index).
inline std::vector<std::string> sorted_oracle(const HtmlDocument& doc, std::size_t cand, std::size_t m) {
  const auto& c = doc.elements[cand].bbox;
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    if (i == cand || !doc.elements[i].visible) continue;
    const auto& b = doc.elements[i].bbox;
    const double dx = (c.x + c.w / 2.0) - (b.x + b.w / 2.0);
    const double dy = (c.y + c.h / 2.0) - (b.y + b.h / 2.0);
    all.push_back({std::sqrt(dx * dx + dy * dy), i});
  }
  std::sort(all.begin(), all.end());
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < std::min(m, all.size()); ++i) ids.push_back(doc.elements[all[i].second].id);
  return ids;
}

inline std::vector<std::string> ids_of(const NeighborList& l) {
  std::vector<std::string> out;
  for (const auto& n : l.neighbors) out.push_back(n.element_id);
  return out;
}

inline FeatureGrid random_grid(Rng& rng, std::size_t rows, std::size_t cols, std::size_t dim, std::size_t patch) {
  FeatureGrid g(rows, cols, dim, patch);
  for (auto& v : g.data) v = rng.uniform(-2.0, 2.0);
  return g;
}

// Box overlapping the w x h extent; it may spill past any edge by up to `spill` of the extent.
inline BBox random_overlapping_box(Rng& rng, double w, double h, double spill) {
  const double x = rng.uniform(-spill * w, w);
  const double y = rng.uniform(-spill * h, h);
  return {x, y, std::max(0.0, -x) + rng.uniform(0, (1 + spill) * w), std::max(0.0, -y) + rng.uniform(0, (1 + spill) * h)};
}

// Explicit four-neighbor bilinear interpolation with border clamping.
inline double sample_oracle(const FeatureGrid& g, double u, double v, std::size_t d) {
  double x = u - 0.5;
  double y = v - 0.5;
  if (x < 0) x = 0;
  if (y < 0) y = 0;
  if (x > double(g.cols - 1)) x = double(g.cols - 1);
  if (y > double(g.rows - 1)) y = double(g.rows - 1);
  const std::size_t c0 = std::size_t(std::floor(x));
  const std::size_t r0 = std::size_t(std::floor(y));
  const std::size_t c1 = c0 + 1 < g.cols ? c0 + 1 : c0;
  const std::size_t r1 = r0 + 1 < g.rows ? r0 + 1 : r0;
  const double ax = x - double(c0);
  const double ay = y - double(r0);
  return g(r0, c0, d) * (1 - ax) * (1 - ay) + g(r0, c1, d) * ax * (1 - ay) + g(r1, c0, d) * (1 - ax) * ay +
         g(r1, c1, d) * ax * ay;
}

inline std::vector<double> roi_oracle(const FeatureGrid& g, const BBox& box, RoiShape shape) {
  std::vector<double> out;
  const double p = double(g.patch);
  for (std::size_t by = 0; by < shape.out_h; ++by) {
    for (std::size_t bx = 0; bx < shape.out_w; ++bx) {
      for (std::size_t d = 0; d < g.dim; ++d) {
        double acc = 0.0;
        for (std::size_t sy = 0; sy < shape.sampling; ++sy) {
          for (std::size_t sx = 0; sx < shape.sampling; ++sx) {
            const double px = box.x + box.w * (double(bx) + (double(sx) + 0.5) / double(shape.sampling)) /
                                          double(shape.out_w);
            const double py = box.y + box.h * (double(by) + (double(sy) + 0.5) / double(shape.sampling)) /
                                          double(shape.out_h);
            acc += sample_oracle(g, px / p, py / p, d);
          }
        }
        out.push_back(acc / double(shape.sampling * shape.sampling));
      }
    }
  }
  return out;
}

// Picks the option with the highest preference value, or None when no option
// reaches `threshold`.
class PreferenceChooser : public ElementChooser {
 public:
  explicit PreferenceChooser(std::map<std::string, double> pref, double threshold = -1e300)
      : pref_(std::move(pref)), threshold_(threshold) {}
  std::optional<std::size_t> choose(std::string_view, std::span<const std::string>, const Snippet& s) override {
    ++calls;
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < s.options.size(); ++i) {
      const double p = pref_.at(s.options[i].element_id);
      if (p >= threshold_ && (!best || p > pref_.at(s.options[*best].element_id))) best = i;
    }
    return best;
  }
  std::size_t calls = 0;

 private:
  std::map<std::string, double> pref_;
  double threshold_;
};

inline std::vector<ChoiceCandidate> make_candidates(std::size_t n) {
  std::vector<ChoiceCandidate> c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({"c" + std::to_string(i), "option " + std::to_string(i)});
  return c;
}

inline std::size_t ceil_log5(std::size_t n) {
  std::size_t r = 0;
  for (std::size_t p = 1; p < n; p *= 5) ++r;
  return r;
}

}  // namespace dvcr::testing
