#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvcr/document.hpp"
#include "dvcr/visual.hpp"

namespace dvcr {

// How an element's visual token is pooled.
enum class VisualMode {
  kElement,  // ROI Align over the element box
  kWhole,    // the whole-image feature for every element
};

std::string_view to_string(VisualMode m);
std::optional<VisualMode> parse_visual_mode(std::string_view s);

// Tasks plus the frozen feature grid of every step screenshot.
struct Dataset {
  std::vector<Task> tasks;
  // grids[t][s] is empty when the step has no screenshot
  std::vector<std::vector<std::optional<FeatureGrid>>> grids;

  const FeatureGrid* grid(std::size_t task, std::size_t step) const;
  std::size_t step_count() const;
};

Dataset make_dataset(std::vector<Task> tasks, const std::filesystem::path& corpus_path,
                     const FeatureProvider& provider);
Dataset make_dataset_without_images(std::vector<Task> tasks);
Dataset load_dataset(const std::filesystem::path& corpus_path, const FeatureProvider& provider);

// The visual feature of one element; zeros when there is no screenshot or
// the box misses the grid entirely.
std::vector<double> element_feature(const FeatureGrid* grid, const BBox& box, VisualMode mode, std::size_t d_v);

// Visible actionable elements in document order.
std::vector<std::size_t> candidate_indices(const HtmlDocument& doc);

}  // namespace dvcr
