#include "dvcr/dataset.hpp"

#include "dvcr/error.hpp"

namespace dvcr {

std::string_view to_string(VisualMode m) { return m == VisualMode::kWhole ? "whole" : "element"; }

std::optional<VisualMode> parse_visual_mode(std::string_view s) {
  if (s == "element") return VisualMode::kElement;
  if (s == "whole") return VisualMode::kWhole;
  return std::nullopt;
}

const FeatureGrid* Dataset::grid(std::size_t task, std::size_t step) const {
  if (task >= grids.size() || step >= grids[task].size() || !grids[task][step]) return nullptr;
  return &*grids[task][step];
}

std::size_t Dataset::step_count() const {
  std::size_t n = 0;
  for (const auto& t : tasks) n += t.steps.size();
  return n;
}

Dataset make_dataset(std::vector<Task> tasks, const std::filesystem::path& corpus_path,
                     const FeatureProvider& provider) {
  Dataset ds;
  ds.tasks = std::move(tasks);
  for (const auto& task : ds.tasks) {
    auto& row = ds.grids.emplace_back();
    for (const auto& step : task.steps) {
      if (auto path = screenshot_path(corpus_path, step.document)) {
        row.emplace_back(provider.featurize(load_image(*path)));
      } else {
        row.emplace_back(std::nullopt);
      }
    }
  }
  return ds;
}

Dataset make_dataset_without_images(std::vector<Task> tasks) {
  Dataset ds;
  ds.tasks = std::move(tasks);
  for (const auto& task : ds.tasks) ds.grids.emplace_back(task.steps.size());
  return ds;
}

Dataset load_dataset(const std::filesystem::path& corpus_path, const FeatureProvider& provider) {
  return make_dataset(parse_corpus(corpus_path), corpus_path, provider);
}

std::vector<double> element_feature(const FeatureGrid* grid, const BBox& box, VisualMode mode, std::size_t d_v) {
  if (!grid) return std::vector<double>(d_v, 0.0);
  if (grid->dim != d_v) throw InvariantError("feature grid dim does not match d_v");
  if (mode == VisualMode::kWhole) return whole_image_feature(*grid);
  const double ext_w = static_cast<double>(grid->cols * grid->patch);
  const double ext_h = static_cast<double>(grid->rows * grid->patch);
  if (box.x > ext_w || box.y > ext_h || box.x + box.w < 0.0 || box.y + box.h < 0.0) {
    return std::vector<double>(d_v, 0.0);
  }
  return roi_align(*grid, box);
}

std::vector<std::size_t> candidate_indices(const HtmlDocument& doc) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    if (doc.elements[i].visible && doc.elements[i].actionable) out.push_back(i);
  }
  return out;
}

}  // namespace dvcr
