#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvcr/document.hpp"
#include "dvcr/visual.hpp"

namespace dvcr {

// A word pool: label texts placed next to the theme's widget, and
// instruction templates ("{value}" is replaced by one of the values).
struct Theme {
  std::string name;
  std::string domain;
  std::string tag;
  OpType op = OpType::kClick;
  Rgb color;
  std::vector<std::string> labels;
  std::vector<std::string> values;
  std::vector<std::string> templates;

  bool operator==(const Theme&) const = default;
};

std::vector<Theme> parse_themes(std::string_view json_text);
std::vector<Theme> load_themes(const std::filesystem::path& path);
// The pools shipped in data/themes.json.
std::vector<Theme> default_themes();

enum class SplitMode { kTask, kDomain };

std::string_view to_string(SplitMode m);
std::optional<SplitMode> parse_split_mode(std::string_view s);

struct SynthConfig {
  std::size_t pages = 200;
  std::size_t page_width = 640;
  std::size_t page_height = 480;
  std::size_t widgets_per_page = 12;
  std::size_t distractor_groups = 5;
  std::size_t m_planted = 3;
  std::uint64_t seed = 1;
  SplitMode split = SplitMode::kTask;
  std::vector<Theme> themes;

  // Throws ConfigError naming the field. validate_layout skips the themes.
  void validate() const;
  void validate_layout() const;
};

struct GeneratedPage {
  Task task;
  Image image;
  std::string theme;
  std::uint64_t seed = 0;
};

// Lays out one page from the given theme pool. Throws InvariantError when
// no layout passes the planted-context check within the retry budget.
GeneratedPage generate_page(const SynthConfig& cfg, std::span<const Theme> pool, std::uint64_t page_seed,
                            const std::string& task_id);

struct PlantedContext {
  bool gt_has_context = false;
  std::size_t distractors = 0;
  std::size_t distractors_without_context = 0;
};

// Counts instruction word overlap among each actionable's nearest m
// visible neighbors.
PlantedContext check_planted_context(const Task& task, std::size_t m);

struct SynthPageRecord {
  std::size_t page = 0;
  std::uint64_t seed = 0;
  std::string task_id;
  std::string theme;
  bool test = false;
};

struct SynthCorpus {
  SynthConfig config;
  std::vector<std::string> train_themes;
  std::vector<std::string> test_themes;
  std::vector<SynthPageRecord> records;
  std::vector<GeneratedPage> pages;  // in page order

  std::vector<Task> train_tasks() const;
  std::vector<Task> test_tasks() const;
};

SynthCorpus generate_corpus(const SynthConfig& cfg);

// train.jsonl, test.jsonl, screenshots/*.ppm and manifest.json under dir.
void write_synth_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir);

std::string manifest_json(const SynthCorpus& corpus);
SynthConfig config_from_manifest(std::string_view json_text);

}  // namespace dvcr
