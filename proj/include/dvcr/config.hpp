#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dvcr/predictor.hpp"
#include "dvcr/ranker.hpp"
#include "dvcr/synth.hpp"

namespace dvcr {

inline constexpr int kConfigVersion = 1;

enum class Preset { kPretrained, kSynth };

std::string_view to_string(Preset p);

struct RunConfig {
  Preset preset = Preset::kSynth;

  // [paths]
  std::string train_path;
  std::string test_path;
  std::string weights_dir = "weights";
  std::string out_dir = "out";
  std::string report_path;
  std::string themes_path;  // empty = shipped themes

  // [ranker]
  TrainConfig ranker;
  VisualConfig visual;
  NeighborSource neighbor_source = NeighborSource::kVisual;
  std::string ranker_kind = "trained";  // trained | oracle
  std::uint64_t neighbor_seed = 1;

  // [predictor]
  std::size_t k = 50;
  PredictorMode mode = PredictorMode::kDualVcr;
  std::string chooser = "trained";  // trained | lexical | scripted:gt | scripted:<path>
  bool op_oracle = false;
  std::size_t group_size = 5;
  std::size_t max_rounds = 10;
  double chooser_lr = 5e-5;
  std::size_t chooser_epochs = 5;
  std::size_t chooser_batch_size = 32;
  std::size_t chooser_positives = 1;

  // [synth]
  SynthConfig synth;

  PredictorSettings predictor_settings() const;
  // Throws ConfigError naming the offending key.
  void validate() const;
};

// Flat "section.key" -> value settings, the common currency of the config
// file and command-line flags.
using Settings = std::map<std::string, std::string>;

// Parses "key = value" lines under "[section]" headers; '#' starts a
// comment line. Top-level keys: version, preset. Unknown keys throw.
Settings parse_config_text(std::string_view text);
Settings load_config_file(const std::filesystem::path& path);

// Defaults, then the preset, then file settings, then flag settings.
RunConfig resolve_config(const Settings& file, const Settings& flags);

// Every known key with its current value, in a stable order.
std::vector<std::pair<std::string, std::string>> describe(const RunConfig& cfg);

bool is_known_key(std::string_view key);

}  // namespace dvcr
