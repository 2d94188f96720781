#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <vector>

#include "dvcr/chooser.hpp"
#include "dvcr/config.hpp"
#include "dvcr/dataset.hpp"
#include "dvcr/evaluation.hpp"
#include "dvcr/op_head.hpp"
#include "dvcr/ranker.hpp"

namespace dvcr {

inline constexpr const char* kVocabFile = "vocab.txt";
inline constexpr const char* kRankerFile = "ranker.dvcr";
inline constexpr const char* kChooserFile = "chooser.dvcr";
inline constexpr const char* kOpHeadFile = "ophead.dvcr";

PatchStatsFeaturizer make_featurizer(const RunConfig& cfg);

// Loads a corpus with its screenshots and checks that the configured
// neighbor source can run on it (ConfigError otherwise).
Dataset load_split(const std::filesystem::path& corpus, const RunConfig& cfg);

void require_neighbor_source(const Dataset& data, NeighborSource source);

struct Models {
  std::optional<Vocab> vocab;
  std::optional<RankerWeights> ranker;
  std::optional<ChooserWeights> chooser;
  std::optional<OpHeadWeights> op_head;
};

struct TrainLog {
  std::vector<double> ranker_loss;
  std::vector<double> chooser_loss;
  std::vector<double> op_loss;
  std::size_t skipped_steps = 0;
};

ChooserTrainConfig chooser_train_config(const RunConfig& cfg, std::size_t vocab_size);
OpTrainConfig op_train_config(const RunConfig& cfg, std::size_t vocab_size);

// Ranker when ranker.kind is "trained" and none is given; chooser and op
// head when the chooser is "trained". Per-epoch losses go to `log` as they
// arrive when it is non-null.
Models train_models(const Dataset& train, const RunConfig& cfg, TrainLog& trace, std::ostream* log,
                    std::optional<RankerWeights> ranker = std::nullopt);

void save_models(const Models& m, const std::filesystem::path& dir);

// Loads what the config needs for evaluation or prediction.
Models load_models(const std::filesystem::path& dir, const RunConfig& cfg);

// Gold element first, then the other candidates in document order.
std::vector<ScoredElement> oracle_ranking(const Step& step);

class Pipeline {
 public:
  Pipeline(const RunConfig& cfg, const Dataset& data, const Models& models);

  ActionPrediction predict(std::size_t task, std::size_t step) const;
  std::vector<ScoredElement> rank(std::size_t task, std::size_t step) const;

 private:
  const RunConfig& cfg_;
  const Dataset& data_;
  const Models& models_;
  std::optional<ChooserScript> script_;
};

EvalReport evaluate(const RunConfig& cfg, const Dataset& data, const Models& models);

}  // namespace dvcr
