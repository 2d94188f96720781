#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "dvcr/dataset.hpp"
#include "dvcr/predictor.hpp"
#include "dvcr/text_model.hpp"

namespace dvcr {

inline constexpr std::string_view kNoneOptionText = "None";

struct ChooserWeights {
  TextModel text;
  Matrix head_w;  // d x 1
  Matrix head_b;  // 1 x 1

  static ChooserWeights zeros(const TextModelShape& shape);
  static ChooserWeights random(const TextModelShape& shape, std::uint64_t seed);
  std::vector<TensorRef> tensors();

  void save(const std::filesystem::path& path) const;
  static ChooserWeights load(const std::filesystem::path& path);
};

// One multiple-choice question: option encodings, the None option last.
struct ChoiceExample {
  std::vector<TextInput> options;
  std::size_t target = 0;
};

ChoiceExample make_choice_example(std::string_view instruction, std::span<const std::string> history,
                                  std::span<const std::string> option_texts, std::optional<std::size_t> target,
                                  const Vocab& vocab, std::size_t max_seq);

std::vector<double> option_logits(const ChooserWeights& w, const ChoiceExample& ex);

// Mean cross-entropy of the softmax over each example's options.
double chooser_loss(const ChooserWeights& w, std::span<const ChoiceExample> batch);
double chooser_loss_and_grad(const ChooserWeights& w, std::span<const ChoiceExample> batch, ChooserWeights& grad);

class TrainedChooser : public ElementChooser {
 public:
  TrainedChooser(const ChooserWeights& w, const Vocab& vocab) : w_(w), vocab_(vocab) {}

  // Softmax over the snippet's options then None.
  std::vector<double> option_probabilities(std::string_view instruction, std::span<const std::string> history,
                                           const Snippet& snippet) const;
  std::optional<std::size_t> choose(std::string_view instruction, std::span<const std::string> history,
                                    const Snippet& snippet) override;

 private:
  const ChooserWeights& w_;
  const Vocab& vocab_;
};

// Picks the option sharing the most word tokens with the instruction;
// None when nothing overlaps.
class LexicalChooser : public ElementChooser {
 public:
  std::optional<std::size_t> choose(std::string_view instruction, std::span<const std::string> history,
                                    const Snippet& snippet) override;
};

// Picks the option whose element id equals the target, else None.
class TargetChooser : public ElementChooser {
 public:
  explicit TargetChooser(std::optional<std::string> target) : target_(std::move(target)) {}
  std::optional<std::size_t> choose(std::string_view instruction, std::span<const std::string> history,
                                    const Snippet& snippet) override;

 private:
  std::optional<std::string> target_;
};

// Scripted answers: one "task_id step_id element_id" line per step.
using ChooserScript = std::map<std::pair<std::string, std::size_t>, std::string>;

ChooserScript parse_chooser_script(std::string_view text);
ChooserScript load_chooser_script(const std::filesystem::path& path);

struct ChooserTrainConfig {
  double lr = 5e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  std::size_t group_size = 5;
  // Questions containing the target per step and epoch, each with freshly sampled negatives.
  std::size_t positives_per_step = 1;
  std::uint64_t seed = 1;
  TextModelShape shape;
};

struct ChooserTrainResult {
  ChooserWeights weights;
  std::vector<double> epoch_loss;
};

// Per training step: one question with the GT among up to group_size - 1
// sampled distractors, and one question of distractors only whose answer
// is None.
ChooserTrainResult train_chooser(const Dataset& data, const Vocab& vocab, const ChooserTrainConfig& cfg,
                                 const PredictorSettings& settings, const EpochCallback& on_epoch = {});

}  // namespace dvcr
