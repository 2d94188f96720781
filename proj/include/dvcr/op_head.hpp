#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dvcr/dataset.hpp"
#include "dvcr/predictor.hpp"
#include "dvcr/text_model.hpp"

namespace dvcr {

// Class order of the op-type logits; ties go to the lower index.
inline constexpr std::array<OpType, 3> kOpClasses{OpType::kClick, OpType::kType, OpType::kSelect};

struct OpHeadWeights {
  TextModel text;
  Matrix op_w;     // d x 3
  Matrix op_b;     // 1 x 3
  Matrix start_w;  // d x 1
  Matrix end_w;    // d x 1

  static OpHeadWeights zeros(const TextModelShape& shape);
  static OpHeadWeights random(const TextModelShape& shape, std::uint64_t seed);
  std::vector<TensorRef> tensors();

  void save(const std::filesystem::path& path) const;
  static OpHeadWeights load(const std::filesystem::path& path);
};

struct OpScores {
  std::array<double, 3> op_logits{};
  std::vector<double> start;  // per kept query token
  std::vector<double> end;
};

OpScores op_scores(const OpHeadWeights& w, const TextInput& in);

// Best span by start[s] + end[e] with s <= e; ties go to the earliest end,
// then the earliest start.
std::pair<std::size_t, std::size_t> best_span(std::span<const double> start, std::span<const double> end);

// Argmax op type; TYPE/SELECT take the best span of query_tokens as the
// argument, and carry no argument when there is no query.
Operation decode_operation(const OpScores& scores, std::span<const std::string> query_tokens);

class LearnedOpHead : public OperationHead {
 public:
  LearnedOpHead(const OpHeadWeights& w, const Vocab& vocab) : w_(w), vocab_(vocab) {}
  Operation predict(const OpRequest& req) const override;

 private:
  const OpHeadWeights& w_;
  const Vocab& vocab_;
};

struct OpExample {
  TextInput input;
  std::size_t op_class = 0;
  std::optional<std::pair<std::size_t, std::size_t>> span;  // query positions
};

// Locates the argument tokens inside the instruction tokens, first match.
std::optional<std::pair<std::size_t, std::size_t>> find_argument_span(std::span<const std::string> query_tokens,
                                                                      std::string_view argument);

OpExample make_op_example(std::string_view instruction, std::span<const std::string> history, std::string_view block,
                          const Operation& gt, const Vocab& vocab, std::size_t max_seq);

// Mean over the batch of CE(op type) + CE(start) + CE(end), the span terms
// only where a span is known.
double op_loss(const OpHeadWeights& w, std::span<const OpExample> batch);
double op_loss_and_grad(const OpHeadWeights& w, std::span<const OpExample> batch, OpHeadWeights& grad);

struct OpTrainConfig {
  double lr = 5e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  std::uint64_t seed = 1;
  TextModelShape shape;
};

struct OpTrainResult {
  OpHeadWeights weights;
  std::vector<double> epoch_loss;
};

OpTrainResult train_op_head(const Dataset& data, const Vocab& vocab, const OpTrainConfig& cfg,
                            const PredictorSettings& settings, const EpochCallback& on_epoch = {});

}  // namespace dvcr
