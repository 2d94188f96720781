#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dvcr/dataset.hpp"
#include "dvcr/encoder.hpp"
#include "dvcr/spatial.hpp"
#include "dvcr/tokenizer.hpp"
#include "dvcr/visual.hpp"

namespace dvcr {

struct TrainConfig {
  double lr = 3e-5;
  std::size_t batch_size = 32;
  std::size_t epochs = 5;
  std::size_t negatives_per_positive = 5;
  std::uint64_t seed = 1;
  std::size_t m = 5;  // neighbors per element
  std::size_t d_model = 64;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn = 128;
  std::size_t max_seq = 256;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct VisualConfig {
  std::size_t patch = 16;
  std::size_t d_v = 8;
  std::size_t d_h = 32;
  VisualMode mode = VisualMode::kElement;
};

struct RankerShape {
  std::size_t vocab = Vocab::kReserved;
  std::size_t d_model = 64;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn = 128;
  std::size_t max_seq = 256;
  std::size_t m = 5;
  std::size_t d_v = 8;
  std::size_t d_h = 32;
  VisualMode visual_mode = VisualMode::kElement;

  static RankerShape from(const TrainConfig& cfg, const VisualConfig& vis, std::size_t vocab_size);
  EncoderShape encoder() const { return {d_model, layers, heads, ffn}; }
  bool operator==(const RankerShape&) const = default;
};

struct RankerWeights {
  RankerShape shape;
  Matrix tok_emb;   // vocab x d
  Matrix pos_emb;   // max_seq x d
  Matrix rank_emb;  // (m + 2) x d: ranks 0..m, then the NONE rank
  Projection proj;
  EncoderParams encoder;
  Matrix head_w;  // d x 1
  Matrix head_b;  // 1 x 1

  static RankerWeights zeros(const RankerShape& shape);
  static RankerWeights random(const RankerShape& shape, std::uint64_t seed);

  std::size_t none_rank() const { return shape.m + 1; }
  std::vector<TensorRef> tensors();

  void save(const std::filesystem::path& path) const;
  static RankerWeights load(const std::filesystem::path& path);
};

struct VisualToken {
  std::vector<double> feature;   // frozen pooled feature, d_v
  Eigen::RowVectorXd projected;  // projection at assembly time
  std::size_t rank = 0;
};

struct RankedToken {
  TokenId id = Vocab::kPad;
  std::size_t rank = 0;

  bool operator==(const RankedToken&) const = default;
};

// One input position of the flattened layout.
struct SeqItem {
  enum class Kind { kToken, kVisual };
  Kind kind = Kind::kToken;
  TokenId token = Vocab::kPad;  // kToken
  std::size_t visual = 0;       // kVisual: index into visual_prefix
  std::size_t rank = 0;

  bool operator==(const SeqItem&) const = default;
};

// Layout:
//   [CLS] visual(cand, n1..nk) [SEP] query [SEP] history [SEP] cand-text ([SEP] nbr-text)*
// An element's visual token and text tokens share its rank; CLS, SEP,
// query and history carry the NONE rank.
struct DualViewInput {
  TokenId cls = Vocab::kCls;
  std::vector<VisualToken> visual_prefix;
  std::vector<RankedToken> text_tokens;  // candidate then neighbors, no separators
  std::vector<TokenId> query_tokens;
  std::vector<TokenId> history_tokens;
  std::vector<SeqItem> sequence;

  std::size_t size() const { return sequence.size(); }
};

// Everything the ranker reads about a step besides the candidate.
struct StepView {
  const HtmlDocument& doc;
  std::string_view instruction;
  std::span<const std::string> history;
  const FeatureGrid* grid = nullptr;
};

DualViewInput assemble(const StepView& view, const Element& candidate, const NeighborList& nbrs,
                       const RankerWeights& w, const Vocab& vocab);

// Summed input embeddings (token or projected visual + rank + position).
Matrix embed(const DualViewInput& in, const RankerWeights& w);

double score_logit(const DualViewInput& in, const RankerWeights& w);
double score(const DualViewInput& in, const RankerWeights& w);

struct RankerExample {
  DualViewInput input;
  double label = 0.0;
};

// Mean binary cross-entropy over the batch.
double ranker_loss(const RankerWeights& w, std::span<const RankerExample> batch);

// Same loss; adds d(loss)/d(param) into `grad`, which must share w's shape.
double ranker_loss_and_grad(const RankerWeights& w, std::span<const RankerExample> batch, RankerWeights& grad);

struct RankerTrainResult {
  RankerWeights weights;
  std::vector<double> epoch_loss;
  std::size_t skipped_steps = 0;
};

using EpochCallback = std::function<void(std::size_t epoch, double loss)>;

RankerTrainResult train_ranker(const Dataset& data, const Vocab& vocab, const TrainConfig& cfg,
                               const VisualConfig& vis, NeighborSource source, const EpochCallback& on_epoch = {});

struct ScoredElement {
  std::string element_id;
  double score = 0.0;
  double logit = 0.0;  // sort key; the sigmoid saturates before the logit does
};

// Scores every visible actionable element; sorted by descending score with
// document order breaking ties; at most k entries.
std::vector<ScoredElement> rank_elements(const StepView& view, const RankerWeights& w, const Vocab& vocab,
                                         std::size_t m, std::size_t k, NeighborSource source,
                                         std::uint64_t neighbor_seed);

}  // namespace dvcr
