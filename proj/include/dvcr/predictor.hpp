#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dvcr/document.hpp"
#include "dvcr/ranker.hpp"
#include "dvcr/spatial.hpp"

namespace dvcr {

inline constexpr std::string_view kNeighborSeparator = "<NBR>";

enum class PredictorMode { kDualVcr, kBare };

std::string_view to_string(PredictorMode m);
std::optional<PredictorMode> parse_predictor_mode(std::string_view s);

// "{html text}" then " <NBR> {html text}" per neighbor, in neighbor order.
std::string candidate_block(const HtmlDocument& doc, const Element& e, const NeighborList& nbrs);

struct ChoiceCandidate {
  std::string element_id;
  std::string text;
};

struct Snippet {
  struct Option {
    char label = 'A';
    std::string element_id;
    std::string text;
  };
  std::vector<Option> options;
  bool includes_none = true;

  char none_label() const { return static_cast<char>('A' + options.size()); }
  // One line per option, "(A) text", then "(X) None"; lines end in '\n'.
  std::string render() const;
};

std::vector<Snippet> partition_groups(std::span<const ChoiceCandidate> candidates, std::size_t group_size = 5);

class ElementChooser {
 public:
  virtual ~ElementChooser() = default;
  // Index into snippet.options, or nullopt for the None option.
  virtual std::optional<std::size_t> choose(std::string_view instruction, std::span<const std::string> history,
                                            const Snippet& snippet) = 0;
};

struct ElectionRound {
  std::vector<Snippet> groups;
  std::vector<std::optional<std::size_t>> picks;
};

struct Election {
  std::optional<std::string> winner;
  std::vector<ElectionRound> rounds;
  std::string resolution;
};

Election elect_element(std::span<const ChoiceCandidate> candidates, ElementChooser& chooser,
                       std::string_view instruction, std::span<const std::string> history,
                       std::size_t group_size = 5, std::size_t max_rounds = 10);

struct OpRequest {
  std::string_view instruction;
  std::span<const std::string> history;
  std::string_view block;  // candidate_block of the elected element
};

class OperationHead {
 public:
  virtual ~OperationHead() = default;
  virtual Operation predict(const OpRequest& req) const = 0;
};

// Test double and oracle: always answers the same operation.
class FixedOpHead : public OperationHead {
 public:
  explicit FixedOpHead(Operation op) : op_(std::move(op)) {}
  Operation predict(const OpRequest&) const override { return op_; }

 private:
  Operation op_;
};

// Asks the head; a TYPE/SELECT answer for an empty instruction has no
// argument to extract and degrades to CLICK with a warning on stderr.
Operation predict_operation(std::string_view instruction, std::string_view block,
                            std::span<const std::string> history, const OperationHead& head);

struct PredictorSettings {
  std::size_t m = 5;
  std::size_t k = 50;
  NeighborSource source = NeighborSource::kVisual;
  std::uint64_t neighbor_seed = 1;
  PredictorMode mode = PredictorMode::kDualVcr;
  std::size_t group_size = 5;
  std::size_t max_rounds = 10;
};

struct ActionPrediction {
  std::vector<ScoredElement> ranked;  // full ranking
  std::vector<ChoiceCandidate> candidates;
  Election election;
  std::optional<Action> action;
};

// Option text for one element: its candidate block, or bare html text.
std::string option_text(const HtmlDocument& doc, const Element& e, const PredictorSettings& s);

// Election and operation over an existing ranking; the top k go to the election.
ActionPrediction predict_from_ranking(const StepView& view, std::vector<ScoredElement> ranked,
                                      ElementChooser& chooser, const OperationHead& head,
                                      const PredictorSettings& s);

ActionPrediction predict_action(const StepView& view, const RankerWeights& ranker, const Vocab& vocab,
                                ElementChooser& chooser, const OperationHead& head, const PredictorSettings& s);

}  // namespace dvcr
