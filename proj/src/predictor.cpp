#include "dvcr/predictor.hpp"

#include <algorithm>
#include <iostream>

#include "dvcr/error.hpp"

namespace dvcr {

std::string_view to_string(PredictorMode m) { return m == PredictorMode::kBare ? "bare" : "dualvcr"; }

std::optional<PredictorMode> parse_predictor_mode(std::string_view s) {
  if (s == "dualvcr") return PredictorMode::kDualVcr;
  if (s == "bare") return PredictorMode::kBare;
  return std::nullopt;
}

std::string candidate_block(const HtmlDocument& doc, const Element& e, const NeighborList& nbrs) {
  std::string out = element_html_text(e);
  for (const auto& n : nbrs.neighbors) {
    out += ' ';
    out += kNeighborSeparator;
    out += ' ';
    out += element_html_text(doc.at(n.element_id));
  }
  return out;
}

std::string Snippet::render() const {
  std::string out;
  for (const auto& o : options) {
    out += '(';
    out += o.label;
    out += ") ";
    out += o.text;
    out += '\n';
  }
  if (includes_none) {
    out += '(';
    out += none_label();
    out += ") None\n";
  }
  return out;
}

std::vector<Snippet> partition_groups(std::span<const ChoiceCandidate> candidates, std::size_t group_size) {
  if (group_size == 0 || group_size > 25) throw InvariantError("group_size must be in 1..25");
  std::vector<Snippet> groups;
  for (std::size_t i = 0; i < candidates.size(); i += group_size) {
    Snippet& g = groups.emplace_back();
    const std::size_t end = std::min(candidates.size(), i + group_size);
    for (std::size_t j = i; j < end; ++j) {
      g.options.push_back({static_cast<char>('A' + (j - i)), candidates[j].element_id, candidates[j].text});
    }
  }
  return groups;
}

Election elect_element(std::span<const ChoiceCandidate> candidates, ElementChooser& chooser,
                       std::string_view instruction, std::span<const std::string> history, std::size_t group_size,
                       std::size_t max_rounds) {
  if (max_rounds == 0) throw InvariantError("max_rounds must be at least 1");
  Election result;
  if (candidates.empty()) {
    result.resolution = "no candidates";
    return result;
  }
  if (candidates.size() == 1) {
    result.winner = candidates[0].element_id;
    result.resolution = "single candidate";
    return result;
  }

  // Survivors stay in original rank order, so front() is the best ranked.
  std::vector<ChoiceCandidate> survivors(candidates.begin(), candidates.end());
  for (std::size_t round = 0; round < max_rounds; ++round) {
    ElectionRound& r = result.rounds.emplace_back();
    r.groups = partition_groups(survivors, group_size);
    std::vector<ChoiceCandidate> next;
    std::size_t offset = 0;
    for (const Snippet& g : r.groups) {
      const auto pick = chooser.choose(instruction, history, g);
      if (pick && *pick >= g.options.size()) {
        throw InvariantError("chooser picked option " + std::to_string(*pick) + " of a group with " +
                             std::to_string(g.options.size()) + " elements");
      }
      r.picks.push_back(pick);
      if (pick) next.push_back(survivors[offset + *pick]);
      offset += g.options.size();
    }
    if (next.empty()) {
      if (round == 0) {
        result.resolution = "all groups answered None";
      } else {
        result.winner = survivors.front().element_id;
        result.resolution = "all None after round 1; kept the best-ranked survivor";
      }
      return result;
    }
    if (next.size() == 1) {
      result.winner = next.front().element_id;
      result.resolution = "single survivor";
      return result;
    }
    survivors = std::move(next);
  }
  result.winner = survivors.front().element_id;
  result.resolution = "rounds exhausted; kept the best-ranked survivor";
  return result;
}

Operation predict_operation(std::string_view instruction, std::string_view block,
                            std::span<const std::string> history, const OperationHead& head) {
  Operation op = head.predict({instruction, history, block});
  if (instruction.empty() && op.op != OpType::kClick) {
    std::cerr << "warning: " << to_string(op.op) << " predicted for an empty instruction; using CLICK\n";
    op = {OpType::kClick, std::nullopt};
  }
  return op;
}

std::string option_text(const HtmlDocument& doc, const Element& e, const PredictorSettings& s) {
  if (s.mode == PredictorMode::kBare || s.m == 0) return element_html_text(e);
  return candidate_block(doc, e, neighbors(doc, e.id, s.m, s.source, s.neighbor_seed));
}

ActionPrediction predict_from_ranking(const StepView& view, std::vector<ScoredElement> ranked,
                                      ElementChooser& chooser, const OperationHead& head,
                                      const PredictorSettings& s) {
  ActionPrediction out;
  out.ranked = std::move(ranked);
  const std::size_t k = std::min(s.k, out.ranked.size());
  for (std::size_t i = 0; i < k; ++i) {
    const Element& e = view.doc.at(out.ranked[i].element_id);
    out.candidates.push_back({e.id, option_text(view.doc, e, s)});
  }
  out.election = elect_element(out.candidates, chooser, view.instruction, view.history, s.group_size, s.max_rounds);
  if (!out.election.winner) return out;
  const auto it = std::find_if(out.candidates.begin(), out.candidates.end(),
                               [&](const ChoiceCandidate& c) { return c.element_id == *out.election.winner; });
  out.action = Action{*out.election.winner, predict_operation(view.instruction, it->text, view.history, head)};
  return out;
}

ActionPrediction predict_action(const StepView& view, const RankerWeights& ranker, const Vocab& vocab,
                                ElementChooser& chooser, const OperationHead& head, const PredictorSettings& s) {
  auto ranked = rank_elements(view, ranker, vocab, ranker.shape.m, view.doc.elements.size(), s.source, s.neighbor_seed);
  return predict_from_ranking(view, std::move(ranked), chooser, head, s);
}

}  // namespace dvcr
