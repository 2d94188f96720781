#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dvcr/dataset.hpp"
#include "dvcr/document.hpp"
#include "dvcr/predictor.hpp"

namespace dvcr {

struct StepOutcome {
  std::string task_id;
  std::size_t step_id = 0;
  std::vector<std::string> ranked_ids;
  std::optional<Action> predicted;  // nullopt = NONE
  Action gt;
};

inline constexpr std::size_t kReportRecallKs[] = {1, 5, 10, 50};

struct EvalReport {
  std::size_t steps = 0;
  std::size_t tasks = 0;
  std::vector<std::pair<std::size_t, double>> recall_at;  // ascending K
  double element_accuracy = 0.0;
  double operation_f1 = 0.0;
  double step_success_rate = 0.0;

  bool operator==(const EvalReport&) const = default;
};

// All metrics throw InvariantError on an empty outcome set.
double recall_at_k(std::span<const StepOutcome> outcomes, std::size_t k);
double element_accuracy(std::span<const StepOutcome> outcomes);
double operation_f1(std::span<const StepOutcome> outcomes);
double step_success_rate(std::span<const StepOutcome> outcomes);

// Op-type literal followed by the lowercased argument tokens.
std::vector<std::string> operation_tokens(const Operation& op);

// Token-multiset F1 between two operations.
double operation_token_f1(const Operation& predicted, const Operation& gt);

// Per-step F1; NONE scores 0.
double step_operation_f1(const StepOutcome& o);

EvalReport make_report(std::span<const StepOutcome> outcomes);

std::string report_to_json(const EvalReport& r);
EvalReport report_from_json(std::string_view text);

// Aligned text table: Recall@K row, then Ele. Acc / Op. F1 / Step SR.
std::string format_report(const EvalReport& r);

// Two reports side by side with the delta (b - a) per metric.
std::string format_comparison(const EvalReport& a, std::string_view a_name, const EvalReport& b,
                              std::string_view b_name);

using StepPredictor = std::function<ActionPrediction(std::size_t task, std::size_t step)>;

// Every step of the dataset, each with its ground-truth history.
std::vector<StepOutcome> run_steps(const Dataset& data, const StepPredictor& predict);

EvalReport evaluate(const Dataset& data, const StepPredictor& predict);

}  // namespace dvcr
