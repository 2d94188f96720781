#include "dvcr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include <json.hpp>

#include "dvcr/error.hpp"
#include "dvcr/tokenizer.hpp"

namespace dvcr {

namespace {

void require_outcomes(std::span<const StepOutcome> outcomes) {
  if (outcomes.empty()) throw InvariantError("metric over an empty outcome set is undefined");
}

double fraction(std::size_t hits, std::size_t total) {
  return static_cast<double>(hits) / static_cast<double>(total);
}

bool element_correct(const StepOutcome& o) { return o.predicted && o.predicted->element_id == o.gt.element_id; }

// Neumaier-compensated sum.
double compensated_sum(std::span<const double> xs) {
  double sum = 0.0, c = 0.0;
  for (double x : xs) {
    const double t = sum + x;
    c += std::abs(sum) >= std::abs(x) ? (sum - t) + x : (x - t) + sum;
    sum = t;
  }
  return sum + c;
}

}  // namespace

double recall_at_k(std::span<const StepOutcome> outcomes, std::size_t k) {
  require_outcomes(outcomes);
  if (k == 0) throw InvariantError("recall_at_k: K must be at least 1");
  std::size_t hits = 0;
  for (const auto& o : outcomes) {
    const std::size_t n = std::min(k, o.ranked_ids.size());
    if (std::find(o.ranked_ids.begin(), o.ranked_ids.begin() + static_cast<std::ptrdiff_t>(n), o.gt.element_id) !=
        o.ranked_ids.begin() + static_cast<std::ptrdiff_t>(n)) {
      ++hits;
    }
  }
  return fraction(hits, outcomes.size());
}

double element_accuracy(std::span<const StepOutcome> outcomes) {
  require_outcomes(outcomes);
  return fraction(static_cast<std::size_t>(std::count_if(outcomes.begin(), outcomes.end(), element_correct)),
                  outcomes.size());
}

std::vector<std::string> operation_tokens(const Operation& op) {
  std::vector<std::string> out{std::string(to_string(op.op))};
  if (op.arg) {
    auto args = split_tokens(*op.arg);
    out.insert(out.end(), args.begin(), args.end());
  }
  return out;
}

double operation_token_f1(const Operation& predicted, const Operation& gt) {
  const auto p = operation_tokens(predicted);
  const auto g = operation_tokens(gt);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::map<std::string, std::size_t> counts;
  for (const auto& t : g) ++counts[t];
  std::size_t overlap = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = fraction(overlap, p.size());
  const double recall = fraction(overlap, g.size());
  return 2.0 * precision * recall / (precision + recall);
}

double step_operation_f1(const StepOutcome& o) {
  return o.predicted ? operation_token_f1(o.predicted->operation, o.gt.operation) : 0.0;
}

double operation_f1(std::span<const StepOutcome> outcomes) {
  require_outcomes(outcomes);
  std::vector<double> f1;
  for (const auto& o : outcomes) f1.push_back(step_operation_f1(o));
  return compensated_sum(f1) / static_cast<double>(outcomes.size());
}

double step_success_rate(std::span<const StepOutcome> outcomes) {
  require_outcomes(outcomes);
  std::size_t hits = 0;
  for (const auto& o : outcomes) {
    if (element_correct(o) && step_operation_f1(o) == 1.0) ++hits;
  }
  return fraction(hits, outcomes.size());
}

EvalReport make_report(std::span<const StepOutcome> outcomes) {
  EvalReport r;
  r.steps = outcomes.size();
  std::set<std::string> tasks;
  for (const auto& o : outcomes) tasks.insert(o.task_id);
  r.tasks = tasks.size();
  for (std::size_t k : kReportRecallKs) r.recall_at.emplace_back(k, recall_at_k(outcomes, k));
  r.element_accuracy = element_accuracy(outcomes);
  r.operation_f1 = operation_f1(outcomes);
  r.step_success_rate = step_success_rate(outcomes);
  return r;
}

std::string report_to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["steps"] = r.steps;
  j["tasks"] = r.tasks;
  nlohmann::ordered_json recall = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.recall_at) recall[std::to_string(k)] = v;
  j["recall_at"] = recall;
  j["element_accuracy"] = r.element_accuracy;
  j["operation_f1"] = r.operation_f1;
  j["step_success_rate"] = r.step_success_rate;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(std::string_view text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  EvalReport r;
  try {
    r.steps = j.at("steps").get<std::size_t>();
    r.tasks = j.at("tasks").get<std::size_t>();
    for (const auto& [k, v] : j.at("recall_at").items()) r.recall_at.emplace_back(std::stoul(k), v.get<double>());
    r.element_accuracy = j.at("element_accuracy").get<double>();
    r.operation_f1 = j.at("operation_f1").get<double>();
    r.step_success_rate = j.at("step_success_rate").get<double>();
  } catch (const std::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
  std::sort(r.recall_at.begin(), r.recall_at.end());
  return r;
}

namespace {

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * v);
  return buf;
}

std::string signed_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%+.1f", 100.0 * v);
  return buf;
}

std::string pad(std::string_view s, std::size_t width) {
  std::string out(s);
  if (out.size() < width) out.insert(0, width - out.size(), ' ');
  return out;
}

std::vector<std::pair<std::string, double>> metric_rows(const EvalReport& r) {
  std::vector<std::pair<std::string, double>> rows;
  for (const auto& [k, v] : r.recall_at) rows.emplace_back("Recall@" + std::to_string(k), v);
  rows.emplace_back("Ele. Acc", r.element_accuracy);
  rows.emplace_back("Op. F1", r.operation_f1);
  rows.emplace_back("Step SR", r.step_success_rate);
  return rows;
}

}  // namespace

std::string format_report(const EvalReport& r) {
  constexpr std::size_t kWidth = 11;
  std::string out = "steps " + std::to_string(r.steps) + ", tasks " + std::to_string(r.tasks) + "\n";
  std::string head, vals;
  for (const auto& [k, v] : r.recall_at) {
    head += pad("Recall@" + std::to_string(k), kWidth);
    vals += pad(percent(v), kWidth);
  }
  out += head + "\n" + vals + "\n";
  out += pad("Ele. Acc", kWidth) + pad("Op. F1", kWidth) + pad("Step SR", kWidth) + "\n";
  out += pad(percent(r.element_accuracy), kWidth) + pad(percent(r.operation_f1), kWidth) +
         pad(percent(r.step_success_rate), kWidth) + "\n";
  return out;
}

std::string format_comparison(const EvalReport& a, std::string_view a_name, const EvalReport& b,
                              std::string_view b_name) {
  const std::size_t w = std::max<std::size_t>({10, a_name.size() + 2, b_name.size() + 2});
  std::string out = pad("metric", 12) + pad(a_name, w) + pad(b_name, w) + pad("delta", 9) + "\n";
  const auto ra = metric_rows(a);
  const auto rb = metric_rows(b);
  for (const auto& [name, va] : ra) {
    const auto it = std::find_if(rb.begin(), rb.end(), [&](const auto& row) { return row.first == name; });
    if (it == rb.end()) continue;
    out += pad(name, 12) + pad(percent(va), w) + pad(percent(it->second), w) + pad(signed_percent(it->second - va), 9) +
           "\n";
  }
  return out;
}

std::vector<StepOutcome> run_steps(const Dataset& data, const StepPredictor& predict) {
  std::vector<StepOutcome> outcomes;
  for (std::size_t t = 0; t < data.tasks.size(); ++t) {
    const Task& task = data.tasks[t];
    for (std::size_t s = 0; s < task.steps.size(); ++s) {
      ActionPrediction p = predict(t, s);
      StepOutcome o;
      o.task_id = task.task_id;
      o.step_id = task.steps[s].step_id;
      for (const auto& r : p.ranked) o.ranked_ids.push_back(r.element_id);
      o.predicted = std::move(p.action);
      o.gt = task.steps[s].gt_action;
      outcomes.push_back(std::move(o));
    }
  }
  return outcomes;
}

EvalReport evaluate(const Dataset& data, const StepPredictor& predict) {
  const auto outcomes = run_steps(data, predict);
  return make_report(outcomes);
}

}  // namespace dvcr
