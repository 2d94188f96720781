#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace dvcr {

// Axis-aligned box in screenshot pixels, (x, y) is the top-left corner.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  bool operator==(const BBox&) const = default;
};

bool is_valid(const BBox& b);

using Attributes = std::vector<std::pair<std::string, std::string>>;

struct Element {
  std::string id;
  std::string tag;
  std::string text;
  Attributes attrs;  // stored order is significant
  BBox bbox;
  bool visible = true;
  bool actionable = false;
  std::optional<std::string> parent;

  bool operator==(const Element&) const = default;
};

struct HtmlDocument {
  std::vector<Element> elements;  // document order
  std::optional<std::string> screenshot;

  // Index of the element with this id, or nullopt.
  std::optional<std::size_t> find(std::string_view id) const;
  const Element& at(std::string_view id) const;
  bool has_parent_links() const;

  bool operator==(const HtmlDocument&) const = default;
};

enum class OpType { kClick, kType, kSelect };

std::string_view to_string(OpType op);
std::optional<OpType> parse_op_type(std::string_view s);

struct Operation {
  OpType op = OpType::kClick;
  std::optional<std::string> arg;

  bool operator==(const Operation&) const = default;
};

// Throws InvariantError when the argument rule for the op type is broken.
void validate(const Operation& op);

struct Action {
  std::string element_id;
  Operation operation;

  bool operator==(const Action&) const = default;
};

struct Step {
  int step_id = 0;
  HtmlDocument document;
  Action gt_action;
  std::vector<Action> history;
  // history rendered against the documents the actions were taken on
  std::vector<std::string> history_text;

  bool operator==(const Step&) const = default;
};

struct Task {
  std::string task_id;
  std::string instruction;
  std::string website;
  std::string domain;
  std::vector<Step> steps;

  bool operator==(const Task&) const = default;
};

// "[tag] text k=v ..." with attributes in stored order; "[tag]" for empty text.
std::string element_html_text(const Element& e);

// "<element_html_text> -> OP[ arg]". Throws InvariantError for unknown ids.
std::string render_action(const Action& a, const HtmlDocument& doc);

// Full structural validation of a task; throws InvariantError naming the
// task, step, element and rule.
void validate(const Task& task);

// Recomputes Step::history and Step::history_text from the gt actions of
// earlier steps.
void link_history(Task& task);

// JSONL codec. parse_corpus throws IoError, FormatError (with line number)
// or InvariantError.
std::vector<Task> parse_corpus(const std::filesystem::path& path);
std::vector<Task> parse_corpus_text(std::string_view text);
Task parse_task_line(std::string_view line, std::size_t line_no = 1);

std::string serialize_task(const Task& task);
std::string serialize_corpus(const std::vector<Task>& tasks);
void write_corpus(const std::filesystem::path& path, const std::vector<Task>& tasks);

// Resolves a document's screenshot relative to the corpus file location.
std::optional<std::filesystem::path> screenshot_path(const std::filesystem::path& corpus_path,
                                                     const HtmlDocument& doc);

}  // namespace dvcr
