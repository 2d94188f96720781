#include "dvcr/document.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "dvcr/error.hpp"

namespace dvcr {

using Json = nlohmann::ordered_json;

bool is_valid(const BBox& b) {
  return std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.w) && std::isfinite(b.h) &&
         b.w >= 0.0 && b.h >= 0.0;
}

std::optional<std::size_t> HtmlDocument::find(std::string_view id) const {
  for (std::size_t i = 0; i < elements.size(); ++i) {
    if (elements[i].id == id) return i;
  }
  return std::nullopt;
}

const Element& HtmlDocument::at(std::string_view id) const {
  auto idx = find(id);
  if (!idx) throw InvariantError("unknown element id '" + std::string(id) + "'");
  return elements[*idx];
}

bool HtmlDocument::has_parent_links() const {
  if (elements.size() == 1) return true;
  for (const auto& e : elements) {
    if (e.parent) return true;
  }
  return false;
}

std::string_view to_string(OpType op) {
  switch (op) {
    case OpType::kClick: return "CLICK";
    case OpType::kType: return "TYPE";
    case OpType::kSelect: return "SELECT";
  }
  return "CLICK";
}

std::optional<OpType> parse_op_type(std::string_view s) {
  if (s == "CLICK") return OpType::kClick;
  if (s == "TYPE") return OpType::kType;
  if (s == "SELECT") return OpType::kSelect;
  return std::nullopt;
}

void validate(const Operation& op) {
  if (op.op == OpType::kClick) {
    if (op.arg) throw InvariantError("CLICK operation must not carry an argument");
  } else if (!op.arg || op.arg->empty()) {
    throw InvariantError(std::string(to_string(op.op)) + " operation requires a non-empty argument");
  }
}

std::string element_html_text(const Element& e) {
  std::string out = "[" + e.tag + "]";
  if (!e.text.empty()) out += " " + e.text;
  for (const auto& [k, v] : e.attrs) out += " " + k + "=" + v;
  return out;
}

std::string render_action(const Action& a, const HtmlDocument& doc) {
  std::string out = element_html_text(doc.at(a.element_id));
  out += " -> ";
  out += to_string(a.operation.op);
  if (a.operation.arg) out += " " + *a.operation.arg;
  return out;
}

namespace {

[[noreturn]] void fail(const Task& task, std::size_t step, const std::string& what) {
  throw InvariantError("task '" + task.task_id + "' step " + std::to_string(step) + ": " + what);
}

void validate_document(const Task& task, std::size_t step_idx, const HtmlDocument& doc) {
  if (doc.elements.empty()) fail(task, step_idx, "document has no elements");
  std::unordered_map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < doc.elements.size(); ++i) {
    const auto& e = doc.elements[i];
    if (e.id.empty()) fail(task, step_idx, "element at position " + std::to_string(i) + " has an empty id");
    if (!index.emplace(e.id, i).second) fail(task, step_idx, "element '" + e.id + "': duplicate id");
    if (!is_valid(e.bbox)) fail(task, step_idx, "element '" + e.id + "': bbox must be finite with w,h >= 0");
  }
  for (const auto& e : doc.elements) {
    if (e.parent && !index.count(*e.parent)) {
      fail(task, step_idx, "element '" + e.id + "': parent '" + *e.parent + "' does not exist");
    }
  }
  // Walk each parent chain; a chain longer than the element count is a cycle.
  for (const auto& e : doc.elements) {
    const Element* cur = &e;
    std::size_t hops = 0;
    while (cur->parent) {
      cur = &doc.elements[index.at(*cur->parent)];
      if (++hops > doc.elements.size()) fail(task, step_idx, "element '" + e.id + "': parent links form a cycle");
    }
  }
}

}  // namespace

void validate(const Task& task) {
  if (task.task_id.empty()) throw InvariantError("task with empty task_id");
  if (task.instruction.empty()) throw InvariantError("task '" + task.task_id + "': empty instruction");
  if (task.steps.empty()) throw InvariantError("task '" + task.task_id + "': no steps");
  for (std::size_t s = 0; s < task.steps.size(); ++s) {
    const Step& step = task.steps[s];
    if (step.step_id != static_cast<int>(s)) {
      fail(task, s, "step_id " + std::to_string(step.step_id) + " does not match position");
    }
    if (step.history.size() != s) fail(task, s, "history length must equal step_id");
    validate_document(task, s, step.document);
    try {
      validate(step.gt_action.operation);
    } catch (const InvariantError& err) {
      fail(task, s, err.what());
    }
    auto idx = step.document.find(step.gt_action.element_id);
    if (!idx) fail(task, s, "gt_element '" + step.gt_action.element_id + "' does not exist");
    if (!step.document.elements[*idx].actionable) {
      fail(task, s, "gt_element '" + step.gt_action.element_id + "' is not actionable");
    }
  }
}

void link_history(Task& task) {
  std::vector<Action> actions;
  std::vector<std::string> texts;
  for (auto& step : task.steps) {
    step.history = actions;
    step.history_text = texts;
    actions.push_back(step.gt_action);
    if (step.document.find(step.gt_action.element_id)) {
      texts.push_back(render_action(step.gt_action, step.document));
    }
  }
}

namespace {

const Json& require(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(std::string("missing field \"") + key + "\"");
  return *it;
}

std::string get_string(const Json& obj, const char* key) {
  const Json& v = require(obj, key);
  if (!v.is_string()) throw FormatError(std::string("field \"") + key + "\" must be a string");
  return v.get<std::string>();
}

std::optional<std::string> get_opt_string(const Json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw FormatError(std::string("field \"") + key + "\" must be a string or null");
  return it->get<std::string>();
}

bool get_bool(const Json& obj, const char* key) {
  const Json& v = require(obj, key);
  if (!v.is_boolean()) throw FormatError(std::string("field \"") + key + "\" must be a boolean");
  return v.get<bool>();
}

Element parse_element(const Json& j) {
  if (!j.is_object()) throw FormatError("element must be an object");
  Element e;
  e.id = get_string(j, "id");
  e.tag = get_string(j, "tag");
  e.text = get_string(j, "text");
  const Json& attrs = require(j, "attrs");
  if (!attrs.is_object()) throw FormatError("element '" + e.id + "': attrs must be an object");
  for (auto it = attrs.begin(); it != attrs.end(); ++it) {
    if (!it.value().is_string()) throw FormatError("element '" + e.id + "': attribute values must be strings");
    e.attrs.emplace_back(it.key(), it.value().get<std::string>());
  }
  const Json& bbox = require(j, "bbox");
  if (!bbox.is_array() || bbox.size() != 4) throw FormatError("element '" + e.id + "': bbox must be [x, y, w, h]");
  for (const auto& v : bbox) {
    if (!v.is_number()) throw FormatError("element '" + e.id + "': bbox entries must be numbers");
  }
  e.bbox = {bbox[0].get<double>(), bbox[1].get<double>(), bbox[2].get<double>(), bbox[3].get<double>()};
  e.visible = get_bool(j, "visible");
  e.actionable = get_bool(j, "actionable");
  e.parent = get_opt_string(j, "parent");
  return e;
}

Step parse_step(const Json& j) {
  if (!j.is_object()) throw FormatError("step must be an object");
  Step s;
  const Json& sid = require(j, "step_id");
  if (!sid.is_number_integer()) throw FormatError("step_id must be an integer");
  s.step_id = sid.get<int>();
  s.document.screenshot = get_opt_string(j, "screenshot");
  const Json& elements = require(j, "elements");
  if (!elements.is_array()) throw FormatError("elements must be an array");
  for (const auto& e : elements) s.document.elements.push_back(parse_element(e));
  s.gt_action.element_id = get_string(j, "gt_element");
  const Json& op = require(j, "gt_operation");
  if (!op.is_object()) throw FormatError("gt_operation must be an object");
  std::string op_name = get_string(op, "op");
  auto op_type = parse_op_type(op_name);
  if (!op_type) throw FormatError("unknown op '" + op_name + "'");
  s.gt_action.operation.op = *op_type;
  s.gt_action.operation.arg = get_opt_string(op, "arg");
  return s;
}

Json element_to_json(const Element& e) {
  Json j;
  j["id"] = e.id;
  j["tag"] = e.tag;
  j["text"] = e.text;
  Json attrs = Json::object();
  for (const auto& [k, v] : e.attrs) attrs[k] = v;
  j["attrs"] = std::move(attrs);
  j["bbox"] = Json::array({e.bbox.x, e.bbox.y, e.bbox.w, e.bbox.h});
  j["visible"] = e.visible;
  j["actionable"] = e.actionable;
  j["parent"] = e.parent ? Json(*e.parent) : Json(nullptr);
  return j;
}

}  // namespace

Task parse_task_line(std::string_view line, std::size_t line_no) {
  const std::string where = "line " + std::to_string(line_no) + ": ";
  Json j;
  try {
    j = Json::parse(line);
  } catch (const Json::parse_error& err) {
    throw FormatError(where + "malformed JSON: " + err.what());
  }
  Task task;
  try {
    if (!j.is_object()) throw FormatError("task must be a JSON object");
    task.task_id = get_string(j, "task_id");
    task.instruction = get_string(j, "instruction");
    task.website = get_string(j, "website");
    task.domain = get_string(j, "domain");
    const Json& steps = require(j, "steps");
    if (!steps.is_array()) throw FormatError("steps must be an array");
    for (const auto& s : steps) task.steps.push_back(parse_step(s));
  } catch (const FormatError& err) {
    throw FormatError(where + err.what());
  }
  // step_id/history are checked before linking so a bad step_id is reported as such
  for (std::size_t s = 0; s < task.steps.size(); ++s) {
    if (task.steps[s].step_id != static_cast<int>(s)) {
      throw InvariantError(where + "task '" + task.task_id + "' step " + std::to_string(s) + ": step_id " +
                           std::to_string(task.steps[s].step_id) + " does not match position");
    }
    try {
      validate(task.steps[s].gt_action.operation);
    } catch (const InvariantError& err) {
      throw InvariantError(where + "task '" + task.task_id + "' step " + std::to_string(s) + ": " + err.what());
    }
  }
  try {
    link_history(task);
    validate(task);
  } catch (const InvariantError& err) {
    throw InvariantError(where + err.what());
  }
  return task;
}

std::vector<Task> parse_corpus_text(std::string_view text) {
  std::vector<Task> tasks;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.find_first_not_of(" \t") != std::string_view::npos) tasks.push_back(parse_task_line(line, line_no));
    pos = end + 1;
  }
  return tasks;
}

std::vector<Task> parse_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading corpus file " + path.string());
  return parse_corpus_text(buf.str());
}

std::string serialize_task(const Task& task) {
  Json j;
  j["task_id"] = task.task_id;
  j["instruction"] = task.instruction;
  j["website"] = task.website;
  j["domain"] = task.domain;
  Json steps = Json::array();
  for (const auto& s : task.steps) {
    Json js;
    js["step_id"] = s.step_id;
    js["screenshot"] = s.document.screenshot ? Json(*s.document.screenshot) : Json(nullptr);
    Json elements = Json::array();
    for (const auto& e : s.document.elements) elements.push_back(element_to_json(e));
    js["elements"] = std::move(elements);
    js["gt_element"] = s.gt_action.element_id;
    Json op;
    op["op"] = std::string(to_string(s.gt_action.operation.op));
    op["arg"] = s.gt_action.operation.arg ? Json(*s.gt_action.operation.arg) : Json(nullptr);
    js["gt_operation"] = std::move(op);
    steps.push_back(std::move(js));
  }
  j["steps"] = std::move(steps);
  return j.dump();
}

std::string serialize_corpus(const std::vector<Task>& tasks) {
  std::string out;
  for (const auto& t : tasks) {
    out += serialize_task(t);
    out += '\n';
  }
  return out;
}

void write_corpus(const std::filesystem::path& path, const std::vector<Task>& tasks) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write corpus file " + path.string());
  out << serialize_corpus(tasks);
  if (!out) throw IoError("failed writing corpus file " + path.string());
}

std::optional<std::filesystem::path> screenshot_path(const std::filesystem::path& corpus_path,
                                                     const HtmlDocument& doc) {
  if (!doc.screenshot) return std::nullopt;
  std::filesystem::path p(*doc.screenshot);
  if (p.is_absolute()) return p;
  return corpus_path.parent_path() / p;
}

}  // namespace dvcr
