#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "dvcr/document.hpp"
#include "dvcr/evaluation.hpp"
#include "dvcr/rng.hpp"

namespace dvcr::testing {

inline std::filesystem::path data_dir() { return DVCR_TEST_DATA_DIR; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Relative path -> contents for every file under dir.
inline std::map<std::string, std::string> tree_bytes(const std::filesystem::path& dir) {
  std::map<std::string, std::string> out;
  if (!std::filesystem::exists(dir)) return out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[std::filesystem::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return out;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("dvcr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Random document with integer-ish boxes so exact distance ties happen.
// Element 0 is an invisible root; the rest hang off random earlier elements.
inline HtmlDocument random_document(Rng& rng, std::size_t n, bool coarse = false) {
  HtmlDocument doc;
  for (std::size_t i = 0; i < n; ++i) {
    Element e;
    e.id = "e" + std::to_string(i);
    e.tag = i == 0 ? "body" : (rng.below(3) == 0 ? "button" : "span");
    e.text = i == 0 ? "" : "w" + std::to_string(rng.below(50));
    const double grid = coarse ? 10.0 : 1.0;
    e.bbox = {grid * static_cast<double>(rng.below(coarse ? 20 : 600)),
              grid * static_cast<double>(rng.below(coarse ? 20 : 600)),
              grid * static_cast<double>(1 + rng.below(coarse ? 4 : 80)),
              grid * static_cast<double>(1 + rng.below(coarse ? 4 : 40))};
    e.visible = i != 0 && rng.below(8) != 0;
    e.actionable = e.tag == "button";
    if (i > 0) e.parent = "e" + std::to_string(rng.below(i));
    doc.elements.push_back(std::move(e));
  }
  return doc;
}

inline Operation type_op(const char* arg) { return {OpType::kType, std::string(arg)}; }
inline const Operation kClickOp{OpType::kClick, std::nullopt};

// Task A: step 0 right element with a partial argument, step 1 exact at rank 2.
// Task B: gt ranked 8th and no element elected.
inline std::vector<StepOutcome> golden_outcomes() {
  return {
      {"A", 0, {"e3", "e1", "e2"}, Action{"e3", type_op("new toronto")}, Action{"e3", type_op("toronto")}},
      {"A", 1, {"e2", "e5", "e1"}, Action{"e5", kClickOp}, Action{"e5", kClickOp}},
      {"B", 0, {"e1", "e2", "e3", "e4", "e5", "e6", "e8", "e7"}, std::nullopt,
       Action{"e7", {OpType::kSelect, std::string("large")}}},
  };
}

inline std::vector<StepOutcome> random_outcomes(Rng& rng) {
  std::vector<StepOutcome> out(1 + rng.below(30));
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto& o = out[i];
    o.task_id = "t" + std::to_string(rng.below(5));
    o.step_id = i;
    const std::size_t n = rng.below(60);
    for (std::size_t k = 0; k < n; ++k) o.ranked_ids.push_back("e" + std::to_string(rng.below(80)));
    o.gt = {"e" + std::to_string(rng.below(80)), rng.below(2) ? kClickOp : type_op(rng.below(2) ? "a b" : "a")};
    if (rng.below(4) != 0) {
      const bool right = rng.below(2) == 0;
      const auto r = rng.below(4);
      o.predicted = Action{right ? o.gt.element_id : "e" + std::to_string(rng.below(80)),
                           r == 0 ? kClickOp : r == 1 ? type_op("a") : r == 2 ? type_op("a b") : type_op("b b a")};
    }
  }
  return out;
}

}  // namespace dvcr::testing
