#include <doctest.h>

#include <cctype>
#include <set>

#include "dvcr/dataset.hpp"
#include "dvcr/error.hpp"
#include "dvcr/synth.hpp"
#include "dvcr/tokenizer.hpp"
#include "support.hpp"

using namespace dvcr;

namespace {

std::set<std::string> words(const std::vector<std::string>& texts) {
  std::set<std::string> out;
  for (const auto& t : texts) {
    for (auto& w : split_tokens(t)) {
      if (w != "{" && w != "}" && w != "value" && std::isalnum(static_cast<unsigned char>(w[0]))) out.insert(w);
    }
  }
  return out;
}

bool disjoint(const std::set<std::string>& a, const std::set<std::string>& b) {
  for (const auto& w : a) {
    if (b.count(w)) return false;
  }
  return true;
}

SynthConfig small_config(std::uint64_t seed = 1) {
  SynthConfig c;
  c.pages = 20;
  c.seed = seed;
  c.themes = default_themes();
  return c;
}

}  // namespace

TEST_CASE("shipped theme pools have disjoint label words") {
  const auto themes = default_themes();
  REQUIRE(themes.size() >= 12);
  for (const auto& a : themes) {
    CHECK(!a.labels.empty());
    CHECK(!a.templates.empty());
    for (const auto& b : themes) {
      if (a.name == b.name) continue;
      INFO(a.name << " vs " << b.name);
      CHECK(disjoint(words(a.labels), words(b.labels)));
      CHECK(disjoint(words(a.templates), words(b.labels)));
    }
    for (const auto& b : themes) CHECK(disjoint(words(a.values), words(b.labels)));
  }
}

TEST_CASE("theme validation") {
  auto themes = default_themes();
  SynthConfig c;
  c.themes = themes;
  CHECK_NOTHROW(c.validate());
  c.themes.push_back(themes[0]);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.themes = themes;
  c.themes[0].values.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.themes = themes;
  c.themes[0].templates = {"Select it"};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.themes = themes;
  c.widgets_per_page = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_themes("{\"version\": 1, \"themes\": [{\"name\": \"x\"}]}"), Error);
}

TEST_CASE("generated pages satisfy the planted-context post-condition") {
  const auto corpus = generate_corpus(small_config());
  REQUIRE(corpus.pages.size() == 20);
  for (const auto& page : corpus.pages) {
    const Task& t = page.task;
    INFO(t.task_id);
    CHECK_NOTHROW(validate(t));
    REQUIRE(t.steps.size() == 1);
    const Step& s = t.steps[0];
    const Element& gt = s.document.at(s.gt_action.element_id);
    CHECK(gt.visible);
    CHECK(gt.actionable);
    CHECK(page.image.width == 640);
    CHECK(page.image.height == 480);
    CHECK(s.document.screenshot == std::optional<std::string>("screenshots/" + t.task_id + ".ppm"));
    if (s.gt_action.operation.arg) {
      const auto arg = split_tokens(*s.gt_action.operation.arg);
      const auto inst = split_tokens(t.instruction);
      CHECK(std::search(inst.begin(), inst.end(), arg.begin(), arg.end()) != inst.end());
    }
    const auto ctx = check_planted_context(t, 3);
    CHECK(ctx.gt_has_context);
    CHECK(ctx.distractors >= 5);
    CHECK(10 * ctx.distractors_without_context >= 9 * ctx.distractors);
  }
  std::size_t test = 0;
  for (const auto& r : corpus.records) test += r.test ? 1 : 0;
  CHECK(test == 4);
  CHECK(corpus.train_tasks().size() == 16);
}

TEST_CASE("domain split keeps test themes out of training") {
  auto cfg = small_config();
  cfg.split = SplitMode::kDomain;
  const auto corpus = generate_corpus(cfg);
  std::set<std::string> train(corpus.train_themes.begin(), corpus.train_themes.end());
  for (const auto& t : corpus.test_themes) CHECK_FALSE(train.count(t));
  for (const auto& r : corpus.records) {
    if (r.test) CHECK(std::find(corpus.test_themes.begin(), corpus.test_themes.end(), r.theme) != corpus.test_themes.end());
    if (!r.test) CHECK(train.count(r.theme));
  }
}

TEST_CASE("same config, same bytes; the manifest regenerates the corpus") {
  const auto a = generate_corpus(small_config());
  const auto da = testing::scratch_dir("synth_a");
  const auto db = testing::scratch_dir("synth_b");
  const auto dc = testing::scratch_dir("synth_c");
  write_synth_corpus(a, da);
  write_synth_corpus(generate_corpus(small_config()), db);
  const auto bytes = testing::tree_bytes(da);
  CHECK(bytes.count("train.jsonl"));
  CHECK(bytes.count("test.jsonl"));
  CHECK(bytes.count("manifest.json"));
  CHECK(bytes.count("screenshots/synth_0000.ppm"));
  CHECK(bytes == testing::tree_bytes(db));

  write_synth_corpus(generate_corpus(config_from_manifest(bytes.at("manifest.json"))), dc);
  CHECK(testing::tree_bytes(dc) == bytes);

  const auto other = generate_corpus(small_config(2));
  CHECK(other.pages[0].task != a.pages[0].task);
}

TEST_CASE("written corpus loads with screenshots") {
  const auto dir = testing::scratch_dir("synth_load");
  write_synth_corpus(generate_corpus(small_config()), dir);
  const PatchStatsFeaturizer f(16, 8);
  const auto data = load_dataset(dir / "test.jsonl", f);
  REQUIRE(data.tasks.size() == 4);
  REQUIRE(data.grid(0, 0) != nullptr);
  CHECK(data.grid(0, 0)->rows == 30);
  CHECK(data.grid(0, 0)->cols == 40);
}
