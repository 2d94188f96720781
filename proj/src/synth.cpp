#include "dvcr/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dvcr/error.hpp"
#include "dvcr/rng.hpp"
#include "dvcr/spatial.hpp"
#include "dvcr/tokenizer.hpp"

namespace dvcr {

using ojson = nlohmann::ordered_json;

namespace {

constexpr Rgb kBackground{255, 255, 255};
constexpr Rgb kHelperColor{150, 150, 150};
constexpr Rgb kLinkColor{60, 90, 200};
constexpr double kCharWidth = 6.0;
constexpr double kLabelHeight = 14.0;
constexpr double kGap = 4.0;
constexpr double kMinSlotWidth = 130.0;
constexpr double kMinSlotHeight = 100.0;
constexpr std::size_t kLayoutAttempts = 16;

const char* const kFillerTexts[] = {"Home",  "Help",  "Contact", "About", "Blog",
                                    "Login", "Terms", "Privacy", "Sitemap", "Careers"};
const char* const kHelperTexts[] = {"*", "icon", "optional"};

struct WidgetStyle {
  std::string_view tag;
  double w, h;
  Rgb color;
};

constexpr WidgetStyle kWidgetStyles[] = {
    {"combobox", 110, 24, {170, 170, 215}},
    {"textbox", 120, 24, {200, 200, 200}},
    {"button", 80, 26, {120, 120, 120}},
    {"checkbox", 18, 18, {150, 200, 150}},
    {"link", 0, 16, kLinkColor},
};

const WidgetStyle& style_for(std::string_view tag) {
  for (const auto& s : kWidgetStyles) {
    if (s.tag == tag) return s;
  }
  throw ConfigError("theme tag '" + std::string(tag) + "' has no widget style");
}

double color_distance(Rgb c) {
  return (std::abs(int{c.r} - kBackground.r) + std::abs(int{c.g} - kBackground.g) +
          std::abs(int{c.b} - kBackground.b)) /
         3.0;
}

double text_width(std::string_view text) { return kCharWidth * static_cast<double>(text.size()) + 8.0; }

std::set<std::string> word_tokens(std::string_view s) {
  std::set<std::string> out;
  for (auto& t : split_tokens(s)) {
    if (std::any_of(t.begin(), t.end(), [](unsigned char c) { return std::isalnum(c) != 0; })) {
      out.insert(std::move(t));
    }
  }
  return out;
}

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.below(v.size())];
}

std::string fill_template(std::string_view tmpl, std::string_view value) {
  std::string out(tmpl);
  const auto pos = out.find("{value}");
  if (pos != std::string::npos) out.replace(pos, 7, value);
  return out;
}

struct Grid {
  std::size_t cols = 0, rows = 0;
  double slot_w = 0, slot_h = 0;
};

Grid choose_grid(const SynthConfig& cfg) {
  const double W = static_cast<double>(cfg.page_width);
  const double H = static_cast<double>(cfg.page_height);
  const std::size_t n = cfg.widgets_per_page;
  Grid best;
  double best_score = -1.0;
  for (std::size_t cols = 1; cols <= n; ++cols) {
    const std::size_t rows = (n + cols - 1) / cols;
    const double sw = W / static_cast<double>(cols), sh = H / static_cast<double>(rows);
    if (sw < kMinSlotWidth || sh < kMinSlotHeight) continue;
    const double score = std::min(sw, sh);
    if (score > best_score) {
      best_score = score;
      best = {cols, rows, sw, sh};
    }
  }
  if (best_score < 0) {
    throw InvariantError("synth layout: " + std::to_string(n) + " widgets do not fit a " +
                         std::to_string(cfg.page_width) + "x" + std::to_string(cfg.page_height) + " page");
  }
  return best;
}

struct Companion {
  std::string tag;
  std::string text;
  Rgb color;
};

struct Slot {
  std::string tag;
  std::string text;
  Rgb color;
  std::vector<Companion> companions;
  bool target = false;
};

struct Placed {
  Element el;
  Rgb color;
  bool target = false;
};

GeneratedPage layout_page(const SynthConfig& cfg, std::span<const Theme> pool, Rng& rng, const std::string& task_id) {
  const std::size_t groups = cfg.distractor_groups + 1;
  const Grid grid = choose_grid(cfg);

  // target theme, then distractors preferring the target's tag
  const std::size_t target = rng.below(pool.size());
  std::vector<std::size_t> same, other;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (i == target) continue;
    (pool[i].tag == pool[target].tag ? same : other).push_back(i);
  }
  rng.shuffle(same);
  rng.shuffle(other);
  std::vector<std::size_t> chosen{target};
  for (std::size_t i : same) {
    if (chosen.size() < groups) chosen.push_back(i);
  }
  for (std::size_t i : other) {
    if (chosen.size() < groups) chosen.push_back(i);
  }

  std::vector<Slot> slots;
  for (std::size_t g = 0; g < chosen.size(); ++g) {
    const Theme& th = pool[chosen[g]];
    Slot s{th.tag, "", style_for(th.tag).color, {}, g == 0};
    const std::size_t n_labels = 1 + rng.below(cfg.m_planted);
    std::vector<std::string> labels = th.labels;
    rng.shuffle(labels);
    for (std::size_t i = 0; i < cfg.m_planted; ++i) {
      if (i < n_labels) {
        s.companions.push_back({"span", labels[i % labels.size()], th.color});
      } else {
        s.companions.push_back({"span", kHelperTexts[rng.below(std::size(kHelperTexts))], kHelperColor});
      }
    }
    rng.shuffle(s.companions);
    slots.push_back(std::move(s));
  }
  std::vector<std::string> fillers(std::begin(kFillerTexts), std::end(kFillerTexts));
  rng.shuffle(fillers);
  for (std::size_t i = 0; slots.size() < cfg.widgets_per_page; ++i) {
    Slot s{"link", fillers[i % fillers.size()], kLinkColor, {}, false};
    for (std::size_t c = 0; c < cfg.m_planted; ++c) {
      s.companions.push_back({"span", kHelperTexts[rng.below(std::size(kHelperTexts))], kHelperColor});
    }
    slots.push_back(std::move(s));
  }

  std::vector<std::size_t> cell(grid.cols * grid.rows);
  for (std::size_t i = 0; i < cell.size(); ++i) cell[i] = i;
  rng.shuffle(cell);

  // Companions stack above and below the widget: slot k alternates
  // above, below, two above, two below, ...
  std::vector<Placed> widgets, companions;
  for (std::size_t si = 0; si < slots.size(); ++si) {
    const Slot& s = slots[si];
    const double sx = static_cast<double>(cell[si] % grid.cols) * grid.slot_w;
    const double sy = static_cast<double>(cell[si] / grid.cols) * grid.slot_h;
    const WidgetStyle& st = style_for(s.tag);
    const double ww = s.tag == "link" ? text_width(s.text) : st.w;
    const double wh = st.h;
    const std::size_t above = (s.companions.size() + 1) / 2;
    const std::size_t below = s.companions.size() / 2;
    const double stack_above = static_cast<double>(above) * (kLabelHeight + kGap);
    const double stack_below = static_cast<double>(below) * (kLabelHeight + kGap);
    const double need_h = stack_above + wh + stack_below + 2 * kGap;
    double max_label = ww;
    for (const auto& c : s.companions) max_label = std::max(max_label, text_width(c.text));
    if (need_h > grid.slot_h || max_label + 2 * kGap > grid.slot_w) {
      throw InvariantError("synth layout: slot " + std::to_string(grid.slot_w) + "x" +
                           std::to_string(grid.slot_h) + " too small for a widget group");
    }
    const double free_x = grid.slot_w - max_label - 2 * kGap;
    const double free_y = grid.slot_h - need_h;
    const double jx = std::min(free_x, 20.0), jy = std::min(free_y, 12.0);
    const double cx = sx + grid.slot_w / 2 + rng.uniform(-jx / 2, jx / 2);
    const double wy = std::round(sy + kGap + stack_above + (free_y - jy) / 2 + rng.uniform(0.0, jy));
    Element w;
    w.tag = s.tag;
    w.text = s.text;
    w.bbox = {std::round(cx - ww / 2), wy, ww, wh};
    w.actionable = true;
    widgets.push_back({std::move(w), s.color, s.target});

    for (std::size_t k = 0; k < s.companions.size(); ++k) {
      const auto& c = s.companions[k];
      const double level = static_cast<double>(k / 2 + 1);
      const double lw = text_width(c.text);
      const double y = (k % 2 == 0) ? wy - level * (kLabelHeight + kGap)
                                    : wy + wh + kGap + (level - 1) * (kLabelHeight + kGap);
      Element e;
      e.tag = c.tag;
      e.text = c.text;
      e.bbox = {std::round(cx - lw / 2), y, lw, kLabelHeight};
      companions.push_back({std::move(e), c.color, false});
    }
  }
  rng.shuffle(widgets);
  rng.shuffle(companions);

  GeneratedPage page;
  const Theme& th = pool[target];
  page.theme = th.name;
  HtmlDocument doc;
  const BBox full{0, 0, static_cast<double>(cfg.page_width), static_cast<double>(cfg.page_height)};
  std::size_t next_id = 0;
  auto add = [&](Element e, std::optional<std::string> parent) -> std::string {
    e.id = "e" + std::to_string(next_id++);
    e.parent = std::move(parent);
    doc.elements.push_back(std::move(e));
    return doc.elements.back().id;
  };
  const std::string body = add({"", "body", "", {}, full, false, false, std::nullopt}, std::nullopt);
  const std::string form = add({"", "form", "", {}, full, false, false, std::nullopt}, body);
  std::string gt_id;
  Image img(cfg.page_width, cfg.page_height, kBackground);
  for (auto& w : widgets) {
    img.fill_rect(w.el.bbox, w.color);
    const std::string id = add(std::move(w.el), form);
    if (w.target) gt_id = id;
  }
  const std::string legend = add({"", "div", "", {}, full, false, false, std::nullopt}, body);
  for (auto& c : companions) {
    img.fill_rect(c.el.bbox, c.color);
    add(std::move(c.el), legend);
  }
  doc.screenshot = "screenshots/" + task_id + ".ppm";

  Task task;
  task.task_id = task_id;
  task.website = "synth-" + th.domain + ".example";
  task.domain = th.domain;
  Operation op{th.op, std::nullopt};
  std::string value;
  if (th.op != OpType::kClick) {
    value = pick(th.values, rng);
    op.arg = value;
  }
  task.instruction = fill_template(pick(th.templates, rng), value);
  Step step;
  step.step_id = 0;
  step.document = std::move(doc);
  step.gt_action = {gt_id, op};
  task.steps.push_back(std::move(step));
  page.task = std::move(task);
  page.image = std::move(img);
  return page;
}

}  // namespace

std::vector<Theme> parse_themes(std::string_view json_text) {
  ojson j;
  try {
    j = ojson::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("themes: ") + e.what());
  }
  std::vector<Theme> out;
  try {
    for (const auto& t : j.at("themes")) {
      Theme th;
      th.name = t.at("name").get<std::string>();
      th.domain = t.at("domain").get<std::string>();
      th.tag = t.at("tag").get<std::string>();
      const auto op = parse_op_type(t.at("op").get<std::string>());
      if (!op) throw FormatError("themes: '" + th.name + "' has an unknown op");
      th.op = *op;
      const auto& c = t.at("color");
      if (c.size() != 3) throw FormatError("themes: '" + th.name + "' color needs 3 channels");
      th.color = {c[0].get<std::uint8_t>(), c[1].get<std::uint8_t>(), c[2].get<std::uint8_t>()};
      th.labels = t.at("labels").get<std::vector<std::string>>();
      th.values = t.at("values").get<std::vector<std::string>>();
      th.templates = t.at("templates").get<std::vector<std::string>>();
      out.push_back(std::move(th));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("themes: ") + e.what());
  }
  return out;
}

std::vector<Theme> load_themes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open themes file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_themes(ss.str());
}

std::vector<Theme> default_themes() { return load_themes(std::filesystem::path(DVCR_DATA_DIR) / "themes.json"); }

std::string_view to_string(SplitMode m) { return m == SplitMode::kDomain ? "domain" : "task"; }

std::optional<SplitMode> parse_split_mode(std::string_view s) {
  if (s == "task") return SplitMode::kTask;
  if (s == "domain") return SplitMode::kDomain;
  return std::nullopt;
}

void SynthConfig::validate_layout() const {
  if (pages == 0) throw ConfigError("pages must be positive");
  if (page_width < 64 || page_height < 64) throw ConfigError("page_width and page_height must be at least 64");
  if (widgets_per_page < distractor_groups + 1) {
    throw ConfigError("widgets_per_page must cover the target and distractor_groups");
  }
  if (widgets_per_page < 2 * distractor_groups) throw ConfigError("widgets_per_page must be >= 2 * distractor_groups");
  if (m_planted == 0) throw ConfigError("m_planted must be positive");
}

void SynthConfig::validate() const {
  validate_layout();
  if (themes.size() < distractor_groups + 1) throw ConfigError("themes: need more pools than distractor_groups");
  std::set<std::string> names;
  for (const auto& th : themes) {
    if (!names.insert(th.name).second) throw ConfigError("themes: duplicate name '" + th.name + "'");
    if (th.labels.empty() || th.templates.empty()) throw ConfigError("themes: '" + th.name + "' needs labels and templates");
    if (th.op != OpType::kClick && th.values.empty()) throw ConfigError("themes: '" + th.name + "' needs values");
    if (th.tag == "link") throw ConfigError("themes: '" + th.name + "' uses the filler tag 'link'");
    style_for(th.tag);
    if (color_distance(th.color) < 32.0) throw ConfigError("themes: '" + th.name + "' color too close to white");
    for (const auto& t : th.templates) {
      const bool has_value = t.find("{value}") != std::string::npos;
      if (has_value != (th.op != OpType::kClick)) {
        throw ConfigError("themes: '" + th.name + "' template '" + t + "' must use {value} exactly for TYPE/SELECT");
      }
    }
  }
}

PlantedContext check_planted_context(const Task& task, std::size_t m) {
  PlantedContext pc;
  const auto query = word_tokens(task.instruction);
  for (const auto& step : task.steps) {
    const HtmlDocument& doc = step.document;
    for (const auto& e : doc.elements) {
      if (!e.visible || !e.actionable) continue;
      bool context = false;
      for (const auto& n : visual_neighbors(doc, e.id, m).neighbors) {
        for (const auto& t : word_tokens(doc.at(n.element_id).text)) context = context || query.count(t) > 0;
      }
      if (e.id == step.gt_action.element_id) {
        pc.gt_has_context = context;
      } else {
        ++pc.distractors;
        if (!context) ++pc.distractors_without_context;
      }
    }
  }
  return pc;
}

GeneratedPage generate_page(const SynthConfig& cfg, std::span<const Theme> pool, std::uint64_t page_seed,
                            const std::string& task_id) {
  if (pool.size() < cfg.distractor_groups + 1) throw ConfigError("theme pool smaller than the page's groups");
  for (std::size_t attempt = 0; attempt < kLayoutAttempts; ++attempt) {
    Rng rng(mix_seed(page_seed, attempt));
    GeneratedPage page = layout_page(cfg, pool, rng, task_id);
    page.seed = page_seed;
    const PlantedContext pc = check_planted_context(page.task, cfg.m_planted);
    const bool distractors_ok = pc.distractors_without_context * 10 >= pc.distractors * 9;
    if (pc.gt_has_context && distractors_ok) {
      validate(page.task);
      return page;
    }
  }
  throw InvariantError("synth: page " + task_id + " failed the planted-context check " +
                       std::to_string(kLayoutAttempts) + " times");
}

std::vector<Task> SynthCorpus::train_tasks() const {
  std::vector<Task> out;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    if (!records[i].test) out.push_back(pages[i].task);
  }
  return out;
}

std::vector<Task> SynthCorpus::test_tasks() const {
  std::vector<Task> out;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    if (records[i].test) out.push_back(pages[i].task);
  }
  return out;
}

SynthCorpus generate_corpus(const SynthConfig& cfg) {
  cfg.validate();
  SynthCorpus corpus;
  corpus.config = cfg;
  const std::size_t groups = cfg.distractor_groups + 1;

  std::vector<Theme> train_pool, test_pool;
  if (cfg.split == SplitMode::kTask) {
    train_pool = test_pool = cfg.themes;
  } else {
    std::vector<std::string> domains;
    for (const auto& th : cfg.themes) {
      if (std::find(domains.begin(), domains.end(), th.domain) == domains.end()) domains.push_back(th.domain);
    }
    std::sort(domains.begin(), domains.end());
    Rng rng(mix_seed(cfg.seed, 77));
    rng.shuffle(domains);
    std::set<std::string> test_domains;
    for (const auto& d : domains) {
      if (test_pool.size() >= groups) break;
      test_domains.insert(d);
      for (const auto& th : cfg.themes) {
        if (th.domain == d) test_pool.push_back(th);
      }
    }
    for (const auto& th : cfg.themes) {
      if (!test_domains.count(th.domain)) train_pool.push_back(th);
    }
    if (train_pool.size() < groups || test_pool.size() < groups) {
      throw ConfigError("themes: not enough domains for a cross-domain split with " + std::to_string(groups) +
                        " groups per page");
    }
  }
  for (const auto& th : train_pool) corpus.train_themes.push_back(th.name);
  for (const auto& th : test_pool) corpus.test_themes.push_back(th.name);

  const std::size_t n_test = cfg.pages / 5;
  const std::size_t n_train = cfg.pages - n_test;
  for (std::size_t p = 0; p < cfg.pages; ++p) {
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu", p);
    const bool test = p >= n_train;
    const std::uint64_t seed = mix_seed(cfg.seed, p);
    GeneratedPage page = generate_page(cfg, test ? test_pool : train_pool, seed, id);
    corpus.records.push_back({p, seed, id, page.theme, test});
    corpus.pages.push_back(std::move(page));
  }
  return corpus;
}

namespace {

ojson themes_to_json(const std::vector<Theme>& themes) {
  ojson arr = ojson::array();
  for (const auto& th : themes) {
    ojson t;
    t["name"] = th.name;
    t["domain"] = th.domain;
    t["tag"] = th.tag;
    t["op"] = std::string(to_string(th.op));
    t["color"] = {th.color.r, th.color.g, th.color.b};
    t["labels"] = th.labels;
    t["values"] = th.values;
    t["templates"] = th.templates;
    arr.push_back(std::move(t));
  }
  return arr;
}

}  // namespace

std::string manifest_json(const SynthCorpus& corpus) {
  const SynthConfig& c = corpus.config;
  ojson j;
  j["generator"] = "dvcr-synth";
  j["version"] = 1;
  ojson cfg;
  cfg["pages"] = c.pages;
  cfg["page_width"] = c.page_width;
  cfg["page_height"] = c.page_height;
  cfg["widgets_per_page"] = c.widgets_per_page;
  cfg["distractor_groups"] = c.distractor_groups;
  cfg["m_planted"] = c.m_planted;
  cfg["seed"] = c.seed;
  cfg["split"] = std::string(to_string(c.split));
  j["config"] = std::move(cfg);
  j["train_themes"] = corpus.train_themes;
  j["test_themes"] = corpus.test_themes;
  ojson pages = ojson::array();
  for (const auto& r : corpus.records) {
    ojson p;
    p["page"] = r.page;
    p["seed"] = r.seed;
    p["task_id"] = r.task_id;
    p["theme"] = r.theme;
    p["split"] = r.test ? "test" : "train";
    pages.push_back(std::move(p));
  }
  j["pages"] = std::move(pages);
  j["themes"] = ojson{{"version", 1}, {"themes", themes_to_json(c.themes)}};
  return j.dump(2) + "\n";
}

SynthConfig config_from_manifest(std::string_view json_text) {
  ojson j;
  try {
    j = ojson::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  SynthConfig c;
  try {
    if (j.at("version").get<int>() != 1) throw FormatError("manifest: unsupported version");
    const auto& cfg = j.at("config");
    c.pages = cfg.at("pages").get<std::size_t>();
    c.page_width = cfg.at("page_width").get<std::size_t>();
    c.page_height = cfg.at("page_height").get<std::size_t>();
    c.widgets_per_page = cfg.at("widgets_per_page").get<std::size_t>();
    c.distractor_groups = cfg.at("distractor_groups").get<std::size_t>();
    c.m_planted = cfg.at("m_planted").get<std::size_t>();
    c.seed = cfg.at("seed").get<std::uint64_t>();
    const auto split = parse_split_mode(cfg.at("split").get<std::string>());
    if (!split) throw FormatError("manifest: unknown split");
    c.split = *split;
    c.themes = parse_themes(j.at("themes").dump());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return c;
}

void write_synth_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "screenshots", ec);
  if (ec) throw IoError("cannot create " + (dir / "screenshots").string() + ": " + ec.message());
  write_corpus(dir / "train.jsonl", corpus.train_tasks());
  write_corpus(dir / "test.jsonl", corpus.test_tasks());
  for (const auto& page : corpus.pages) {
    save_image(dir / *page.task.steps.front().document.screenshot, page.image);
  }
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << manifest_json(corpus);
  if (!out) throw IoError("write failed for " + (dir / "manifest.json").string());
}

}  // namespace dvcr
