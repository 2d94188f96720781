#include "dvcr/config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "dvcr/error.hpp"

namespace dvcr {

std::string_view to_string(Preset p) { return p == Preset::kPretrained ? "pretrained" : "synth"; }

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, std::string_view why) {
  throw ConfigError("invalid value '" + value + "' for " + key + ": " + std::string(why));
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos) bad_value(key, v, "expected an integer");
  errno = 0;
  const unsigned long long n = std::strtoull(v.c_str(), nullptr, 10);
  if (errno == ERANGE) bad_value(key, v, "out of range");
  return n;
}

std::size_t parse_count(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(parse_u64(key, v));
}

double parse_real(const std::string& key, const std::string& v) {
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(d)) {
    bad_value(key, v, "expected a number");
  }
  return d;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "expected true or false");
}

// Shortest text that parses back to the same double.
std::string fmt_real(double d) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, d);
  return std::string(buf, r.ptr);
}

struct KeyDef {
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define DVCR_COUNT(KEY, FIELD)                                                                          \
  KeyDef {                                                                                              \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_count(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                                      \
  }
#define DVCR_REAL(KEY, FIELD)                                                                          \
  KeyDef {                                                                                             \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_real(k, v); }, \
        [](const RunConfig& c) { return fmt_real(c.FIELD); }                                           \
  }
#define DVCR_TEXT(KEY, FIELD)                                                             \
  KeyDef {                                                                                \
    KEY, [](RunConfig& c, const std::string&, const std::string& v) { c.FIELD = v; },     \
        [](const RunConfig& c) { return c.FIELD; }                                        \
  }

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table{
      DVCR_TEXT("paths.train", train_path),
      DVCR_TEXT("paths.test", test_path),
      DVCR_TEXT("paths.weights", weights_dir),
      DVCR_TEXT("paths.out", out_dir),
      DVCR_TEXT("paths.report", report_path),
      DVCR_TEXT("paths.themes", themes_path),

      DVCR_REAL("ranker.lr", ranker.lr),
      DVCR_COUNT("ranker.batch_size", ranker.batch_size),
      DVCR_COUNT("ranker.epochs", ranker.epochs),
      DVCR_COUNT("ranker.negatives", ranker.negatives_per_positive),
      DVCR_COUNT("ranker.seed", ranker.seed),
      DVCR_COUNT("ranker.m", ranker.m),
      DVCR_COUNT("ranker.d_model", ranker.d_model),
      DVCR_COUNT("ranker.layers", ranker.layers),
      DVCR_COUNT("ranker.heads", ranker.heads),
      DVCR_COUNT("ranker.ffn", ranker.ffn),
      DVCR_COUNT("ranker.max_seq", ranker.max_seq),
      KeyDef{"ranker.neighbor_source",
             [](RunConfig& c, const std::string& k, const std::string& v) {
               const auto s = parse_neighbor_source(v);
               if (!s) bad_value(k, v, "expected visual, tree or random");
               c.neighbor_source = *s;
             },
             [](const RunConfig& c) { return std::string(to_string(c.neighbor_source)); }},
      DVCR_COUNT("ranker.neighbor_seed", neighbor_seed),
      DVCR_TEXT("ranker.kind", ranker_kind),

      DVCR_COUNT("visual.patch", visual.patch),
      DVCR_COUNT("visual.d_v", visual.d_v),
      DVCR_COUNT("visual.d_h", visual.d_h),
      KeyDef{"visual.mode",
             [](RunConfig& c, const std::string& k, const std::string& v) {
               const auto m = parse_visual_mode(v);
               if (!m) bad_value(k, v, "expected element or whole");
               c.visual.mode = *m;
             },
             [](const RunConfig& c) { return std::string(to_string(c.visual.mode)); }},

      DVCR_COUNT("predictor.k", k),
      KeyDef{"predictor.mode",
             [](RunConfig& c, const std::string& k, const std::string& v) {
               const auto m = parse_predictor_mode(v);
               if (!m) bad_value(k, v, "expected dualvcr or bare");
               c.mode = *m;
             },
             [](const RunConfig& c) { return std::string(to_string(c.mode)); }},
      DVCR_TEXT("predictor.chooser", chooser),
      KeyDef{"predictor.op_oracle",
             [](RunConfig& c, const std::string& k, const std::string& v) { c.op_oracle = parse_bool(k, v); },
             [](const RunConfig& c) { return std::string(c.op_oracle ? "true" : "false"); }},
      DVCR_COUNT("predictor.group_size", group_size),
      DVCR_COUNT("predictor.max_rounds", max_rounds),

      DVCR_REAL("chooser.lr", chooser_lr),
      DVCR_COUNT("chooser.epochs", chooser_epochs),
      DVCR_COUNT("chooser.batch_size", chooser_batch_size),
      DVCR_COUNT("chooser.positives", chooser_positives),

      DVCR_COUNT("synth.pages", synth.pages),
      DVCR_COUNT("synth.page_width", synth.page_width),
      DVCR_COUNT("synth.page_height", synth.page_height),
      DVCR_COUNT("synth.widgets_per_page", synth.widgets_per_page),
      DVCR_COUNT("synth.distractor_groups", synth.distractor_groups),
      DVCR_COUNT("synth.m_planted", synth.m_planted),
      DVCR_COUNT("synth.seed", synth.seed),
      KeyDef{"synth.split",
             [](RunConfig& c, const std::string& k, const std::string& v) {
               const auto m = parse_split_mode(v);
               if (!m) bad_value(k, v, "expected task or domain");
               c.synth.split = *m;
             },
             [](const RunConfig& c) { return std::string(to_string(c.synth.split)); }},
  };
  return table;
}

#undef DVCR_COUNT
#undef DVCR_REAL
#undef DVCR_TEXT

const KeyDef* find_key(std::string_view key) {
  for (const auto& k : key_table()) {
    if (key == k.key) return &k;
  }
  return nullptr;
}

void apply_preset(RunConfig& c, Preset p) {
  c.preset = p;
  if (p == Preset::kPretrained) {
    c.ranker.lr = 3e-5;
    c.ranker.epochs = 5;
    c.chooser_lr = 5e-5;
    c.chooser_epochs = 5;
    c.chooser_positives = 1;
    return;
  }
  // Tiny corpus, no pretraining: larger steps, more passes, more positive questions.
  c.ranker.lr = 1e-3;
  c.ranker.epochs = 30;
  c.chooser_lr = 1e-3;
  c.chooser_epochs = 15;
  c.chooser_positives = 4;
}

Preset parse_preset(const std::string& v) {
  if (v == "pretrained") return Preset::kPretrained;
  if (v == "synth") return Preset::kSynth;
  bad_value("preset", v, "expected pretrained or synth");
}

}  // namespace

bool is_known_key(std::string_view key) { return key == "version" || key == "preset" || find_key(key); }

Settings parse_config_text(std::string_view text) {
  Settings out;
  std::istringstream in{std::string(text)};
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) throw ConfigError(where + "malformed section header");
      section = trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string name = trim(std::string_view(t).substr(0, eq));
    const std::string value = trim(std::string_view(t).substr(eq + 1));
    const std::string key = section.empty() ? name : section + "." + name;
    if (!is_known_key(key)) throw ConfigError(where + "unknown key '" + key + "'");
    if (!out.emplace(key, value).second) throw ConfigError(where + "duplicate key '" + key + "'");
  }
  if (const auto it = out.find("version"); it != out.end()) {
    if (it->second != std::to_string(kConfigVersion)) {
      throw ConfigError("config version " + it->second + " is not supported (expected " +
                        std::to_string(kConfigVersion) + ")");
    }
  } else if (!out.empty()) {
    throw ConfigError("config file needs 'version = " + std::to_string(kConfigVersion) + "'");
  }
  return out;
}

Settings load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

RunConfig resolve_config(const Settings& file, const Settings& flags) {
  RunConfig c;
  Preset preset = Preset::kSynth;
  if (auto it = file.find("preset"); it != file.end()) preset = parse_preset(it->second);
  if (auto it = flags.find("preset"); it != flags.end()) preset = parse_preset(it->second);
  apply_preset(c, preset);
  for (const Settings* layer : {&file, &flags}) {
    for (const auto& [key, value] : *layer) {
      if (key == "version" || key == "preset") continue;
      const KeyDef* def = find_key(key);
      if (!def) throw ConfigError("unknown key '" + key + "'");
      def->set(c, key, value);
    }
  }
  // Gold chooser plus gold operation is the oracle run; its ranking is gold
  // too unless a ranker was asked for.
  if (c.chooser == "scripted:gt" && c.op_oracle && !file.count("ranker.kind") && !flags.count("ranker.kind")) {
    c.ranker_kind = "oracle";
  }
  c.validate();
  return c;
}

PredictorSettings RunConfig::predictor_settings() const {
  PredictorSettings s;
  s.m = ranker.m;
  s.k = k;
  s.source = neighbor_source;
  s.neighbor_seed = neighbor_seed;
  s.mode = mode;
  s.group_size = group_size;
  s.max_rounds = max_rounds;
  return s;
}

void RunConfig::validate() const {
  auto wrap = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(section) + "." + e.what());
    }
  };
  wrap("ranker", [&] { ranker.validate(); });
  wrap("synth", [&] { synth.validate_layout(); });
  if (visual.patch == 0) throw ConfigError("visual.patch must be positive");
  if (visual.d_v < 7) throw ConfigError("visual.d_v must be at least 7 (the patch featurizer emits 7 statistics)");
  if (visual.d_h == 0) throw ConfigError("visual.d_h must be positive");
  if (ranker_kind != "trained" && ranker_kind != "oracle") throw ConfigError("ranker.kind must be trained or oracle");
  if (k == 0) throw ConfigError("predictor.k must be positive");
  if (group_size == 0 || group_size > 25) throw ConfigError("predictor.group_size must be in 1..25");
  if (max_rounds == 0) throw ConfigError("predictor.max_rounds must be positive");
  if (chooser != "trained" && chooser != "lexical" && chooser.rfind("scripted:", 0) != 0) {
    throw ConfigError("predictor.chooser must be trained, lexical, scripted:gt or scripted:<path>");
  }
  if (chooser == "scripted:") throw ConfigError("predictor.chooser scripted: needs gt or a path");
  if (!(chooser_lr > 0.0)) throw ConfigError("chooser.lr must be positive");
  if (chooser_epochs == 0) throw ConfigError("chooser.epochs must be positive");
  if (chooser_batch_size == 0) throw ConfigError("chooser.batch_size must be positive");
  if (chooser_positives == 0) throw ConfigError("chooser.positives must be positive");
}

std::vector<std::pair<std::string, std::string>> describe(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out{{"version", std::to_string(kConfigVersion)},
                                                       {"preset", std::string(to_string(cfg.preset))}};
  for (const auto& k : key_table()) out.emplace_back(k.key, k.get(cfg));
  return out;
}

}  // namespace dvcr
