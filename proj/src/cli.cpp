#include "dvcr/cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "dvcr/config.hpp"
#include "dvcr/error.hpp"
#include "dvcr/evaluation.hpp"
#include "dvcr/pipeline.hpp"
#include "dvcr/synth.hpp"

namespace dvcr {

namespace {

struct Invocation {
  std::string config_path;
  Settings flags;
};

void key_option(CLI::App* app, Invocation& inv, const std::string& flag, const std::string& key,
                const std::string& help) {
  app->add_option_function<std::string>(flag, [&inv, key](const std::string& v) { inv.flags[key] = v; }, help);
}

void common_options(CLI::App* app, Invocation& inv) {
  app->add_option("--config", inv.config_path, "config file (key = value with [sections])");
  app->add_option_function<std::vector<std::string>>(
      "--set",
      [&inv](const std::vector<std::string>& kvs) {
        for (const auto& kv : kvs) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
          const std::string key = kv.substr(0, eq);
          if (!is_known_key(key)) throw ConfigError("unknown key '" + key + "'");
          inv.flags[key] = kv.substr(eq + 1);
        }
      },
      "override any config key, e.g. --set ranker.epochs=3");
  key_option(app, inv, "--preset", "preset", "pretrained or synth hyperparameters");
}

void model_options(CLI::App* app, Invocation& inv) {
  key_option(app, inv, "--weights", "paths.weights", "weights directory");
  key_option(app, inv, "--M", "ranker.m", "neighbors per element");
  key_option(app, inv, "--neighbor-source", "ranker.neighbor_source", "visual, tree or random");
  key_option(app, inv, "--ranker", "ranker.kind", "trained or oracle");
  key_option(app, inv, "--chooser", "predictor.chooser", "trained, lexical, scripted:gt or scripted:<path>");
  key_option(app, inv, "--predictor-mode", "predictor.mode", "dualvcr or bare");
  key_option(app, inv, "--K", "predictor.k", "candidates passed to the election");
  app->add_flag_callback("--op-oracle", [&inv] { inv.flags["predictor.op_oracle"] = "true"; },
                         "use the gold operation");
}

RunConfig resolve(const Invocation& inv) {
  const Settings file = inv.config_path.empty() ? Settings{} : load_config_file(inv.config_path);
  return resolve_config(file, inv.flags);
}

std::vector<Theme> themes_for(const RunConfig& cfg) {
  return cfg.themes_path.empty() ? default_themes() : load_themes(cfg.themes_path);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::filesystem::path require_path(const std::string& value, const char* key) {
  if (value.empty()) throw ConfigError(std::string(key) + " is not set");
  return value;
}

int cmd_synth(const Invocation& inv, const std::string& manifest, std::ostream& out) {
  const RunConfig cfg = resolve(inv);
  SynthConfig sc;
  if (!manifest.empty()) {
    sc = config_from_manifest(read_text(manifest));
  } else {
    sc = cfg.synth;
    sc.themes = themes_for(cfg);
  }
  sc.validate();
  const SynthCorpus corpus = generate_corpus(sc);
  write_synth_corpus(corpus, cfg.out_dir);
  std::size_t n_test = 0;
  for (const auto& r : corpus.records) n_test += r.test ? 1 : 0;
  out << "wrote " << corpus.records.size() - n_test << " train and " << n_test << " test tasks to " << cfg.out_dir
      << "\n";
  return kExitOk;
}

int cmd_train(const Invocation& inv, std::ostream& out) {
  const RunConfig cfg = resolve(inv);
  const Dataset train = load_split(require_path(cfg.train_path, "paths.train"), cfg);
  TrainLog trace;
  const Models models = train_models(train, cfg, trace, &out);
  save_models(models, cfg.weights_dir);
  out << "saved weights to " << cfg.weights_dir << "\n";
  return kExitOk;
}

int cmd_eval(const Invocation& inv, std::ostream& out) {
  const RunConfig cfg = resolve(inv);
  const Dataset test = load_split(require_path(cfg.test_path, "paths.test"), cfg);
  const Models models = load_models(cfg.weights_dir, cfg);
  const EvalReport report = evaluate(cfg, test, models);
  out << format_report(report);
  if (!cfg.report_path.empty()) {
    write_text(cfg.report_path, report_to_json(report));
    out << "report written to " << cfg.report_path << "\n";
  }
  return kExitOk;
}

std::pair<std::size_t, std::size_t> locate_step(const Dataset& data, const std::string& task, std::size_t step) {
  for (std::size_t t = 0; t < data.tasks.size(); ++t) {
    if (data.tasks[t].task_id == task) {
      if (step >= data.tasks[t].steps.size()) {
        throw ConfigError("task '" + task + "' has " + std::to_string(data.tasks[t].steps.size()) + " steps");
      }
      return {t, step};
    }
  }
  if (!task.empty() && task.find_first_not_of("0123456789") == std::string::npos) {
    const std::size_t t = std::stoul(task);
    if (t < data.tasks.size() && step < data.tasks[t].steps.size()) return {t, step};
  }
  throw ConfigError("no task '" + task + "' with step " + std::to_string(step));
}

void print_ranking(const Dataset& data, std::size_t t, std::size_t s, const std::vector<ScoredElement>& ranked,
                   const RunConfig& cfg, std::size_t limit, std::ostream& out) {
  const Task& task = data.tasks[t];
  const HtmlDocument& doc = task.steps[s].document;
  out << "task " << task.task_id << " step " << task.steps[s].step_id << "\n";
  out << "instruction: " << task.instruction << "\n";
  const std::size_t n = std::min(limit, ranked.size());
  out << "ranked (top " << n << " of " << ranked.size() << "):\n";
  for (std::size_t i = 0; i < n; ++i) {
    out << "  " << (i + 1) << ". " << ranked[i].element_id << "  " << fixed(ranked[i].score, 6) << "  "
        << element_html_text(doc.at(ranked[i].element_id)) << "\n";
  }
  out << "neighbors (" << to_string(cfg.neighbor_source) << ", M = " << cfg.ranker.m << "):\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto nbrs = neighbors(doc, ranked[i].element_id, cfg.ranker.m, cfg.neighbor_source, cfg.neighbor_seed);
    out << "  " << ranked[i].element_id << ":";
    for (const auto& nb : nbrs.neighbors) out << " " << nb.element_id << " (" << fixed(nb.distance, 1) << ")";
    out << "\n";
  }
}

struct StepArgs {
  std::string task;
  std::size_t step = 0;
};

int cmd_rank(const Invocation& inv, const StepArgs& sa, std::ostream& out) {
  const RunConfig cfg = resolve(inv);
  const Dataset data = load_split(require_path(cfg.test_path, "paths.test"), cfg);
  RunConfig rank_cfg = cfg;
  rank_cfg.op_oracle = true;
  if (rank_cfg.chooser == "trained") rank_cfg.chooser = "lexical";
  const Models models = load_models(cfg.weights_dir, rank_cfg);
  const Pipeline pipeline(rank_cfg, data, models);
  const auto [t, s] = locate_step(data, sa.task, sa.step);
  print_ranking(data, t, s, pipeline.rank(t, s), cfg, cfg.k, out);
  return kExitOk;
}

std::string label_of(std::optional<std::size_t> pick, const Snippet& g) {
  if (!pick) return std::string(1, g.none_label()) + " (None)";
  return std::string(1, g.options[*pick].label) + " (" + g.options[*pick].element_id + ")";
}

int cmd_predict(const Invocation& inv, const StepArgs& sa, std::ostream& out) {
  const RunConfig cfg = resolve(inv);
  const Dataset data = load_split(require_path(cfg.test_path, "paths.test"), cfg);
  const Models models = load_models(cfg.weights_dir, cfg);
  const Pipeline pipeline(cfg, data, models);
  const auto [t, s] = locate_step(data, sa.task, sa.step);
  const ActionPrediction p = pipeline.predict(t, s);
  print_ranking(data, t, s, p.ranked, cfg, cfg.k, out);
  out << "election (" << to_string(cfg.mode) << " snippets):\n";
  for (std::size_t r = 0; r < p.election.rounds.size(); ++r) {
    const auto& round = p.election.rounds[r];
    out << "round " << (r + 1) << "\n";
    for (std::size_t g = 0; g < round.groups.size(); ++g) {
      out << "group " << (g + 1) << "\n" << round.groups[g].render();
      out << "pick: " << label_of(round.picks[g], round.groups[g]) << "\n";
    }
  }
  out << "resolution: " << p.election.resolution << "\n";
  const HtmlDocument& doc = data.tasks[t].steps[s].document;
  out << "action: " << (p.action ? render_action(*p.action, doc) : std::string("NONE")) << "\n";
  out << "gold: " << render_action(data.tasks[t].steps[s].gt_action, doc) << "\n";
  return kExitOk;
}

int cmd_compare(const std::vector<std::string>& files, const std::vector<std::string>& names, std::ostream& out) {
  if (files.size() != 2) throw ConfigError("compare takes exactly two report files");
  const EvalReport a = report_from_json(read_text(files[0]));
  const EvalReport b = report_from_json(read_text(files[1]));
  const std::string na = names.size() > 0 ? names[0] : std::filesystem::path(files[0]).stem().string();
  const std::string nb = names.size() > 1 ? names[1] : std::filesystem::path(files[1]).stem().string();
  out << format_comparison(a, na, b, nb);
  return kExitOk;
}

int cmd_config(const Invocation& inv, std::ostream& out) {
  const RunConfig cfg = resolve(inv);
  std::string section;
  for (const auto& [key, value] : describe(cfg)) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) {
      out << key << " = " << value << "\n";
      continue;
    }
    if (key.substr(0, dot) != section) {
      section = key.substr(0, dot);
      out << "\n[" << section << "]\n";
    }
    out << key.substr(dot + 1) << " = " << value << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-view element ranking and action prediction for web pages", "dvcr"};
  app.require_subcommand(1);
  Invocation inv;

  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  common_options(synth, inv);
  std::string manifest;
  synth->add_option("--manifest", manifest, "regenerate from a manifest.json");
  key_option(synth, inv, "--out", "paths.out", "output directory");
  key_option(synth, inv, "--pages", "synth.pages", "number of pages");
  key_option(synth, inv, "--seed", "synth.seed", "generator seed");
  key_option(synth, inv, "--width", "synth.page_width", "page width in px");
  key_option(synth, inv, "--height", "synth.page_height", "page height in px");
  key_option(synth, inv, "--widgets", "synth.widgets_per_page", "actionable widgets per page");
  key_option(synth, inv, "--distractors", "synth.distractor_groups", "distractor widget groups");
  key_option(synth, inv, "--m-planted", "synth.m_planted", "elements placed around each widget");
  key_option(synth, inv, "--split", "synth.split", "task or domain");
  key_option(synth, inv, "--themes", "paths.themes", "themes JSON file");

  auto* train = app.add_subcommand("train", "train the ranker, chooser and op head");
  common_options(train, inv);
  model_options(train, inv);
  key_option(train, inv, "--train", "paths.train", "training corpus (JSONL)");
  key_option(train, inv, "--epochs", "ranker.epochs", "ranker epochs");
  key_option(train, inv, "--lr", "ranker.lr", "ranker learning rate");
  key_option(train, inv, "--batch-size", "ranker.batch_size", "ranker batch size");
  key_option(train, inv, "--negatives", "ranker.negatives", "negatives per positive");
  key_option(train, inv, "--seed", "ranker.seed", "training seed");
  key_option(train, inv, "--chooser-epochs", "chooser.epochs", "chooser and op head epochs");
  key_option(train, inv, "--chooser-lr", "chooser.lr", "chooser and op head learning rate");

  auto* eval = app.add_subcommand("eval", "evaluate on a corpus");
  common_options(eval, inv);
  model_options(eval, inv);
  key_option(eval, inv, "--test", "paths.test", "evaluation corpus (JSONL)");
  key_option(eval, inv, "--report", "paths.report", "write the JSON report here");

  StepArgs step_args;
  auto* rank = app.add_subcommand("rank", "rank one step's candidates");
  auto* predict = app.add_subcommand("predict", "predict one step's action with the election transcript");
  for (auto* sub : {rank, predict}) {
    common_options(sub, inv);
    model_options(sub, inv);
    key_option(sub, inv, "--corpus", "paths.test", "corpus (JSONL)");
    sub->add_option("--task", step_args.task, "task id or index")->required();
    sub->add_option("--step", step_args.step, "step index");
  }

  auto* compare = app.add_subcommand("compare", "two JSON reports side by side");
  std::vector<std::string> files, names;
  compare->add_option("reports", files, "two report files")->required()->expected(2);
  compare->add_option("--names", names, "column names")->expected(0, 2);

  auto* config = app.add_subcommand("config", "print the resolved configuration");
  common_options(config, inv);
  model_options(config, inv);

  std::vector<const char*> argv{"dvcr"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
      out << app.help();
      return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
      out << app.help("", CLI::AppFormatMode::All);
      return kExitOk;
    } catch (const CLI::ParseError& e) {
      err << "error: " << e.what() << "\n";
      return kExitConfig;
    }
    if (*synth) return cmd_synth(inv, manifest, out);
    if (*train) return cmd_train(inv, out);
    if (*eval) return cmd_eval(inv, out);
    if (*rank) return cmd_rank(inv, step_args, out);
    if (*predict) return cmd_predict(inv, step_args, out);
    if (*compare) return cmd_compare(files, names, out);
    if (*config) return cmd_config(inv, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}

}  // namespace dvcr
