// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "dvcr/cli.hpp"
#include "dvcr/pipeline.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace dvcr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

std::string pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << 100.0 * v;
  return s.str();
}

// ---- 1: visual neighbors against a full sort

void neighbor_oracle(Verdict& v) {
  const auto t0 = Clock::now();
  Rng rng(101);
  std::size_t queries = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(499);
    const auto doc = testing::random_document(rng, n, trial % 2 == 0);
    std::vector<std::size_t> visible;
    for (std::size_t i = 0; i < n; ++i) {
      if (doc.elements[i].visible) visible.push_back(i);
    }
    if (visible.empty()) continue;
    for (int q = 0; q < 3; ++q) {
      const std::size_t cand = visible[rng.below(visible.size())];
      const std::size_t m = rng.below(4) == 0 ? n : rng.below(13);
      const auto got = visual_neighbors(doc, doc.elements[cand].id, m);
      ++queries;
      v.require(testing::ids_of(got) == testing::sorted_oracle(doc, cand, m),
                "document " + std::to_string(trial) + " candidate " + doc.elements[cand].id);
    }
  }
  const double secs = seconds_since(t0);
  v.require(secs < 30.0, "runtime");
  v.detail << queries << " queries on 1000 documents match the full sort, " << std::fixed << std::setprecision(1)
           << secs << " s (< 30 s)";
}

// ---- 2: ROI Align against explicit loops

void roi_oracle_check(Verdict& v) {
  FeatureGrid fixture(2, 2, 1, 1);
  fixture(0, 0, 0) = 1;
  fixture(0, 1, 0) = 2;
  fixture(1, 0, 0) = 3;
  fixture(1, 1, 0) = 4;
  v.require(roi_align(fixture, {0, 0, 2, 2}, {1, 1, 2}) == std::vector<double>{2.5}, "2x2 fixture");

  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t patch = 1 + rng.below(16);
    const auto g = testing::random_grid(rng, 1 + rng.below(12), 1 + rng.below(12), 1 + rng.below(6), patch);
    const double w = double(g.cols * patch), h = double(g.rows * patch);
    const BBox box = testing::random_overlapping_box(rng, w, h, 0.2);
    const RoiShape shape{1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(4)};
    const auto got = roi_align(g, box, shape);
    const auto want = testing::roi_oracle(g, box, shape);
    v.require(got.size() == want.size(), "output size");
    for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  }
  v.require(worst <= 1e-9, "oracle tolerance");

  std::size_t constant_cases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    FeatureGrid g(1 + rng.below(9), 1 + rng.below(9), 1, 1 + rng.below(8));
    const double c = rng.uniform(-1e3, 1e3);
    for (auto& x : g.data) x = c;
    const double w = double(g.cols * g.patch), h = double(g.rows * g.patch);
    const BBox box = testing::random_overlapping_box(rng, w, h, 1.0);
    for (double x : roi_align(g, box, {1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(4)})) {
      v.require(x == c, "constant grid");
    }
    ++constant_cases;
  }
  v.detail << "2x2 fixture gives 2.5; max |error| " << std::scientific << std::setprecision(2) << worst
           << " over 500 cases (<= 1e-9); " << constant_cases << " constant grids exact";
}

// ---- 3: gradient checks

void gradient_checks(Verdict& v) {
  const auto t0 = Clock::now();
  const auto tasks = parse_corpus(testing::data_dir() / "fixture.jsonl");
  const Vocab vocab = build_vocab(tasks, 1);
  FeatureGrid grid(20, 30, 8, 16);
  Rng rng(303);
  for (auto& x : grid.data) x = rng.uniform();

  RankerShape rs;
  rs.vocab = vocab.size();
  rs.d_model = 16;
  rs.layers = 2;
  rs.heads = 2;
  rs.ffn = 32;
  rs.max_seq = 64;
  rs.m = 2;
  rs.d_v = 8;
  rs.d_h = 8;
  auto rw = RankerWeights::random(rs, 5);
  const auto& task = tasks[0];
  const StepView view{task.steps[0].document, task.instruction, task.steps[0].history_text, &grid};
  std::vector<RankerExample> rbatch;
  for (const char* id : {"e3", "e5"}) {
    rbatch.push_back({assemble(view, view.doc.at(id), visual_neighbors(view.doc, id, rs.m), rw, vocab),
                      std::string(id) == "e3" ? 1.0 : 0.0});
  }
  auto rgrad = RankerWeights::zeros(rs);
  ranker_loss_and_grad(rw, rbatch, rgrad);
  const auto rchecks = testing::gradient_check(rw.tensors(), rgrad.tensors(), [&] { return ranker_loss(rw, rbatch); }, 1e-5);

  TextModelShape cs;
  cs.vocab = vocab.size();
  cs.d_model = 16;
  cs.layers = 2;
  cs.heads = 2;
  cs.ffn = 32;
  cs.max_seq = 48;
  auto cw = ChooserWeights::random(cs, 6);
  const std::vector<std::string> hist{"[textbox] name=dest -> TYPE Toronto"};
  const std::vector<std::string> a{"[button] Search <NBR> [span] Origin", "[link] Help"};
  const std::vector<std::string> b{"[textbox] name=orig", "[span] Size", "[combobox]"};
  const std::vector<ChoiceExample> cbatch{
      make_choice_example("Book a flight", hist, a, 0, vocab, cs.max_seq),
      make_choice_example("Choose size large", {}, b, std::nullopt, vocab, cs.max_seq),
  };
  auto cgrad = ChooserWeights::zeros(cs);
  chooser_loss_and_grad(cw, cbatch, cgrad);
  const auto cchecks = testing::gradient_check(cw.tensors(), cgrad.tensors(), [&] { return chooser_loss(cw, cbatch); }, 1e-5);

  for (const auto& c : rchecks) v.require(c.rel_error < 1e-4, "ranker " + c.name);
  for (const auto& c : cchecks) v.require(c.rel_error < 1e-4, "chooser " + c.name);
  const double secs = seconds_since(t0);
  v.require(secs < 300.0, "runtime");
  v.detail << "worst relative error ranker " << std::scientific << std::setprecision(2) << testing::worst(rchecks)
           << " over " << rchecks.size() << " tensors, chooser " << testing::worst(cchecks) << " over "
           << cchecks.size() << " tensors (< 1e-4); " << std::fixed << std::setprecision(1) << secs << " s";
}

// ---- 4: metrics

void metric_fixtures(Verdict& v) {
  const auto report = make_report(testing::golden_outcomes());
  const auto golden = testing::read_file(testing::data_dir() / "golden_report.json");
  v.require(report == report_from_json(golden), "golden report values");
  v.require(report_to_json(report) == golden, "golden report bytes");
  v.require(operation_token_f1(testing::type_op("new toronto"), testing::type_op("toronto")) == 0.8, "0.8 case");

  Rng rng(404);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto outcomes = testing::random_outcomes(rng);
    const auto r = make_report(outcomes);
    for (std::size_t i = 1; i < r.recall_at.size(); ++i) {
      v.require(r.recall_at[i - 1].second <= r.recall_at[i].second, "recall monotone, trial " + std::to_string(trial));
    }
    v.require(r.step_success_rate <= r.element_accuracy, "step SR <= element accuracy, trial " + std::to_string(trial));
  }
  v.detail << "golden report matches; Recall@K monotone and Step SR <= Ele. Acc over 10000 random outcome sets";
}

// ---- 5: election

class AlwaysNone : public ElementChooser {
 public:
  std::optional<std::size_t> choose(std::string_view, std::span<const std::string>, const Snippet&) override {
    return std::nullopt;
  }
};

void election_soundness(Verdict& v) {
  Rng rng(505);
  std::size_t max_rounds_used = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(100);
    const auto cands = testing::make_candidates(n);
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) values[i] = double(i);
    rng.shuffle(values);
    std::map<std::string, double> pref;
    std::size_t best = 0;
    for (std::size_t i = 0; i < n; ++i) {
      pref[cands[i].element_id] = values[i];
      if (values[i] > values[best]) best = i;
    }
    testing::PreferenceChooser chooser(pref);
    const auto e = elect_element(cands, chooser, "q", {});
    v.require(e.winner == std::optional<std::string>(cands[best].element_id), "argmax, trial " + std::to_string(trial));
    v.require(e.rounds.size() <= testing::ceil_log5(n) + 1, "round bound, trial " + std::to_string(trial));
    max_rounds_used = std::max(max_rounds_used, e.rounds.size());
  }
  std::size_t none_cases = 0;
  for (std::size_t n : {2, 5, 6, 37, 100}) {
    AlwaysNone chooser;
    v.require(!elect_element(testing::make_candidates(n), chooser, "q", {}).winner.has_value(), "all-None");
    ++none_cases;
  }
  v.detail << "1000 elections return the argmax within ceil(log5 N) + 1 rounds (max used " << max_rounds_used
           << "); all-None gives NONE in " << none_cases << " of 5 cases";
}

// ---- 6, 7, 8: synthetic benchmark

struct Bench {
  fs::path dir;
  std::optional<Dataset> train;
  std::optional<Dataset> test;
  std::ofstream log;
  std::map<std::string, EvalReport> reports;
  std::map<std::string, double> seconds;
  std::optional<RankerWeights> visual_ranker;
  std::optional<Vocab> vocab;
  std::vector<double> visual_loss;
};

RunConfig bench_config(const Settings& flags) { return resolve_config({}, flags); }

// The default corpus: 200 pages, seed 1, shipped themes.
SynthConfig default_synth() {
  SynthConfig s = bench_config({}).synth;
  s.themes = default_themes();
  return s;
}

void prepare_bench(Bench& b) {
  const RunConfig cfg = bench_config({});
  write_synth_corpus(generate_corpus(default_synth()), b.dir / "corpus");
  b.train.emplace(load_split(b.dir / "corpus" / "train.jsonl", cfg));
  b.test.emplace(load_split(b.dir / "corpus" / "test.jsonl", cfg));
  b.log.open(b.dir / "training.log");
}

// Ranker variants scored with the lexical chooser and oracle operations;
// Recall@K depends on the ranking only.
void run_ranker(Bench& b, const std::string& name, const Settings& flags) {
  Settings f = flags;
  f["predictor.chooser"] = "lexical";
  f["predictor.op_oracle"] = "true";
  const RunConfig cfg = bench_config(f);
  const auto t0 = Clock::now();
  b.log << "== " << name << "\n";
  TrainLog trace;
  Models models = train_models(*b.train, cfg, trace, &b.log);
  b.reports[name] = evaluate(cfg, *b.test, models);
  b.seconds[name] = seconds_since(t0);
  std::ofstream(b.dir / (name + ".json")) << report_to_json(b.reports[name]);
  if (name == "visual") {
    b.visual_ranker = models.ranker;
    b.vocab = models.vocab;
    b.visual_loss = trace.ranker_loss;
  }
}

// Chooser and op head trained for one predictor mode, ranking by the visual ranker.
void run_predictor(Bench& b, const std::string& mode) {
  const Settings flags{{"predictor.mode", mode}};
  Settings train_flags = flags;
  train_flags["ranker.kind"] = "oracle";
  const RunConfig train_cfg = bench_config(train_flags);
  const RunConfig eval_cfg = bench_config(flags);
  const auto t0 = Clock::now();
  b.log << "== " << mode << "\n";
  TrainLog trace;
  Models models = train_models(*b.train, train_cfg, trace, &b.log);
  models.ranker = b.visual_ranker;
  b.reports[mode] = evaluate(eval_cfg, *b.test, models);
  b.seconds[mode] = seconds_since(t0);
  std::ofstream(b.dir / (mode + ".json")) << report_to_json(b.reports[mode]);
}

void directional_6(Bench& b, Verdict& v) {
  run_ranker(b, "visual", {});
  run_ranker(b, "no_neighbors", {{"ranker.m", "0"}});
  const double vis = b.reports["visual"].recall_at[0].second;
  const double none = b.reports["no_neighbors"].recall_at[0].second;
  const double secs = b.seconds["visual"] + b.seconds["no_neighbors"];
  v.require(vis - none >= 0.10, "recall gap");
  v.require(secs < 900.0, "runtime");
  const auto& loss = b.visual_loss;
  std::size_t down = 0, down5 = 0;
  for (std::size_t e = 1; e < loss.size(); ++e) {
    if (loss[e] <= loss[e - 1]) {
      ++down;
      if (e < 5) ++down5;
    }
  }
  const std::size_t steps = loss.empty() ? 0 : loss.size() - 1;
  const std::size_t steps5 = std::min<std::size_t>(steps, 4);
  v.require(down5 == steps5 && 5 * down >= 4 * steps, "ranker loss trace");
  v.detail << "Recall@1 visual " << pct(vis) << " vs M=0 " << pct(none) << " (gap " << pct(vis - none)
           << " >= 10.0); train+eval " << std::fixed << std::setprecision(0) << secs << " s (< 900 s); loss non-increasing in "
           << down5 << "/" << steps5 << " of the first epoch steps, " << down << "/" << steps << " overall";
}

void directional_7(Bench& b, Verdict& v) {
  run_ranker(b, "random_neighbors", {{"ranker.neighbor_source", "random"}});
  const double vis = b.reports["visual"].recall_at[0].second;
  const double rnd = b.reports["random_neighbors"].recall_at[0].second;
  v.require(rnd <= vis, "random <= visual");
  v.detail << "Recall@1 random " << pct(rnd) << " <= visual " << pct(vis) << "; Recall@50 random "
           << pct(b.reports["random_neighbors"].recall_at.back().second) << " vs visual "
           << pct(b.reports["visual"].recall_at.back().second);
}

void directional_8(Bench& b, Verdict& v) {
  v.require(b.visual_ranker.has_value(), "visual ranker from criterion 6");
  if (!b.visual_ranker) return;
  run_predictor(b, "dualvcr");
  run_predictor(b, "bare");
  const auto& d = b.reports["dualvcr"];
  const auto& r = b.reports["bare"];
  v.require(d.step_success_rate >= r.step_success_rate, "dualvcr >= bare");
  v.detail << "Step SR dualvcr " << pct(d.step_success_rate) << " >= bare " << pct(r.step_success_rate)
           << " (Ele. Acc " << pct(d.element_accuracy) << " vs " << pct(r.element_accuracy) << ", Op. F1 "
           << pct(d.operation_f1) << " vs " << pct(r.operation_f1) << ")";
}

// ---- 9: determinism through the command line

int run_quiet(const std::vector<std::string>& args, const fs::path& log) {
  std::ofstream out(log, std::ios::app);
  return run_cli(args, out, out);
}

void determinism(const fs::path& work, Verdict& v) {
  const std::vector<std::string> shape{"--set", "ranker.d_model=16", "--set", "ranker.ffn=32", "--set",
                                       "visual.d_h=8"};
  std::map<std::string, std::string> first;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = work / run;
    fs::remove_all(dir);
    fs::create_directories(dir);
    const fs::path log = work / (std::string(run) + ".log");
    fs::remove(log);
    int code = run_quiet({"synth", "--pages", "24", "--seed", "9", "--out", (dir / "corpus").string()}, log);
    auto args = std::vector<std::string>{"train",    "--train", (dir / "corpus" / "train.jsonl").string(),
                                         "--weights", (dir / "weights").string(), "--epochs", "2",
                                         "--chooser-epochs", "2"};
    args.insert(args.end(), shape.begin(), shape.end());
    code = code ? code : run_quiet(args, log);
    args = {"eval", "--test", (dir / "corpus" / "test.jsonl").string(), "--weights", (dir / "weights").string(),
            "--report", (dir / "report.json").string()};
    args.insert(args.end(), shape.begin(), shape.end());
    code = code ? code : run_quiet(args, log);
    v.require(code == 0, std::string("run ") + run + " exit code");
    const auto bytes = testing::tree_bytes(dir);
    if (first.empty()) {
      first = bytes;
    } else {
      for (const auto& [path, content] : first) {
        const auto it = bytes.find(path);
        v.require(it != bytes.end() && it->second == content, path + " differs");
      }
      v.require(bytes.size() == first.size(), "file sets differ");
    }
  }
  std::size_t corpus = 0, weights = 0, reports = 0;
  for (const auto& [path, content] : first) {
    corpus += path.rfind("corpus", 0) == 0;
    weights += path.rfind("weights", 0) == 0;
    reports += path == "report.json";
  }
  v.require(corpus > 0 && weights > 0 && reports == 1, "artifacts present");
  v.detail << "two synth+train+eval runs agree byte for byte on " << corpus << " corpus files, " << weights
           << " weight files and " << reports << " report";
}

// ---- 10: oracle pass

void oracle_pass(Bench& b, Verdict& v) {
  const RunConfig cfg = bench_config({{"predictor.chooser", "scripted:gt"}, {"predictor.op_oracle", "true"}});
  const Models none;
  std::vector<std::pair<std::string, Dataset>> corpora;
  corpora.emplace_back("fixture", load_split(testing::data_dir() / "fixture.jsonl", cfg));
  corpora.emplace_back("synth train", load_split(b.dir / "corpus" / "train.jsonl", cfg));
  corpora.emplace_back("synth test", load_split(b.dir / "corpus" / "test.jsonl", cfg));
  auto domain = default_synth();
  domain.seed = 13;
  domain.pages = 40;
  domain.split = SplitMode::kDomain;
  write_synth_corpus(generate_corpus(domain), b.dir / "domain_corpus");
  corpora.emplace_back("domain-split test", load_split(b.dir / "domain_corpus" / "test.jsonl", cfg));
  std::size_t steps = 0;
  for (const auto& [name, data] : corpora) {
    const auto r = evaluate(cfg, data, none);
    for (const auto& [k, x] : r.recall_at) v.require(x == 1.0, name + " Recall@" + std::to_string(k));
    v.require(r.element_accuracy == 1.0, name + " element accuracy");
    v.require(r.operation_f1 == 1.0, name + " Op. F1");
    v.require(r.step_success_rate == 1.0, name + " Step SR");
    steps += r.steps;
  }
  v.detail << "all metrics 1.0 on " << corpora.size() << " corpora (" << steps << " steps)";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance checks"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "scratch directory");
  app.add_option("--only", only, "run just these criteria");
  CLI11_PARSE(app, argc, argv);

  Bench bench;
  bench.dir = fs::path(work) / "bench";
  fs::remove_all(work);
  fs::create_directories(bench.dir);
  const bool need_bench = only.empty() || std::any_of(only.begin(), only.end(), [](int c) { return c >= 6 && c != 9; });
  if (need_bench) prepare_bench(bench);
  if (!only.empty() && std::find(only.begin(), only.end(), 8) != only.end() &&
      std::find(only.begin(), only.end(), 6) == only.end()) {
    only.push_back(6);
  }

  const std::vector<std::pair<int, std::function<void(Verdict&)>>> criteria{
      {1, neighbor_oracle},
      {2, roi_oracle_check},
      {3, gradient_checks},
      {4, metric_fixtures},
      {5, election_soundness},
      {6, [&](Verdict& v) { directional_6(bench, v); }},
      {7, [&](Verdict& v) { directional_7(bench, v); }},
      {8, [&](Verdict& v) { directional_8(bench, v); }},
      {9, [&](Verdict& v) { determinism(fs::path(work) / "determinism", v); }},
      {10, [&](Verdict& v) { oracle_pass(bench, v); }},
  };
  bool all = true;
  std::ofstream results(fs::path(work) / "results.txt");
  for (const auto& [id, check] : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Verdict v;
    try {
      check(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << "exception: " << e.what();
    }
    all = all && v.pass;
    const std::string line = std::string(v.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + ": " + v.detail.str();
    std::cout << line << std::endl;
    results << line << std::endl;
  }
  return all ? 0 : 1;
}
