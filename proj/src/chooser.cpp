#include "dvcr/chooser.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dvcr/error.hpp"

namespace dvcr {

ChooserWeights ChooserWeights::zeros(const TextModelShape& shape) {
  ChooserWeights w;
  w.text = TextModel::zeros(shape);
  w.head_w = Matrix::Zero(static_cast<Eigen::Index>(shape.d_model), 1);
  w.head_b = Matrix::Zero(1, 1);
  return w;
}

ChooserWeights ChooserWeights::random(const TextModelShape& shape, std::uint64_t seed) {
  Rng rng(seed);
  ChooserWeights w = zeros(shape);
  w.text = TextModel::random(shape, rng);
  w.head_w = random_matrix(w.head_w.rows(), 1, 0.02, rng);
  return w;
}

std::vector<TensorRef> ChooserWeights::tensors() {
  std::vector<TensorRef> out;
  text.append_tensors(out);
  out.push_back({"head.w", &head_w});
  out.push_back({"head.b", &head_b});
  return out;
}

void ChooserWeights::save(const std::filesystem::path& path) const {
  auto cfg = text.shape.to_config();
  cfg["kind"] = "chooser";
  auto copy = *this;
  write_weights(path, cfg, copy.tensors());
}

ChooserWeights ChooserWeights::load(const std::filesystem::path& path) {
  const WeightsFile f = read_weights(path);
  if (config_string(f, "kind") != "chooser") throw FormatError(path.string() + ": not a chooser weights file");
  ChooserWeights w = zeros(TextModelShape::from_config(f));
  assign_tensors(f, w.tensors());
  return w;
}

ChoiceExample make_choice_example(std::string_view instruction, std::span<const std::string> history,
                                  std::span<const std::string> option_texts, std::optional<std::size_t> target,
                                  const Vocab& vocab, std::size_t max_seq) {
  if (target && *target >= option_texts.size()) throw InvariantError("choice target out of range");
  const auto query = tokenize(instruction, vocab);
  const auto hist = join_history_tokens(history, vocab);
  ChoiceExample ex;
  for (const auto& text : option_texts) {
    ex.options.push_back(build_text_input(query, hist, tokenize(text, vocab), max_seq));
  }
  ex.options.push_back(build_text_input(query, hist, tokenize(kNoneOptionText, vocab), max_seq));
  ex.target = target ? *target : option_texts.size();
  return ex;
}

namespace {

double head_logit(const ChooserWeights& w, const Matrix& out) {
  return out.row(0).dot(w.head_w.col(0)) + w.head_b(0, 0);
}

std::vector<double> softmax(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += p[i] = std::exp(z[i] - mx);
  for (double& v : p) v /= sum;
  return p;
}

// -log softmax(z)[target]
double cross_entropy(std::span<const double> z, std::size_t target) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  return mx + std::log(sum) - z[target];
}

}  // namespace

std::vector<double> option_logits(const ChooserWeights& w, const ChoiceExample& ex) {
  std::vector<double> z;
  for (const auto& opt : ex.options) z.push_back(head_logit(w, text_forward(w.text, opt, nullptr)));
  return z;
}

double chooser_loss(const ChooserWeights& w, std::span<const ChoiceExample> batch) {
  double loss = 0.0;
  for (const auto& ex : batch) loss += cross_entropy(option_logits(w, ex), ex.target);
  return loss / static_cast<double>(batch.size());
}

double chooser_loss_and_grad(const ChooserWeights& w, std::span<const ChoiceExample> batch, ChooserWeights& grad) {
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& ex : batch) {
    std::vector<TextCache> caches(ex.options.size());
    std::vector<Matrix> outs;
    std::vector<double> z;
    for (std::size_t j = 0; j < ex.options.size(); ++j) {
      outs.push_back(text_forward(w.text, ex.options[j], &caches[j]));
      z.push_back(head_logit(w, outs.back()));
    }
    loss += cross_entropy(z, ex.target);
    const auto p = softmax(z);
    for (std::size_t j = 0; j < ex.options.size(); ++j) {
      const double dz = (p[j] - (j == ex.target ? 1.0 : 0.0)) * inv_b;
      grad.head_w.col(0) += dz * outs[j].row(0).transpose();
      grad.head_b(0, 0) += dz;
      Matrix d_out = Matrix::Zero(outs[j].rows(), outs[j].cols());
      d_out.row(0) = dz * w.head_w.col(0).transpose();
      text_backward(w.text, ex.options[j], caches[j], d_out, grad.text);
    }
  }
  return loss * inv_b;
}

std::vector<double> TrainedChooser::option_probabilities(std::string_view instruction,
                                                         std::span<const std::string> history,
                                                         const Snippet& snippet) const {
  std::vector<std::string> texts;
  for (const auto& o : snippet.options) texts.push_back(o.text);
  const ChoiceExample ex = make_choice_example(instruction, history, texts, std::nullopt, vocab_, w_.text.shape.max_seq);
  return softmax(option_logits(w_, ex));
}

std::optional<std::size_t> TrainedChooser::choose(std::string_view instruction, std::span<const std::string> history,
                                                  const Snippet& snippet) {
  const auto p = option_probabilities(instruction, history, snippet);
  const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
  if (best >= snippet.options.size()) return std::nullopt;
  return best;
}

namespace {

bool is_word(const std::string& tok) {
  return std::any_of(tok.begin(), tok.end(), [](unsigned char c) { return std::isalnum(c) != 0; });
}

}  // namespace

std::optional<std::size_t> LexicalChooser::choose(std::string_view instruction, std::span<const std::string>,
                                                  const Snippet& snippet) {
  std::set<std::string> query;
  for (auto& t : split_tokens(instruction)) {
    if (is_word(t)) query.insert(std::move(t));
  }
  std::optional<std::size_t> best;
  std::size_t best_overlap = 0;
  for (std::size_t i = 0; i < snippet.options.size(); ++i) {
    std::size_t overlap = 0;
    for (const auto& t : split_tokens(snippet.options[i].text)) {
      if (t != "nbr" && query.count(t)) ++overlap;
    }
    if (overlap > best_overlap) {
      best_overlap = overlap;
      best = i;
    }
  }
  return best;
}

std::optional<std::size_t> TargetChooser::choose(std::string_view, std::span<const std::string>,
                                                 const Snippet& snippet) {
  if (!target_) return std::nullopt;
  for (std::size_t i = 0; i < snippet.options.size(); ++i) {
    if (snippet.options[i].element_id == *target_) return i;
  }
  return std::nullopt;
}

ChooserScript parse_chooser_script(std::string_view text) {
  ChooserScript script;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    std::istringstream fields(line);
    std::string task, element, extra;
    long long step = -1;
    if (!(fields >> task >> step >> element) || step < 0 || (fields >> extra)) {
      throw FormatError("chooser script line " + std::to_string(line_no) +
                        ": expected 'task_id step_id element_id'");
    }
    if (!script.emplace(std::pair{task, static_cast<std::size_t>(step)}, element).second) {
      throw FormatError("chooser script line " + std::to_string(line_no) + ": duplicate step");
    }
  }
  return script;
}

ChooserScript load_chooser_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open chooser script " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_chooser_script(ss.str());
}

ChooserTrainResult train_chooser(const Dataset& data, const Vocab& vocab, const ChooserTrainConfig& cfg,
                                 const PredictorSettings& settings, const EpochCallback& on_epoch) {
  if (!(cfg.lr > 0.0) || cfg.batch_size == 0 || cfg.epochs == 0 || cfg.group_size < 2 ||
      cfg.positives_per_step == 0) {
    throw ConfigError(
        "chooser training needs lr > 0, batch_size > 0, epochs > 0, group_size >= 2, positives_per_step > 0");
  }
  ChooserTrainResult result{ChooserWeights::random(cfg.shape, mix_seed(cfg.seed, 2)), {}};
  ChooserWeights& w = result.weights;
  ChooserWeights grad = ChooserWeights::zeros(cfg.shape);
  auto params = w.tensors();
  auto grads = grad.tensors();
  Adam adam(params, AdamConfig{cfg.lr});

  struct StepData {
    std::vector<TokenId> query, history;
    std::vector<std::vector<TokenId>> bodies;  // per candidate
    std::size_t gt;                            // index into bodies
  };
  std::vector<StepData> steps;
  const auto none_body = tokenize(kNoneOptionText, vocab);
  for (const auto& task : data.tasks) {
    for (const auto& step : task.steps) {
      const auto cands = candidate_indices(step.document);
      const std::size_t gt_index = *step.document.find(step.gt_action.element_id);
      const auto gt_pos = std::find(cands.begin(), cands.end(), gt_index);
      if (gt_pos == cands.end() || cands.size() < 2) continue;
      StepData sd;
      sd.query = tokenize(task.instruction, vocab);
      sd.history = join_history_tokens(step.history_text, vocab);
      for (std::size_t i : cands) {
        sd.bodies.push_back(tokenize(option_text(step.document, step.document.elements[i], settings), vocab));
      }
      sd.gt = static_cast<std::size_t>(gt_pos - cands.begin());
      steps.push_back(std::move(sd));
    }
  }
  if (steps.empty()) throw InvariantError("train_chooser: no step with the gt among two or more candidates");

  const std::size_t max_seq = cfg.shape.max_seq;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, 2000 + epoch));
    std::vector<ChoiceExample> examples;
    for (const auto& sd : steps) {
      std::vector<std::size_t> pool;
      for (std::size_t i = 0; i < sd.bodies.size(); ++i) {
        if (i != sd.gt) pool.push_back(i);
      }
      rng.shuffle(pool);
      auto question = [&](std::vector<std::size_t> members, std::optional<std::size_t> target_member) {
        rng.shuffle(members);
        ChoiceExample ex;
        ex.target = members.size();
        for (std::size_t j = 0; j < members.size(); ++j) {
          ex.options.push_back(build_text_input(sd.query, sd.history, sd.bodies[members[j]], max_seq));
          if (target_member && members[j] == *target_member) ex.target = j;
        }
        ex.options.push_back(build_text_input(sd.query, sd.history, none_body, max_seq));
        examples.push_back(std::move(ex));
      };
      for (std::size_t q = 0; q < cfg.positives_per_step; ++q) {
        if (q > 0) rng.shuffle(pool);
        std::vector<std::size_t> with_gt{sd.gt};
        with_gt.insert(with_gt.end(), pool.begin(),
                       pool.begin() + static_cast<std::ptrdiff_t>(std::min(pool.size(), cfg.group_size - 1)));
        question(std::move(with_gt), sd.gt);
      }
      rng.shuffle(pool);
      question({pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(std::min(pool.size(), cfg.group_size))},
               std::nullopt);
    }
    rng.shuffle(examples);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < examples.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, examples.size());
      std::span<const ChoiceExample> batch(examples.data() + start, end - start);
      zero_all(grads);
      epoch_loss += chooser_loss_and_grad(w, batch, grad) * static_cast<double>(batch.size());
      adam.step(params, grads);
    }
    epoch_loss /= static_cast<double>(examples.size());
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

}  // namespace dvcr
