#include "dvcr/op_head.hpp"

#include <algorithm>
#include <cmath>

#include "dvcr/error.hpp"

namespace dvcr {

OpHeadWeights OpHeadWeights::zeros(const TextModelShape& shape) {
  const auto d = static_cast<Eigen::Index>(shape.d_model);
  OpHeadWeights w;
  w.text = TextModel::zeros(shape);
  w.op_w = Matrix::Zero(d, 3);
  w.op_b = Matrix::Zero(1, 3);
  w.start_w = Matrix::Zero(d, 1);
  w.end_w = Matrix::Zero(d, 1);
  return w;
}

OpHeadWeights OpHeadWeights::random(const TextModelShape& shape, std::uint64_t seed) {
  Rng rng(seed);
  OpHeadWeights w = zeros(shape);
  w.text = TextModel::random(shape, rng);
  w.op_w = random_matrix(w.op_w.rows(), 3, 0.02, rng);
  w.start_w = random_matrix(w.start_w.rows(), 1, 0.02, rng);
  w.end_w = random_matrix(w.end_w.rows(), 1, 0.02, rng);
  return w;
}

std::vector<TensorRef> OpHeadWeights::tensors() {
  std::vector<TensorRef> out;
  text.append_tensors(out);
  out.push_back({"op.w", &op_w});
  out.push_back({"op.b", &op_b});
  out.push_back({"span.start", &start_w});
  out.push_back({"span.end", &end_w});
  return out;
}

void OpHeadWeights::save(const std::filesystem::path& path) const {
  auto cfg = text.shape.to_config();
  cfg["kind"] = "ophead";
  auto copy = *this;
  write_weights(path, cfg, copy.tensors());
}

OpHeadWeights OpHeadWeights::load(const std::filesystem::path& path) {
  const WeightsFile f = read_weights(path);
  if (config_string(f, "kind") != "ophead") throw FormatError(path.string() + ": not an op head weights file");
  OpHeadWeights w = zeros(TextModelShape::from_config(f));
  assign_tensors(f, w.tensors());
  return w;
}

namespace {

struct Forward {
  TextCache cache;
  Matrix out;
  OpScores scores;
};

void score_into(const OpHeadWeights& w, const TextInput& in, const Matrix& out, OpScores& s) {
  const Eigen::RowVectorXd ops = out.row(0) * w.op_w + w.op_b;
  for (int c = 0; c < 3; ++c) s.op_logits[static_cast<std::size_t>(c)] = ops(c);
  s.start.clear();
  s.end.clear();
  for (std::size_t i = 0; i < in.query_len; ++i) {
    const auto row = static_cast<Eigen::Index>(in.query_begin + i);
    s.start.push_back(out.row(row).dot(w.start_w.col(0)));
    s.end.push_back(out.row(row).dot(w.end_w.col(0)));
  }
}

std::vector<double> softmax(std::span<const double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  std::vector<double> p(z.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) sum += p[i] = std::exp(z[i] - mx);
  for (double& v : p) v /= sum;
  return p;
}

double cross_entropy(std::span<const double> z, std::size_t target) {
  const double mx = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - mx);
  return mx + std::log(sum) - z[target];
}

double example_loss(const OpScores& s, const OpExample& ex) {
  double loss = cross_entropy(s.op_logits, ex.op_class);
  if (ex.span) loss += cross_entropy(s.start, ex.span->first) + cross_entropy(s.end, ex.span->second);
  return loss;
}

}  // namespace

OpScores op_scores(const OpHeadWeights& w, const TextInput& in) {
  OpScores s;
  score_into(w, in, text_forward(w.text, in, nullptr), s);
  return s;
}

std::pair<std::size_t, std::size_t> best_span(std::span<const double> start, std::span<const double> end) {
  if (start.empty() || start.size() != end.size()) throw InvariantError("best_span: mismatched or empty scores");
  std::size_t best_s = 0, best_e = 0, run_s = 0;
  double best = start[0] + end[0];
  for (std::size_t e = 0; e < end.size(); ++e) {
    if (start[e] > start[run_s]) run_s = e;
    const double v = start[run_s] + end[e];
    if (v > best) {
      best = v;
      best_s = run_s;
      best_e = e;
    }
  }
  return {best_s, best_e};
}

Operation decode_operation(const OpScores& scores, std::span<const std::string> query_tokens) {
  std::size_t cls = 0;
  for (std::size_t c = 1; c < 3; ++c) {
    if (scores.op_logits[c] > scores.op_logits[cls]) cls = c;
  }
  const OpType op = kOpClasses[cls];
  if (op == OpType::kClick || query_tokens.empty()) return {op, std::nullopt};
  const std::size_t n = std::min({query_tokens.size(), scores.start.size(), scores.end.size()});
  if (n == 0) return {op, std::nullopt};
  const auto [s, e] = best_span(std::span(scores.start).first(n), std::span(scores.end).first(n));
  return {op, detokenize(query_tokens.subspan(s, e - s + 1))};
}

Operation LearnedOpHead::predict(const OpRequest& req) const {
  const auto in = build_text_input(tokenize(req.instruction, vocab_), join_history_tokens(req.history, vocab_),
                                   tokenize(req.block, vocab_), w_.text.shape.max_seq);
  auto words = split_tokens(req.instruction);
  words.resize(in.query_len);
  return decode_operation(op_scores(w_, in), words);
}

std::optional<std::pair<std::size_t, std::size_t>> find_argument_span(std::span<const std::string> query_tokens,
                                                                      std::string_view argument) {
  const auto arg = split_tokens(argument);
  if (arg.empty() || arg.size() > query_tokens.size()) return std::nullopt;
  for (std::size_t s = 0; s + arg.size() <= query_tokens.size(); ++s) {
    if (std::equal(arg.begin(), arg.end(), query_tokens.begin() + static_cast<std::ptrdiff_t>(s))) {
      return std::pair{s, s + arg.size() - 1};
    }
  }
  return std::nullopt;
}

OpExample make_op_example(std::string_view instruction, std::span<const std::string> history, std::string_view block,
                          const Operation& gt, const Vocab& vocab, std::size_t max_seq) {
  OpExample ex;
  ex.input = build_text_input(tokenize(instruction, vocab), join_history_tokens(history, vocab),
                              tokenize(block, vocab), max_seq);
  ex.op_class = static_cast<std::size_t>(std::find(kOpClasses.begin(), kOpClasses.end(), gt.op) - kOpClasses.begin());
  if (gt.op != OpType::kClick && gt.arg) {
    auto words = split_tokens(instruction);
    words.resize(ex.input.query_len);
    ex.span = find_argument_span(words, *gt.arg);
  }
  return ex;
}

double op_loss(const OpHeadWeights& w, std::span<const OpExample> batch) {
  double loss = 0.0;
  for (const auto& ex : batch) loss += example_loss(op_scores(w, ex.input), ex);
  return loss / static_cast<double>(batch.size());
}

double op_loss_and_grad(const OpHeadWeights& w, std::span<const OpExample> batch, OpHeadWeights& grad) {
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  Forward f;
  for (const auto& ex : batch) {
    f.out = text_forward(w.text, ex.input, &f.cache);
    score_into(w, ex.input, f.out, f.scores);
    loss += example_loss(f.scores, ex);

    Matrix d_out = Matrix::Zero(f.out.rows(), f.out.cols());
    const auto p_op = softmax(f.scores.op_logits);
    Eigen::RowVectorXd d_ops(3);
    for (std::size_t c = 0; c < 3; ++c) {
      d_ops(static_cast<Eigen::Index>(c)) = (p_op[c] - (c == ex.op_class ? 1.0 : 0.0)) * inv_b;
    }
    grad.op_w += f.out.row(0).transpose() * d_ops;
    grad.op_b += d_ops;
    d_out.row(0) += d_ops * w.op_w.transpose();

    if (ex.span) {
      const auto p_s = softmax(f.scores.start);
      const auto p_e = softmax(f.scores.end);
      for (std::size_t i = 0; i < p_s.size(); ++i) {
        const auto row = static_cast<Eigen::Index>(ex.input.query_begin + i);
        const double ds = (p_s[i] - (i == ex.span->first ? 1.0 : 0.0)) * inv_b;
        const double de = (p_e[i] - (i == ex.span->second ? 1.0 : 0.0)) * inv_b;
        grad.start_w.col(0) += ds * f.out.row(row).transpose();
        grad.end_w.col(0) += de * f.out.row(row).transpose();
        d_out.row(row) += ds * w.start_w.col(0).transpose() + de * w.end_w.col(0).transpose();
      }
    }
    text_backward(w.text, ex.input, f.cache, d_out, grad.text);
  }
  return loss * inv_b;
}

OpTrainResult train_op_head(const Dataset& data, const Vocab& vocab, const OpTrainConfig& cfg,
                            const PredictorSettings& settings, const EpochCallback& on_epoch) {
  if (!(cfg.lr > 0.0) || cfg.batch_size == 0 || cfg.epochs == 0) {
    throw ConfigError("op head training needs lr > 0, batch_size > 0, epochs > 0");
  }
  OpTrainResult result{OpHeadWeights::random(cfg.shape, mix_seed(cfg.seed, 3)), {}};
  OpHeadWeights& w = result.weights;
  OpHeadWeights grad = OpHeadWeights::zeros(cfg.shape);
  auto params = w.tensors();
  auto grads = grad.tensors();
  Adam adam(params, AdamConfig{cfg.lr});

  std::vector<OpExample> examples;
  for (const auto& task : data.tasks) {
    for (const auto& step : task.steps) {
      const Element& gt = step.document.at(step.gt_action.element_id);
      examples.push_back(make_op_example(task.instruction, step.history_text,
                                         option_text(step.document, gt, settings), step.gt_action.operation, vocab,
                                         cfg.shape.max_seq));
    }
  }
  if (examples.empty()) throw InvariantError("train_op_head: empty corpus");

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, 3000 + epoch));
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      std::vector<OpExample> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
      zero_all(grads);
      epoch_loss += op_loss_and_grad(w, batch, grad) * static_cast<double>(batch.size());
      adam.step(params, grads);
    }
    epoch_loss /= static_cast<double>(examples.size());
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

}  // namespace dvcr
