#include "dvcr/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dvcr/error.hpp"
#include "dvcr/weights_io.hpp"

namespace dvcr {

void TrainConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be positive");
  };
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be a positive number");
  positive(batch_size, "batch_size");
  positive(epochs, "epochs");
  positive(negatives_per_positive, "negatives_per_positive");
  positive(d_model, "d_model");
  positive(layers, "layers");
  positive(heads, "heads");
  positive(ffn, "ffn");
  positive(max_seq, "max_seq");
  if (d_model % heads != 0) throw ConfigError("heads must divide d_model");
}

RankerShape RankerShape::from(const TrainConfig& cfg, const VisualConfig& vis, std::size_t vocab_size) {
  RankerShape s;
  s.vocab = vocab_size;
  s.d_model = cfg.d_model;
  s.layers = cfg.layers;
  s.heads = cfg.heads;
  s.ffn = cfg.ffn;
  s.max_seq = cfg.max_seq;
  s.m = cfg.m;
  s.d_v = vis.d_v;
  s.d_h = vis.d_h;
  s.visual_mode = vis.mode;
  return s;
}

RankerWeights RankerWeights::zeros(const RankerShape& shape) {
  const auto d = static_cast<Eigen::Index>(shape.d_model);
  RankerWeights w;
  w.shape = shape;
  w.tok_emb = Matrix::Zero(static_cast<Eigen::Index>(shape.vocab), d);
  w.pos_emb = Matrix::Zero(static_cast<Eigen::Index>(shape.max_seq), d);
  w.rank_emb = Matrix::Zero(static_cast<Eigen::Index>(shape.m + 2), d);
  w.proj = Projection::zeros(shape.d_v, shape.d_h, shape.d_model);
  w.encoder = EncoderParams::zeros(shape.encoder());
  w.head_w = Matrix::Zero(d, 1);
  w.head_b = Matrix::Zero(1, 1);
  return w;
}

RankerWeights RankerWeights::random(const RankerShape& shape, std::uint64_t seed) {
  Rng rng(seed);
  RankerWeights w = zeros(shape);
  const auto d = static_cast<Eigen::Index>(shape.d_model);
  w.tok_emb = random_matrix(w.tok_emb.rows(), d, 1.0, rng);
  w.pos_emb = random_matrix(w.pos_emb.rows(), d, 0.1, rng);
  w.rank_emb = random_matrix(w.rank_emb.rows(), d, 0.5, rng);
  w.proj.w1 = random_matrix(w.proj.w1.rows(), w.proj.w1.cols(), 1.0 / std::sqrt(static_cast<double>(shape.d_v)), rng);
  w.proj.w2 = random_matrix(w.proj.w2.rows(), w.proj.w2.cols(), 1.0 / std::sqrt(static_cast<double>(shape.d_h)), rng);
  w.encoder = EncoderParams::random(shape.encoder(), rng);
  w.head_w = random_matrix(d, 1, 0.02, rng);
  return w;
}

std::vector<TensorRef> RankerWeights::tensors() {
  std::vector<TensorRef> out{
      {"tok_emb", &tok_emb}, {"pos_emb", &pos_emb}, {"rank_emb", &rank_emb}, {"proj.w1", &proj.w1},
      {"proj.b1", &proj.b1}, {"proj.w2", &proj.w2}, {"proj.b2", &proj.b2},
  };
  encoder.append_tensors("enc.", out);
  out.push_back({"head.w", &head_w});
  out.push_back({"head.b", &head_b});
  return out;
}

void RankerWeights::save(const std::filesystem::path& path) const {
  std::map<std::string, std::string> cfg{
      {"kind", "ranker"},
      {"vocab", std::to_string(shape.vocab)},
      {"d_model", std::to_string(shape.d_model)},
      {"layers", std::to_string(shape.layers)},
      {"heads", std::to_string(shape.heads)},
      {"ffn", std::to_string(shape.ffn)},
      {"max_seq", std::to_string(shape.max_seq)},
      {"m", std::to_string(shape.m)},
      {"d_v", std::to_string(shape.d_v)},
      {"d_h", std::to_string(shape.d_h)},
      {"visual_mode", std::string(to_string(shape.visual_mode))},
  };
  auto copy = *this;
  write_weights(path, cfg, copy.tensors());
}

RankerWeights RankerWeights::load(const std::filesystem::path& path) {
  const WeightsFile f = read_weights(path);
  if (config_string(f, "kind") != "ranker") throw FormatError(path.string() + ": not a ranker weights file");
  RankerShape s;
  s.vocab = config_size(f, "vocab");
  s.d_model = config_size(f, "d_model");
  s.layers = config_size(f, "layers");
  s.heads = config_size(f, "heads");
  s.ffn = config_size(f, "ffn");
  s.max_seq = config_size(f, "max_seq");
  s.m = config_size(f, "m");
  s.d_v = config_size(f, "d_v");
  s.d_h = config_size(f, "d_h");
  auto mode = parse_visual_mode(config_string(f, "visual_mode"));
  if (!mode) throw FormatError(path.string() + ": bad visual_mode");
  s.visual_mode = *mode;
  if (s.heads == 0 || s.d_model % s.heads != 0) throw FormatError(path.string() + ": heads must divide d_model");
  RankerWeights w = zeros(s);
  assign_tensors(f, w.tensors());
  return w;
}

namespace {

std::vector<TokenId> history_tokens(std::span<const std::string> history, const Vocab& vocab) {
  std::vector<TokenId> out;
  for (const auto& h : history) {
    auto ids = tokenize(h, vocab);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

}  // namespace

DualViewInput assemble(const StepView& view, const Element& candidate, const NeighborList& nbrs,
                       const RankerWeights& w, const Vocab& vocab) {
  if (nbrs.candidate_id != candidate.id) throw InvariantError("neighbor list belongs to a different candidate");
  if (nbrs.size() > w.shape.m) {
    throw InvariantError("neighbor count " + std::to_string(nbrs.size()) + " exceeds the ranker's M = " +
                         std::to_string(w.shape.m));
  }
  const std::size_t none = w.none_rank();
  DualViewInput in;

  std::vector<const Element*> elems{&candidate};
  for (const auto& n : nbrs.neighbors) elems.push_back(&view.doc.at(n.element_id));

  std::vector<std::vector<TokenId>> texts;
  for (std::size_t r = 0; r < elems.size(); ++r) {
    VisualToken vt;
    vt.feature = element_feature(view.grid, elems[r]->bbox, w.shape.visual_mode, w.shape.d_v);
    vt.projected = project(vt.feature, w.proj);
    vt.rank = r;
    in.visual_prefix.push_back(std::move(vt));
    texts.push_back(tokenize(element_html_text(*elems[r]), vocab));
  }
  in.query_tokens = tokenize(view.instruction, vocab);
  in.history_tokens = history_tokens(view.history, vocab);

  // Truncation: history tail, then neighbor text last-neighbor-first, then
  // query tail. The visual prefix and candidate text are never cut.
  auto total = [&] {
    std::size_t n = 1 + in.visual_prefix.size() + 3 + in.query_tokens.size() + in.history_tokens.size();
    n += texts[0].size();
    for (std::size_t r = 1; r < texts.size(); ++r) n += 1 + texts[r].size();
    return n;
  };
  std::size_t length = total();
  std::size_t kept_neighbors = texts.size() - 1;
  while (length > w.shape.max_seq) {
    if (!in.history_tokens.empty()) {
      const std::size_t cut = std::min(in.history_tokens.size(), length - w.shape.max_seq);
      in.history_tokens.resize(in.history_tokens.size() - cut);
      length -= cut;
    } else if (kept_neighbors > 0) {
      auto& block = texts[kept_neighbors];
      if (block.empty()) {
        --kept_neighbors;
        --length;  // its separator
      } else {
        block.pop_back();
        --length;
      }
    } else if (!in.query_tokens.empty()) {
      in.query_tokens.pop_back();
      --length;
    } else {
      throw InvariantError("candidate text and visual prefix alone exceed max_seq");
    }
  }
  texts.resize(kept_neighbors + 1);

  auto& seq = in.sequence;
  auto token = [&](TokenId id, std::size_t rank) { seq.push_back({SeqItem::Kind::kToken, id, 0, rank}); };
  token(in.cls, none);
  for (std::size_t r = 0; r < in.visual_prefix.size(); ++r) seq.push_back({SeqItem::Kind::kVisual, 0, r, r});
  token(Vocab::kSep, none);
  for (TokenId id : in.query_tokens) token(id, none);
  token(Vocab::kSep, none);
  for (TokenId id : in.history_tokens) token(id, none);
  token(Vocab::kSep, none);
  for (std::size_t r = 0; r < texts.size(); ++r) {
    if (r > 0) token(Vocab::kSep, none);
    for (TokenId id : texts[r]) {
      token(id, r);
      in.text_tokens.push_back({id, r});
    }
  }
  return in;
}

namespace {

struct ForwardCache {
  Matrix x;
  EncoderCache enc;
  Matrix out;
  std::vector<Eigen::RowVectorXd> proj_pre;  // f W1 + b1 per visual token
};

Matrix embed_impl(const DualViewInput& in, const RankerWeights& w, std::vector<Eigen::RowVectorXd>* proj_pre) {
  const auto n = static_cast<Eigen::Index>(in.sequence.size());
  if (in.sequence.size() > w.shape.max_seq) throw InvariantError("sequence longer than max_seq");
  std::vector<Eigen::RowVectorXd> visual;
  for (const auto& vt : in.visual_prefix) {
    Eigen::Map<const Eigen::RowVectorXd> f(vt.feature.data(), static_cast<Eigen::Index>(vt.feature.size()));
    Eigen::RowVectorXd pre = f * w.proj.w1 + w.proj.b1;
    visual.push_back(pre.cwiseMax(0.0) * w.proj.w2 + w.proj.b2);
    if (proj_pre) proj_pre->push_back(std::move(pre));
  }
  Matrix x(n, static_cast<Eigen::Index>(w.shape.d_model));
  for (Eigen::Index i = 0; i < n; ++i) {
    const SeqItem& it = in.sequence[static_cast<std::size_t>(i)];
    if (it.kind == SeqItem::Kind::kVisual) {
      x.row(i) = visual[it.visual];
    } else {
      x.row(i) = w.tok_emb.row(it.token);
    }
    x.row(i) += w.rank_emb.row(static_cast<Eigen::Index>(it.rank)) + w.pos_emb.row(i);
  }
  return x;
}

double forward(const DualViewInput& in, const RankerWeights& w, ForwardCache* cache) {
  if (cache) {
    cache->proj_pre.clear();
    cache->x = embed_impl(in, w, &cache->proj_pre);
    cache->out = encoder_forward(w.encoder, cache->x, &cache->enc);
    return cache->out.row(0).dot(w.head_w.col(0)) + w.head_b(0, 0);
  }
  const Matrix out = encoder_forward(w.encoder, embed_impl(in, w, nullptr), nullptr);
  return out.row(0).dot(w.head_w.col(0)) + w.head_b(0, 0);
}

}  // namespace

Matrix embed(const DualViewInput& in, const RankerWeights& w) { return embed_impl(in, w, nullptr); }

double score_logit(const DualViewInput& in, const RankerWeights& w) { return forward(in, w, nullptr); }

double score(const DualViewInput& in, const RankerWeights& w) { return sigmoid(score_logit(in, w)); }

double ranker_loss(const RankerWeights& w, std::span<const RankerExample> batch) {
  double loss = 0.0;
  for (const auto& ex : batch) {
    const double z = score_logit(ex.input, w);
    loss += softplus(z) - ex.label * z;
  }
  return loss / static_cast<double>(batch.size());
}

double ranker_loss_and_grad(const RankerWeights& w, std::span<const RankerExample> batch, RankerWeights& grad) {
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  ForwardCache cache;
  for (const auto& ex : batch) {
    const double z = forward(ex.input, w, &cache);
    loss += softplus(z) - ex.label * z;
    const double dz = (sigmoid(z) - ex.label) * inv_b;

    grad.head_w.col(0) += dz * cache.out.row(0).transpose();
    grad.head_b(0, 0) += dz;
    Matrix d_out = Matrix::Zero(cache.out.rows(), cache.out.cols());
    d_out.row(0) = dz * w.head_w.col(0).transpose();
    const Matrix dx = encoder_backward(w.encoder, cache.enc, d_out, grad.encoder);

    for (Eigen::Index i = 0; i < dx.rows(); ++i) {
      const SeqItem& it = ex.input.sequence[static_cast<std::size_t>(i)];
      grad.pos_emb.row(i) += dx.row(i);
      grad.rank_emb.row(static_cast<Eigen::Index>(it.rank)) += dx.row(i);
      if (it.kind == SeqItem::Kind::kToken) {
        grad.tok_emb.row(it.token) += dx.row(i);
        continue;
      }
      const auto& vt = ex.input.visual_prefix[it.visual];
      const Eigen::RowVectorXd& pre = cache.proj_pre[it.visual];
      const Eigen::RowVectorXd hidden = pre.cwiseMax(0.0);
      grad.proj.w2 += hidden.transpose() * dx.row(i);
      grad.proj.b2 += dx.row(i);
      const Eigen::RowVectorXd d_hidden =
          (dx.row(i) * w.proj.w2.transpose()).cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
      Eigen::Map<const Eigen::RowVectorXd> f(vt.feature.data(), static_cast<Eigen::Index>(vt.feature.size()));
      grad.proj.w1 += f.transpose() * d_hidden;
      grad.proj.b1 += d_hidden;
    }
  }
  return loss * inv_b;
}

RankerTrainResult train_ranker(const Dataset& data, const Vocab& vocab, const TrainConfig& cfg,
                               const VisualConfig& vis, NeighborSource source, const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.tasks.empty()) throw InvariantError("train_ranker: empty corpus");
  const RankerShape shape = RankerShape::from(cfg, vis, vocab.size());
  RankerTrainResult result{RankerWeights::random(shape, mix_seed(cfg.seed, 1)), {}, 0};
  RankerWeights& w = result.weights;
  RankerWeights grad = RankerWeights::zeros(shape);
  auto params = w.tensors();
  auto grads = grad.tensors();
  Adam adam(params, AdamConfig{cfg.lr});

  struct StepData {
    std::size_t task, step;
    std::vector<std::size_t> negatives;  // candidate pool minus the gt
    std::size_t gt;
  };
  std::vector<StepData> steps;
  for (std::size_t t = 0; t < data.tasks.size(); ++t) {
    for (std::size_t s = 0; s < data.tasks[t].steps.size(); ++s) {
      const HtmlDocument& doc = data.tasks[t].steps[s].document;
      const std::size_t gt = *doc.find(data.tasks[t].steps[s].gt_action.element_id);
      std::vector<std::size_t> pool;
      for (std::size_t i : candidate_indices(doc)) {
        if (i != gt) pool.push_back(i);
      }
      // an invisible gt cannot be assembled; a page without negatives has no contrast
      if (pool.empty() || !doc.elements[gt].visible) {
        ++result.skipped_steps;
        continue;
      }
      steps.push_back({t, s, std::move(pool), gt});
    }
  }
  if (steps.empty()) throw InvariantError("train_ranker: no step has both a positive and a negative");

  struct ExampleRef {
    std::size_t step;
    std::size_t element;
    double label;
  };
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(mix_seed(cfg.seed, 1000 + epoch));
    std::vector<ExampleRef> refs;
    for (std::size_t si = 0; si < steps.size(); ++si) {
      refs.push_back({si, steps[si].gt, 1.0});
      auto pool = steps[si].negatives;
      const std::size_t take = std::min(cfg.negatives_per_positive, pool.size());
      for (std::size_t i = 0; i < take; ++i) {
        std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
        refs.push_back({si, pool[i], 0.0});
      }
    }
    rng.shuffle(refs);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < refs.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, refs.size());
      std::vector<RankerExample> batch;
      for (std::size_t i = start; i < end; ++i) {
        const StepData& sd = steps[refs[i].step];
        const Task& task = data.tasks[sd.task];
        const Step& step = task.steps[sd.step];
        const StepView view{step.document, task.instruction, step.history_text, data.grid(sd.task, sd.step)};
        const Element& e = step.document.elements[refs[i].element];
        const NeighborList nbrs = neighbors(step.document, e.id, cfg.m, source, cfg.seed);
        batch.push_back({assemble(view, e, nbrs, w, vocab), refs[i].label});
      }
      zero_all(grads);
      const double loss = ranker_loss_and_grad(w, batch, grad);
      epoch_loss += loss * static_cast<double>(batch.size());
      adam.step(params, grads);
    }
    epoch_loss /= static_cast<double>(refs.size());
    result.epoch_loss.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);
  }
  return result;
}

std::vector<ScoredElement> rank_elements(const StepView& view, const RankerWeights& w, const Vocab& vocab,
                                         std::size_t m, std::size_t k, NeighborSource source,
                                         std::uint64_t neighbor_seed) {
  std::vector<ScoredElement> scored;
  for (std::size_t i : candidate_indices(view.doc)) {
    const Element& e = view.doc.elements[i];
    const NeighborList nbrs = neighbors(view.doc, e.id, m, source, neighbor_seed);
    const double z = score_logit(assemble(view, e, nbrs, w, vocab), w);
    scored.push_back({e.id, sigmoid(z), z});
  }
  // candidate_indices is in document order, so a stable sort keeps ties ordered
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredElement& a, const ScoredElement& b) { return a.logit > b.logit; });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

}  // namespace dvcr
