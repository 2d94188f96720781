#include "dvcr/text_model.hpp"

#include <algorithm>

#include "dvcr/error.hpp"

namespace dvcr {

std::map<std::string, std::string> TextModelShape::to_config() const {
  return {
      {"vocab", std::to_string(vocab)}, {"d_model", std::to_string(d_model)}, {"layers", std::to_string(layers)},
      {"heads", std::to_string(heads)}, {"ffn", std::to_string(ffn)},         {"max_seq", std::to_string(max_seq)},
  };
}

TextModelShape TextModelShape::from_config(const WeightsFile& f) {
  TextModelShape s;
  s.vocab = config_size(f, "vocab");
  s.d_model = config_size(f, "d_model");
  s.layers = config_size(f, "layers");
  s.heads = config_size(f, "heads");
  s.ffn = config_size(f, "ffn");
  s.max_seq = config_size(f, "max_seq");
  if (s.heads == 0 || s.d_model % s.heads != 0) throw FormatError("weights: heads must divide d_model");
  return s;
}

TextModel TextModel::zeros(const TextModelShape& shape) {
  TextModel m;
  m.shape = shape;
  const auto d = static_cast<Eigen::Index>(shape.d_model);
  m.tok_emb = Matrix::Zero(static_cast<Eigen::Index>(shape.vocab), d);
  m.pos_emb = Matrix::Zero(static_cast<Eigen::Index>(shape.max_seq), d);
  m.shared_emb = Matrix::Zero(2, d);
  m.encoder = EncoderParams::zeros(shape.encoder());
  return m;
}

TextModel TextModel::random(const TextModelShape& shape, Rng& rng) {
  TextModel m = zeros(shape);
  m.tok_emb = random_matrix(m.tok_emb.rows(), m.tok_emb.cols(), 1.0, rng);
  m.pos_emb = random_matrix(m.pos_emb.rows(), m.pos_emb.cols(), 0.1, rng);
  m.shared_emb = random_matrix(2, m.shared_emb.cols(), 1.0, rng);
  m.encoder = EncoderParams::random(shape.encoder(), rng);
  return m;
}

void TextModel::append_tensors(std::vector<TensorRef>& out) {
  out.push_back({"tok_emb", &tok_emb});
  out.push_back({"pos_emb", &pos_emb});
  out.push_back({"shared_emb", &shared_emb});
  encoder.append_tensors("enc.", out);
}

TextInput build_text_input(std::span<const TokenId> query, std::span<const TokenId> history,
                           std::span<const TokenId> body, std::size_t max_seq) {
  if (max_seq < 3) throw InvariantError("max_seq too small for the text layout");
  std::size_t q = query.size(), h = history.size(), b = body.size();
  std::size_t over = (3 + q + h + b > max_seq) ? 3 + q + h + b - max_seq : 0;
  const std::size_t cut_h = std::min(h, over);
  h -= cut_h;
  over -= cut_h;
  const std::size_t cut_b = std::min(b, over);
  b -= cut_b;
  over -= cut_b;
  q -= std::min(q, over);

  TextInput in;
  in.ids.reserve(3 + q + h + b);
  in.ids.push_back(Vocab::kCls);
  in.ids.insert(in.ids.end(), query.begin(), query.begin() + static_cast<std::ptrdiff_t>(q));
  in.ids.push_back(Vocab::kSep);
  in.ids.insert(in.ids.end(), history.begin(), history.begin() + static_cast<std::ptrdiff_t>(h));
  in.ids.push_back(Vocab::kSep);
  in.ids.insert(in.ids.end(), body.begin(), body.begin() + static_cast<std::ptrdiff_t>(b));
  in.query_begin = 1;
  in.query_len = q;

  const std::size_t body_begin = 3 + q + h;
  auto occurs = [&](std::size_t from, std::size_t to, TokenId id) {
    return std::find(in.ids.begin() + static_cast<std::ptrdiff_t>(from), in.ids.begin() + static_cast<std::ptrdiff_t>(to),
                     id) != in.ids.begin() + static_cast<std::ptrdiff_t>(to);
  };
  in.shared.assign(in.ids.size(), 0);
  for (std::size_t i = 1; i < 1 + q; ++i) {
    in.shared[i] = in.ids[i] >= Vocab::kReserved && occurs(body_begin, in.ids.size(), in.ids[i]);
  }
  for (std::size_t i = body_begin; i < in.ids.size(); ++i) {
    in.shared[i] = in.ids[i] >= Vocab::kReserved && occurs(1, 1 + q, in.ids[i]);
  }
  return in;
}

std::vector<TokenId> join_history_tokens(std::span<const std::string> history, const Vocab& vocab) {
  std::vector<TokenId> out;
  for (const auto& h : history) {
    auto ids = tokenize(h, vocab);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  return out;
}

Matrix text_forward(const TextModel& m, const TextInput& in, TextCache* cache) {
  const auto n = static_cast<Eigen::Index>(in.ids.size());
  if (in.ids.size() > m.shape.max_seq) throw InvariantError("text input longer than max_seq");
  Matrix x(n, static_cast<Eigen::Index>(m.shape.d_model));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    x.row(i) = m.tok_emb.row(in.ids[k]) + m.pos_emb.row(i) + m.shared_emb.row(in.shared[k]);
  }
  return encoder_forward(m.encoder, x, cache ? &cache->enc : nullptr);
}

void text_backward(const TextModel& m, const TextInput& in, const TextCache& cache, const Matrix& d_out,
                   TextModel& grad) {
  const Matrix dx = encoder_backward(m.encoder, cache.enc, d_out, grad.encoder);
  for (Eigen::Index i = 0; i < dx.rows(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    grad.tok_emb.row(in.ids[k]) += dx.row(i);
    grad.pos_emb.row(i) += dx.row(i);
    grad.shared_emb.row(in.shared[k]) += dx.row(i);
  }
}

}  // namespace dvcr
