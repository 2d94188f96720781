#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dvcr/encoder.hpp"
#include "dvcr/tokenizer.hpp"
#include "dvcr/weights_io.hpp"

namespace dvcr {

struct TextModelShape {
  std::size_t vocab = Vocab::kReserved;
  std::size_t d_model = 64;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn = 128;
  std::size_t max_seq = 256;

  EncoderShape encoder() const { return {d_model, layers, heads, ffn}; }
  std::map<std::string, std::string> to_config() const;
  static TextModelShape from_config(const WeightsFile& f);
  bool operator==(const TextModelShape&) const = default;
};

// Token + position + shared-token embeddings feeding the shared encoder
// architecture.
struct TextModel {
  TextModelShape shape;
  Matrix tok_emb;
  Matrix pos_emb;
  Matrix shared_emb;  // 2 x d: row 1 marks tokens found in both query and body
  EncoderParams encoder;

  static TextModel zeros(const TextModelShape& shape);
  static TextModel random(const TextModelShape& shape, Rng& rng);
  void append_tensors(std::vector<TensorRef>& out);
};

// [CLS] query [SEP] history [SEP] body
struct TextInput {
  std::vector<TokenId> ids;
  // Per position: 1 when a non-reserved query token also occurs in the body,
  // or a body token also occurs in the query.
  std::vector<std::uint8_t> shared;
  std::size_t query_begin = 1;
  std::size_t query_len = 0;
};

// Cuts history tail, then body tail, then query tail to fit max_seq.
TextInput build_text_input(std::span<const TokenId> query, std::span<const TokenId> history,
                           std::span<const TokenId> body, std::size_t max_seq);

std::vector<TokenId> join_history_tokens(std::span<const std::string> history, const Vocab& vocab);

struct TextCache {
  EncoderCache enc;
};

Matrix text_forward(const TextModel& m, const TextInput& in, TextCache* cache);

// Accumulates gradients for the embeddings and encoder into `grad`.
void text_backward(const TextModel& m, const TextInput& in, const TextCache& cache, const Matrix& d_out,
                   TextModel& grad);

}  // namespace dvcr
