#include "dvcr/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "dvcr/error.hpp"

namespace dvcr {

std::vector<std::string> split_tokens(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<unk>", "<sep>", "<cls>"}) add(t);
}

void Vocab::add(std::string token) {
  index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocab Vocab::build(std::span<const std::string> texts, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts) {
    for (auto& tok : split_tokens(t)) ++counts[tok];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n >= min_count) ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (auto& [tok, n] : ranked) {
    if (!v.index_.count(tok)) v.add(tok);
  }
  return v;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

std::string Vocab::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

Vocab Vocab::parse(std::string_view text) {
  Vocab v;
  v.tokens_.clear();
  v.index_.clear();
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string tok(text.substr(pos, end - pos));
    if (tok.empty()) throw FormatError("vocab: empty token on line " + std::to_string(v.tokens_.size() + 1));
    if (v.index_.count(tok)) throw FormatError("vocab: duplicate token '" + tok + "'");
    v.add(std::move(tok));
    pos = end + 1;
  }
  const Vocab reserved;
  for (std::size_t i = 0; i < kReserved; ++i) {
    if (v.tokens_.size() <= i || v.tokens_[i] != reserved.tokens_[i]) {
      throw FormatError("vocab: reserved tokens missing or out of order");
    }
  }
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write vocab " + path.string());
  out << serialize();
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocab " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::vector<TokenId> tokenize(std::string_view s, const Vocab& v) {
  std::vector<TokenId> ids;
  for (const auto& t : split_tokens(s)) ids.push_back(v.id(t));
  return ids;
}

std::vector<std::string> corpus_texts(std::span<const Task> corpus) {
  std::vector<std::string> texts;
  for (const auto& task : corpus) {
    texts.push_back(task.instruction);
    for (const auto& step : task.steps) {
      for (const auto& e : step.document.elements) texts.push_back(element_html_text(e));
      texts.push_back(render_action(step.gt_action, step.document));
    }
  }
  texts.emplace_back("CLICK TYPE SELECT None <NBR>");
  return texts;
}

Vocab build_vocab(std::span<const Task> corpus, std::size_t min_count) {
  const auto texts = corpus_texts(corpus);
  return Vocab::build(texts, min_count);
}

}  // namespace dvcr
