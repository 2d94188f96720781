#include "dvcr/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "dvcr/error.hpp"

namespace dvcr {

namespace {

static_assert(std::endian::native == std::endian::little, "weights codec assumes a little-endian host");

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : b_(b) {}

  void need(std::size_t n) const {
    if (b_.size() - pos_ < n) {
      throw FormatError("weights: truncated at byte offset " + std::to_string(pos_));
    }
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_weights(const std::map<std::string, std::string>& config,
                                         const std::vector<TensorRef>& tensors) {
  std::vector<std::uint8_t> out{'D', 'V', 'C', 'R'};
  put_u32(out, kWeightsVersion);
  std::string text;
  for (const auto& [k, v] : config) text += k + "=" + v + "\n";
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out.insert(out.end(), t.name.begin(), t.name.end());
    const Matrix& m = *t.value;
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
    }
  }
  return out;
}

WeightsFile decode_weights(const std::vector<std::uint8_t>& bytes) {
  Reader in(bytes);
  if (in.str(4) != "DVCR") throw FormatError("weights: bad magic");
  const std::uint32_t version = in.u32();
  if (version != kWeightsVersion) {
    throw FormatError("weights: unsupported format version " + std::to_string(version));
  }
  WeightsFile f;
  const std::string text = in.str(in.u32());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = text.find('\n', pos);
    const std::string line = text.substr(pos, end - pos);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("weights: malformed config line '" + line + "'");
    f.config[line.substr(0, eq)] = line.substr(eq + 1);
    if (end == std::string::npos) break;
    pos = end + 1;
  }
  const std::uint32_t count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = in.str(in.u32());
    const std::uint32_t rows = in.u32();
    const std::uint32_t cols = in.u32();
    in.need(static_cast<std::size_t>(rows) * cols * 8);
    Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) m(r, c) = in.f64();
    }
    f.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!in.done()) throw FormatError("weights: trailing bytes after last tensor");
  return f;
}

void write_weights(const std::filesystem::path& path, const std::map<std::string, std::string>& config,
                   const std::vector<TensorRef>& tensors) {
  const auto bytes = encode_weights(config, tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write weights " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing weights " + path.string());
}

WeightsFile read_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_weights(bytes);
  } catch (const FormatError& err) {
    throw FormatError(path.string() + ": " + err.what());
  }
}

void assign_tensors(const WeightsFile& file, const std::vector<TensorRef>& dest) {
  if (file.tensors.size() != dest.size()) {
    throw FormatError("weights: expected " + std::to_string(dest.size()) + " tensors, file has " +
                      std::to_string(file.tensors.size()));
  }
  std::set<std::string> seen;
  for (const auto& d : dest) {
    const Matrix* src = nullptr;
    for (const auto& [name, m] : file.tensors) {
      if (name == d.name) src = &m;
    }
    if (!src) throw FormatError("weights: missing tensor '" + d.name + "'");
    if (src->rows() != d.value->rows() || src->cols() != d.value->cols()) {
      throw FormatError("weights: tensor '" + d.name + "' has shape " + std::to_string(src->rows()) + "x" +
                        std::to_string(src->cols()) + ", config expects " + std::to_string(d.value->rows()) +
                        "x" + std::to_string(d.value->cols()));
    }
    if (!seen.insert(d.name).second) throw FormatError("weights: duplicate tensor '" + d.name + "'");
    *d.value = *src;
  }
}

std::string config_string(const WeightsFile& f, const std::string& key) {
  auto it = f.config.find(key);
  if (it == f.config.end()) throw FormatError("weights: missing config key '" + key + "'");
  return it->second;
}

std::size_t config_size(const WeightsFile& f, const std::string& key) {
  const std::string v = config_string(f, key);
  try {
    std::size_t used = 0;
    const unsigned long long n = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw FormatError("weights: config key '" + key + "' is not a count: '" + v + "'");
  }
}

}  // namespace dvcr
