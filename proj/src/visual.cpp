#include "dvcr/visual.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

#include "dvcr/error.hpp"

namespace dvcr {

Image::Image(std::size_t w, std::size_t h, Rgb fill) : width(w), height(h), pixels(w * h * 3) {
  for (std::size_t i = 0; i < w * h; ++i) {
    pixels[3 * i] = fill.r;
    pixels[3 * i + 1] = fill.g;
    pixels[3 * i + 2] = fill.b;
  }
}

Rgb Image::at(std::size_t x, std::size_t y) const {
  const std::size_t i = (y * width + x) * 3;
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void Image::set(std::size_t x, std::size_t y, Rgb c) {
  const std::size_t i = (y * width + x) * 3;
  pixels[i] = c.r;
  pixels[i + 1] = c.g;
  pixels[i + 2] = c.b;
}

void Image::fill_rect(const BBox& box, Rgb c) {
  const auto clip = [](double v, std::size_t hi) {
    return static_cast<std::size_t>(std::clamp(std::round(v), 0.0, static_cast<double>(hi)));
  };
  const std::size_t x0 = clip(box.x, width);
  const std::size_t x1 = clip(box.x + box.w, width);
  const std::size_t y0 = clip(box.y, height);
  const std::size_t y1 = clip(box.y + box.h, height);
  for (std::size_t y = y0; y < y1; ++y) {
    for (std::size_t x = x0; x < x1; ++x) set(x, y, c);
  }
}

namespace {

class PpmReader {
 public:
  explicit PpmReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError("PPM: " + what + " at byte offset " + std::to_string(pos_));
  }

  void skip_space() {
    while (pos_ < bytes_.size() && std::isspace(bytes_[pos_])) ++pos_;
  }

  std::size_t read_uint() {
    skip_space();
    if (pos_ >= bytes_.size()) fail("unexpected end of header");
    if (!std::isdigit(bytes_[pos_])) fail("expected a decimal number");
    std::size_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > (1u << 24)) fail("header value too large");
      ++pos_;
    }
    return v;
  }

  Image read() {
    if (bytes_.size() < 2 || bytes_[0] != 'P' || bytes_[1] != '6') fail("missing P6 magic");
    pos_ = 2;
    const std::size_t w = read_uint();
    const std::size_t h = read_uint();
    const std::size_t maxval = read_uint();
    if (maxval != 255) fail("maxval must be 255");
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail("expected whitespace after maxval");
    ++pos_;
    const std::size_t need = w * h * 3;
    if (bytes_.size() - pos_ < need) {
      pos_ = bytes_.size();
      fail("truncated pixel data (need " + std::to_string(need) + " bytes)");
    }
    Image img;
    img.width = w;
    img.height = h;
    img.pixels.assign(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + need));
    return img;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Image decode_ppm(std::span<const std::uint8_t> bytes) { return PpmReader(bytes).read(); }

Image load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const FormatError& err) {
    throw FormatError(path.string() + ": " + err.what());
  }
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

void save_image(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_ppm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write image " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing image " + path.string());
}

FeatureGrid::FeatureGrid(std::size_t r, std::size_t c, std::size_t d, std::size_t p)
    : rows(r), cols(c), dim(d), patch(p), data(r * c * d, 0.0) {}

FeatureGrid patch_featurize(const Image& img, std::size_t patch, std::size_t d_v) {
  if (patch == 0) throw InvariantError("patch size must be >= 1");
  if (d_v < 7) throw InvariantError("d_v must be >= 7 to hold the patch statistics");
  const std::size_t rows = (img.height + patch - 1) / patch;
  const std::size_t cols = (img.width + patch - 1) / patch;
  FeatureGrid grid(rows, cols, d_v, patch);

  auto gray = [&](std::size_t x, std::size_t y) {
    const Rgb c = img.at(x, y);
    return (static_cast<double>(c.r) + c.g + c.b) / (3.0 * 255.0);
  };

  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t y0 = r * patch;
    const std::size_t y1 = std::min(y0 + patch, img.height);
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t x0 = c * patch;
      const std::size_t x1 = std::min(x0 + patch, img.width);
      // integer channel sums keep the means exact
      std::uint64_t sr = 0, sg = 0, sb = 0;
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) {
          const Rgb px = img.at(x, y);
          sr += px.r;
          sg += px.g;
          sb += px.b;
        }
      }
      const double count = static_cast<double>((y1 - y0) * (x1 - x0));
      double gh = 0.0;
      std::size_t nh = 0;
      for (std::size_t y = y0; y < y1; ++y) {
        for (std::size_t x = x0; x + 1 < x1; ++x) {
          const double d = gray(x + 1, y) - gray(x, y);
          gh += d * d;
          ++nh;
        }
      }
      double gv = 0.0;
      std::size_t nv = 0;
      for (std::size_t y = y0; y + 1 < y1; ++y) {
        for (std::size_t x = x0; x < x1; ++x) {
          const double d = gray(x, y + 1) - gray(x, y);
          gv += d * d;
          ++nv;
        }
      }
      grid(r, c, 0) = static_cast<double>(sr) / (255.0 * count);
      grid(r, c, 1) = static_cast<double>(sg) / (255.0 * count);
      grid(r, c, 2) = static_cast<double>(sb) / (255.0 * count);
      grid(r, c, 3) = nh ? gh / static_cast<double>(nh) : 0.0;
      grid(r, c, 4) = nv ? gv / static_cast<double>(nv) : 0.0;
      grid(r, c, 5) = (static_cast<double>(x0 + x1) / 2.0) / static_cast<double>(img.width);
      grid(r, c, 6) = (static_cast<double>(y0 + y1) / 2.0) / static_cast<double>(img.height);
    }
  }
  return grid;
}

PatchStatsFeaturizer::PatchStatsFeaturizer(std::size_t patch, std::size_t d_v) : patch_(patch), dim_(d_v) {
  if (patch == 0) throw ConfigError("patch must be >= 1");
  if (d_v < 7) throw ConfigError("d_v must be >= 7");
}

namespace {

// Bilinear sample at continuous grid coordinates (u, v), folded into the
// running mean `out` as sample number `k` (1-based). The lerp form and the
// running mean both leave constant inputs exact.
void bilinear_accumulate(const FeatureGrid& g, double u, double v, std::size_t k, double* out) {
  const double fx = std::clamp(u - 0.5, 0.0, static_cast<double>(g.cols - 1));
  const double fy = std::clamp(v - 0.5, 0.0, static_cast<double>(g.rows - 1));
  const std::size_t x0 = static_cast<std::size_t>(fx);
  const std::size_t y0 = static_cast<std::size_t>(fy);
  const std::size_t x1 = std::min(x0 + 1, g.cols - 1);
  const std::size_t y1 = std::min(y0 + 1, g.rows - 1);
  const double lx = fx - static_cast<double>(x0);
  const double ly = fy - static_cast<double>(y0);
  const double* p00 = &g.data[(y0 * g.cols + x0) * g.dim];
  const double* p01 = &g.data[(y0 * g.cols + x1) * g.dim];
  const double* p10 = &g.data[(y1 * g.cols + x0) * g.dim];
  const double* p11 = &g.data[(y1 * g.cols + x1) * g.dim];
  const double inv_k = 1.0 / static_cast<double>(k);
  for (std::size_t d = 0; d < g.dim; ++d) {
    const double top = p00[d] + lx * (p01[d] - p00[d]);
    const double bottom = p10[d] + lx * (p11[d] - p10[d]);
    const double value = top + ly * (bottom - top);
    out[d] += (value - out[d]) * inv_k;
  }
}

}  // namespace

std::vector<double> roi_align(const FeatureGrid& grid, const BBox& box, RoiShape shape) {
  if (grid.empty()) throw InvariantError("roi_align on an empty feature grid");
  if (shape.out_h == 0 || shape.out_w == 0 || shape.sampling == 0) {
    throw InvariantError("roi_align output size and sampling must be >= 1");
  }
  if (!is_valid(box)) throw InvariantError("roi_align box must be finite with w,h >= 0");
  const double patch = static_cast<double>(grid.patch);
  const double extent_w = static_cast<double>(grid.cols) * patch;
  const double extent_h = static_cast<double>(grid.rows) * patch;
  if (box.x > extent_w || box.y > extent_h || box.x + box.w < 0.0 || box.y + box.h < 0.0) {
    throw InvariantError("roi_align box lies fully outside the feature grid");
  }

  const double gx = box.x / patch;
  const double gy = box.y / patch;
  const double bin_w = box.w / patch / static_cast<double>(shape.out_w);
  const double bin_h = box.h / patch / static_cast<double>(shape.out_h);
  const double s = static_cast<double>(shape.sampling);

  std::vector<double> out(shape.out_h * shape.out_w * grid.dim, 0.0);
  for (std::size_t oy = 0; oy < shape.out_h; ++oy) {
    for (std::size_t ox = 0; ox < shape.out_w; ++ox) {
      double* bin = &out[(oy * shape.out_w + ox) * grid.dim];
      std::size_t k = 0;
      for (std::size_t iy = 0; iy < shape.sampling; ++iy) {
        const double v = gy + bin_h * (static_cast<double>(oy) + (static_cast<double>(iy) + 0.5) / s);
        for (std::size_t ix = 0; ix < shape.sampling; ++ix) {
          const double u = gx + bin_w * (static_cast<double>(ox) + (static_cast<double>(ix) + 0.5) / s);
          bilinear_accumulate(grid, u, v, ++k, bin);
        }
      }
    }
  }
  return out;
}

std::vector<double> whole_image_feature(const FeatureGrid& grid) {
  const double patch = static_cast<double>(grid.patch);
  const BBox full{0.0, 0.0, static_cast<double>(grid.cols) * patch, static_cast<double>(grid.rows) * patch};
  return roi_align(grid, full, RoiShape{1, 1, 2});
}

Projection Projection::zeros(std::size_t d_v, std::size_t d_h, std::size_t d_model) {
  const auto v = static_cast<Eigen::Index>(d_v);
  const auto h = static_cast<Eigen::Index>(d_h);
  const auto m = static_cast<Eigen::Index>(d_model);
  return {Eigen::MatrixXd::Zero(v, h), Eigen::MatrixXd::Zero(1, h), Eigen::MatrixXd::Zero(h, m),
          Eigen::MatrixXd::Zero(1, m)};
}

Eigen::RowVectorXd project(std::span<const double> feat, const Projection& p) {
  if (feat.size() != p.d_v() || p.b1.cols() != p.w1.cols() || p.w2.rows() != p.w1.cols() ||
      p.b2.cols() != p.w2.cols()) {
    throw InvariantError("projection shape mismatch");
  }
  Eigen::Map<const Eigen::RowVectorXd> f(feat.data(), static_cast<Eigen::Index>(feat.size()));
  Eigen::RowVectorXd hidden = (f * p.w1 + p.b1).cwiseMax(0.0);
  return hidden * p.w2 + p.b2;
}

}  // namespace dvcr
