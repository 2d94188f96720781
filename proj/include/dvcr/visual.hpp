#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dvcr/document.hpp"

namespace dvcr {

struct Rgb {
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;

  bool operator==(const Rgb&) const = default;
};

// Row-major 8-bit RGB raster.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // width * height * 3

  Image() = default;
  Image(std::size_t w, std::size_t h, Rgb fill = {255, 255, 255});

  Rgb at(std::size_t x, std::size_t y) const;
  void set(std::size_t x, std::size_t y, Rgb c);
  // Fills the pixel rectangle covered by the box, clipped to the image.
  void fill_rect(const BBox& box, Rgb c);

  bool operator==(const Image&) const = default;
};

// Binary P6 PPM with maxval 255. Errors carry the byte offset.
Image load_image(const std::filesystem::path& path);
Image decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const Image& img);
void save_image(const std::filesystem::path& path, const Image& img);

// Patch feature map, [row][col][dim] row-major.
struct FeatureGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t dim = 0;
  std::size_t patch = 1;  // pixels per cell side
  std::vector<double> data;

  FeatureGrid() = default;
  FeatureGrid(std::size_t rows, std::size_t cols, std::size_t dim, std::size_t patch = 1);

  double& operator()(std::size_t r, std::size_t c, std::size_t d) { return data[(r * cols + c) * dim + d]; }
  double operator()(std::size_t r, std::size_t c, std::size_t d) const { return data[(r * cols + c) * dim + d]; }
  bool empty() const { return rows == 0 || cols == 0; }

  bool operator==(const FeatureGrid&) const = default;
};

// Frozen visual feature provider.
class FeatureProvider {
 public:
  virtual ~FeatureProvider() = default;
  virtual FeatureGrid featurize(const Image& img) const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t patch() const = 0;
};

// Per-patch statistics: mean R, G, B, horizontal and vertical gradient
// energy of the gray channel, normalized patch center x and y, then zero
// padding up to d_v. Every value lies in [0, 1].
FeatureGrid patch_featurize(const Image& img, std::size_t patch, std::size_t d_v);

class PatchStatsFeaturizer final : public FeatureProvider {
 public:
  PatchStatsFeaturizer(std::size_t patch, std::size_t d_v);
  FeatureGrid featurize(const Image& img) const override { return patch_featurize(img, patch_, dim_); }
  std::size_t dim() const override { return dim_; }
  std::size_t patch() const override { return patch_; }

 private:
  std::size_t patch_;
  std::size_t dim_;
};

struct RoiShape {
  std::size_t out_h = 1;
  std::size_t out_w = 1;
  std::size_t sampling = 2;
};

// ROI Align over a pixel-space box. Cell (r, c) is centered at
// (c + 0.5, r + 0.5) in grid units, bilinear weights are clamped at the
// border, each output bin averages sampling x sampling interior points.
// Returns out_h * out_w * dim values, bin-major.
std::vector<double> roi_align(const FeatureGrid& grid, const BBox& box, RoiShape shape = {});

// roi_align over the whole grid extent with a 1x1 output and 2x2 sampling.
std::vector<double> whole_image_feature(const FeatureGrid& grid);

// Two-layer visual projection: relu(f W1 + b1) W2 + b2, f a row vector.
struct Projection {
  Eigen::MatrixXd w1;  // d_v x d_h
  Eigen::MatrixXd b1;  // 1 x d_h
  Eigen::MatrixXd w2;  // d_h x d_model
  Eigen::MatrixXd b2;  // 1 x d_model

  static Projection zeros(std::size_t d_v, std::size_t d_h, std::size_t d_model);
  std::size_t d_v() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t d_h() const { return static_cast<std::size_t>(w1.cols()); }
  std::size_t d_model() const { return static_cast<std::size_t>(w2.cols()); }
};

Eigen::RowVectorXd project(std::span<const double> feat, const Projection& p);

}  // namespace dvcr
