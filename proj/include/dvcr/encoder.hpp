#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dvcr/rng.hpp"

namespace dvcr {

using Matrix = Eigen::MatrixXd;

// A named reference to one trainable tensor.
struct TensorRef {
  std::string name;
  Matrix* value;
};

struct EncoderShape {
  std::size_t d_model = 64;
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn = 128;

  bool operator==(const EncoderShape&) const = default;
};

struct EncoderLayer {
  Matrix ln1_g, ln1_b;      // 1 x d
  Matrix wq, wk, wv, wo;    // d x d
  Matrix bq, bk, bv, bo;    // 1 x d
  Matrix ln2_g, ln2_b;      // 1 x d
  Matrix ff_w1, ff_b1;      // d x ffn, 1 x ffn
  Matrix ff_w2, ff_b2;      // ffn x d, 1 x d
};

// Stack of pre-layer-norm self-attention blocks followed by a final norm.
struct EncoderParams {
  EncoderShape shape;
  std::vector<EncoderLayer> layers;
  Matrix lnf_g, lnf_b;

  static EncoderParams zeros(const EncoderShape& shape);
  static EncoderParams random(const EncoderShape& shape, Rng& rng);

  void append_tensors(const std::string& prefix, std::vector<TensorRef>& out);
};

struct LayerNormCache {
  Matrix xhat;
  Eigen::VectorXd rstd;
};

struct EncoderLayerCache {
  Matrix x_in;
  LayerNormCache ln1;
  Matrix a, q, k, v;
  std::vector<Matrix> probs;  // one L x L matrix per head
  Matrix attn;                // concatenated head outputs, L x d
  Matrix x_mid;
  LayerNormCache ln2;
  Matrix b;
  Matrix pre_act;  // L x ffn
  Matrix act;
};

struct EncoderCache {
  std::vector<EncoderLayerCache> layers;
  LayerNormCache lnf;
};

// Forward pass over an L x d input; fills `cache` when non-null.
Matrix encoder_forward(const EncoderParams& p, const Matrix& x, EncoderCache* cache);

// Backward pass given dL/d(output); accumulates parameter gradients into
// `grad` (same shapes as `p`) and returns dL/d(input).
Matrix encoder_backward(const EncoderParams& p, const EncoderCache& cache, const Matrix& d_out,
                        EncoderParams& grad);

Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b, LayerNormCache* cache);

inline constexpr double kLayerNormEps = 1e-5;

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const std::vector<TensorRef>& params, AdamConfig cfg);

  // One update with the gradients in `grads` (same order and shapes).
  void step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads);
  std::uint64_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::uint64_t t_ = 0;
};

void zero_all(const std::vector<TensorRef>& tensors);

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

double sigmoid(double z);

// log(1 + exp(z)) without overflow.
double softplus(double z);

}  // namespace dvcr
