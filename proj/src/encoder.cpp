#include "dvcr/encoder.hpp"

#include <cmath>

#include "dvcr/error.hpp"

namespace dvcr {

namespace {

Matrix add_row(Matrix m, const Matrix& row) {
  m.rowwise() += row.row(0);
  return m;
}

void add_layer_tensors(const std::string& prefix, EncoderLayer& l, std::vector<TensorRef>& out) {
  out.push_back({prefix + "ln1_g", &l.ln1_g});
  out.push_back({prefix + "ln1_b", &l.ln1_b});
  out.push_back({prefix + "wq", &l.wq});
  out.push_back({prefix + "bq", &l.bq});
  out.push_back({prefix + "wk", &l.wk});
  out.push_back({prefix + "bk", &l.bk});
  out.push_back({prefix + "wv", &l.wv});
  out.push_back({prefix + "bv", &l.bv});
  out.push_back({prefix + "wo", &l.wo});
  out.push_back({prefix + "bo", &l.bo});
  out.push_back({prefix + "ln2_g", &l.ln2_g});
  out.push_back({prefix + "ln2_b", &l.ln2_b});
  out.push_back({prefix + "ff_w1", &l.ff_w1});
  out.push_back({prefix + "ff_b1", &l.ff_b1});
  out.push_back({prefix + "ff_w2", &l.ff_w2});
  out.push_back({prefix + "ff_b2", &l.ff_b2});
}

}  // namespace

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  Matrix m(rows, cols);
  // fill row-major so the draw order does not depend on Eigen's storage order
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = stddev * rng.normal();
  }
  return m;
}

EncoderParams EncoderParams::zeros(const EncoderShape& shape) {
  if (shape.heads == 0 || shape.d_model % shape.heads != 0) {
    throw ConfigError("heads must divide d_model");
  }
  const auto d = static_cast<Eigen::Index>(shape.d_model);
  const auto f = static_cast<Eigen::Index>(shape.ffn);
  EncoderParams p;
  p.shape = shape;
  for (std::size_t i = 0; i < shape.layers; ++i) {
    EncoderLayer l;
    l.ln1_g = Matrix::Zero(1, d);
    l.ln1_b = Matrix::Zero(1, d);
    l.wq = Matrix::Zero(d, d);
    l.wk = Matrix::Zero(d, d);
    l.wv = Matrix::Zero(d, d);
    l.wo = Matrix::Zero(d, d);
    l.bq = Matrix::Zero(1, d);
    l.bk = Matrix::Zero(1, d);
    l.bv = Matrix::Zero(1, d);
    l.bo = Matrix::Zero(1, d);
    l.ln2_g = Matrix::Zero(1, d);
    l.ln2_b = Matrix::Zero(1, d);
    l.ff_w1 = Matrix::Zero(d, f);
    l.ff_b1 = Matrix::Zero(1, f);
    l.ff_w2 = Matrix::Zero(f, d);
    l.ff_b2 = Matrix::Zero(1, d);
    p.layers.push_back(std::move(l));
  }
  p.lnf_g = Matrix::Zero(1, d);
  p.lnf_b = Matrix::Zero(1, d);
  return p;
}

EncoderParams EncoderParams::random(const EncoderShape& shape, Rng& rng) {
  EncoderParams p = zeros(shape);
  const auto d = static_cast<Eigen::Index>(shape.d_model);
  const auto f = static_cast<Eigen::Index>(shape.ffn);
  const double in_d = 1.0 / std::sqrt(static_cast<double>(shape.d_model));
  const double in_f = 1.0 / std::sqrt(static_cast<double>(shape.ffn));
  const double residual = 1.0 / std::sqrt(2.0 * static_cast<double>(std::max<std::size_t>(shape.layers, 1)));
  for (auto& l : p.layers) {
    l.ln1_g.setOnes();
    l.ln2_g.setOnes();
    l.wq = random_matrix(d, d, in_d, rng);
    l.wk = random_matrix(d, d, in_d, rng);
    l.wv = random_matrix(d, d, in_d, rng);
    l.wo = random_matrix(d, d, in_d * residual, rng);
    l.ff_w1 = random_matrix(d, f, in_d, rng);
    l.ff_w2 = random_matrix(f, d, in_f * residual, rng);
  }
  p.lnf_g.setOnes();
  return p;
}

void EncoderParams::append_tensors(const std::string& prefix, std::vector<TensorRef>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    add_layer_tensors(prefix + "layer" + std::to_string(i) + ".", layers[i], out);
  }
  out.push_back({prefix + "lnf_g", &lnf_g});
  out.push_back({prefix + "lnf_b", &lnf_b});
}

Matrix layer_norm(const Matrix& x, const Matrix& g, const Matrix& b, LayerNormCache* cache) {
  const Eigen::Index n = x.rows();
  const double d = static_cast<double>(x.cols());
  Matrix xhat(n, x.cols());
  Eigen::VectorXd rstd(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = x.row(i).sum() / d;
    const auto centered = x.row(i).array() - mu;
    const double var = centered.square().sum() / d;
    rstd(i) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(i) = centered * rstd(i);
  }
  Matrix y = xhat.array().rowwise() * g.row(0).array();
  y.rowwise() += b.row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

namespace {

Matrix layer_norm_backward(const LayerNormCache& c, const Matrix& g, const Matrix& dy, Matrix& dg, Matrix& db) {
  dg += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  db += dy.colwise().sum();
  const double d = static_cast<double>(dy.cols());
  Matrix dxhat = dy.array().rowwise() * g.row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_dxhat = dxhat.row(i).sum() / d;
    const double mean_dxhat_xhat = dxhat.row(i).dot(c.xhat.row(i)) / d;
    dx.row(i) = c.rstd(i) * (dxhat.row(i).array() - mean_dxhat - c.xhat.row(i).array() * mean_dxhat_xhat);
  }
  return dx;
}

void softmax_rows(Matrix& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double mx = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - mx).exp();
    s.row(i) /= s.row(i).sum();
  }
}

}  // namespace

Matrix encoder_forward(const EncoderParams& p, const Matrix& x, EncoderCache* cache) {
  const auto d = static_cast<Eigen::Index>(p.shape.d_model);
  if (x.cols() != d) throw InvariantError("encoder input width does not match d_model");
  const auto heads = static_cast<Eigen::Index>(p.shape.heads);
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Eigen::Index n = x.rows();

  if (cache) cache->layers.assign(p.layers.size(), {});
  Matrix h = x;
  for (std::size_t li = 0; li < p.layers.size(); ++li) {
    const EncoderLayer& l = p.layers[li];
    EncoderLayerCache local;
    EncoderLayerCache& c = cache ? cache->layers[li] : local;
    c.x_in = h;
    c.a = layer_norm(h, l.ln1_g, l.ln1_b, &c.ln1);
    c.q = add_row(c.a * l.wq, l.bq);
    c.k = add_row(c.a * l.wk, l.bk);
    c.v = add_row(c.a * l.wv, l.bv);
    c.attn.resize(n, d);
    c.probs.resize(static_cast<std::size_t>(heads));
    for (Eigen::Index hd = 0; hd < heads; ++hd) {
      Matrix s = (c.q.middleCols(hd * dh, dh) * c.k.middleCols(hd * dh, dh).transpose()) * scale;
      softmax_rows(s);
      c.attn.middleCols(hd * dh, dh) = s * c.v.middleCols(hd * dh, dh);
      c.probs[static_cast<std::size_t>(hd)] = std::move(s);
    }
    c.x_mid = c.x_in + add_row(c.attn * l.wo, l.bo);
    c.b = layer_norm(c.x_mid, l.ln2_g, l.ln2_b, &c.ln2);
    c.pre_act = add_row(c.b * l.ff_w1, l.ff_b1);
    c.act = c.pre_act.cwiseMax(0.0);
    h = c.x_mid + add_row(c.act * l.ff_w2, l.ff_b2);
  }
  LayerNormCache lnf;
  Matrix out = layer_norm(h, p.lnf_g, p.lnf_b, cache ? &cache->lnf : &lnf);
  return out;
}

Matrix encoder_backward(const EncoderParams& p, const EncoderCache& cache, const Matrix& d_out,
                        EncoderParams& grad) {
  const auto d = static_cast<Eigen::Index>(p.shape.d_model);
  const auto heads = static_cast<Eigen::Index>(p.shape.heads);
  const Eigen::Index dh = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix dh_out = layer_norm_backward(cache.lnf, p.lnf_g, d_out, grad.lnf_g, grad.lnf_b);
  for (std::size_t li = p.layers.size(); li-- > 0;) {
    const EncoderLayer& l = p.layers[li];
    EncoderLayer& g = grad.layers[li];
    const EncoderLayerCache& c = cache.layers[li];

    // feed-forward branch
    g.ff_w2 += c.act.transpose() * dh_out;
    g.ff_b2 += dh_out.colwise().sum();
    Matrix d_pre = (dh_out * l.ff_w2.transpose()).cwiseProduct((c.pre_act.array() > 0.0).cast<double>().matrix());
    g.ff_w1 += c.b.transpose() * d_pre;
    g.ff_b1 += d_pre.colwise().sum();
    Matrix d_b = d_pre * l.ff_w1.transpose();
    Matrix d_mid = dh_out + layer_norm_backward(c.ln2, l.ln2_g, d_b, g.ln2_g, g.ln2_b);

    // attention branch
    g.wo += c.attn.transpose() * d_mid;
    g.bo += d_mid.colwise().sum();
    Matrix d_attn = d_mid * l.wo.transpose();
    Matrix dq(c.q.rows(), d), dk(c.k.rows(), d), dv(c.v.rows(), d);
    for (Eigen::Index hd = 0; hd < heads; ++hd) {
      const Matrix& prob = c.probs[static_cast<std::size_t>(hd)];
      const auto d_o = d_attn.middleCols(hd * dh, dh);
      Matrix d_p = d_o * c.v.middleCols(hd * dh, dh).transpose();
      dv.middleCols(hd * dh, dh) = prob.transpose() * d_o;
      Eigen::VectorXd row_dot = (d_p.array() * prob.array()).rowwise().sum();
      Matrix d_s = prob.array() * (d_p.array().colwise() - row_dot.array());
      dq.middleCols(hd * dh, dh) = (d_s * c.k.middleCols(hd * dh, dh)) * scale;
      dk.middleCols(hd * dh, dh) = (d_s.transpose() * c.q.middleCols(hd * dh, dh)) * scale;
    }
    g.wq += c.a.transpose() * dq;
    g.bq += dq.colwise().sum();
    g.wk += c.a.transpose() * dk;
    g.bk += dk.colwise().sum();
    g.wv += c.a.transpose() * dv;
    g.bv += dv.colwise().sum();
    Matrix d_a = dq * l.wq.transpose() + dk * l.wk.transpose() + dv * l.wv.transpose();
    dh_out = d_mid + layer_norm_backward(c.ln1, l.ln1_g, d_a, g.ln1_g, g.ln1_b);
  }
  return dh_out;
}

Adam::Adam(const std::vector<TensorRef>& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& p : params) {
    m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
}

void Adam::step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw InvariantError("Adam: parameter list changed shape");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const Matrix& g = *grads[i].value;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    params[i].value->array() -=
        cfg_.lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

void zero_all(const std::vector<TensorRef>& tensors) {
  for (const auto& t : tensors) t.value->setZero();
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::fabs(z))); }

}  // namespace dvcr
