#include "mqf2/encoder.hpp"

#include "mqf2/errors.hpp"

#include <cmath>

namespace mqf2 {

using ad::Tensor;
using ad::Var;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void EncoderConfig::validate() const {
  if (hidden_size < 1) throw ConfigError("encoder.hidden_size must be >= 1");
  if (num_layers < 1) throw ConfigError("encoder.num_layers must be >= 1");
  if (context_length < 1) throw ConfigError("encoder.context_length must be >= 1");
  if (feature_dim < 0) throw ConfigError("encoder.feature_dim must be >= 0");
}

EncoderParams EncoderParams::zeros(const EncoderConfig& config) {
  config.validate();
  EncoderParams p;
  p.config = config;
  const Index hs = config.hidden_size;
  for (int i = 0; i < config.num_layers; ++i) {
    const Index in = i == 0 ? config.input_dim() : hs;
    GruLayer l;
    for (Tensor* w : {&l.w_z, &l.w_r, &l.w_n}) *w = Tensor::Zero(hs, in);
    for (Tensor* u : {&l.u_z, &l.u_r, &l.u_n}) *u = Tensor::Zero(hs, hs);
    for (Tensor* b : {&l.b_z, &l.b_r, &l.b_n}) *b = Tensor::Zero(hs, 1);
    p.layers.push_back(std::move(l));
  }
  return p;
}

EncoderParams EncoderParams::init(const EncoderConfig& config, std::mt19937_64& rng) {
  EncoderParams p = zeros(config);
  const double bound = 1.0 / std::sqrt(static_cast<double>(config.hidden_size));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (GruLayer& l : p.layers) {
    for (Tensor* w : {&l.w_z, &l.u_z, &l.w_r, &l.u_r, &l.w_n, &l.u_n}) {
      *w = Tensor::NullaryExpr(w->rows(), w->cols(), [&] { return dist(rng); });
    }
  }
  return p;
}

ScaledWindow scale_window(const VectorXd& past) {
  if (past.size() == 0) throw ShapeError("scale_window: empty window");
  ScaledWindow out;
  out.scale = 1.0 + past.cwiseAbs().mean();
  out.scaled = past / out.scale;
  return out;
}

MatrixXd encoder_inputs(const VectorXd& scaled, const MatrixXd& covariates) {
  const Index steps = scaled.size();
  if (covariates.size() > 0 && covariates.cols() != steps) {
    throw ShapeError("encoder_inputs: covariates have " + std::to_string(covariates.cols()) + " steps, expected " +
                     std::to_string(steps));
  }
  const Index features = covariates.size() > 0 ? covariates.rows() : 0;
  MatrixXd x(1 + features, steps);
  x.row(0) = scaled.transpose();
  if (features > 0) x.bottomRows(features) = covariates;
  return x;
}

namespace {

MatrixXd sigmoid(const MatrixXd& m) {
  return m.unaryExpr([](double v) { return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); });
}

}  // namespace

VectorXd encode(const EncoderParams& params, const MatrixXd& window) {
  const EncoderConfig& c = params.config;
  if (window.rows() != c.input_dim() || window.cols() != c.context_length) {
    throw ShapeError("encode: window is " + std::to_string(window.rows()) + "x" + std::to_string(window.cols()) +
                     ", expected " + std::to_string(c.input_dim()) + "x" + std::to_string(c.context_length));
  }
  MatrixXd seq = window;
  for (const GruLayer& l : params.layers) {
    MatrixXd next(c.hidden_size, seq.cols());
    VectorXd h = VectorXd::Zero(c.hidden_size);
    for (Index t = 0; t < seq.cols(); ++t) {
      const VectorXd x = seq.col(t);
      const VectorXd z = sigmoid(l.w_z * x + l.u_z * h + l.b_z);
      const VectorXd r = sigmoid(l.w_r * x + l.u_r * h + l.b_r);
      const VectorXd cand = (l.w_n * x + l.u_n * r.cwiseProduct(h) + l.b_n).array().tanh().matrix();
      h = (1.0 - z.array()).matrix().cwiseProduct(cand) + z.cwiseProduct(h);
      next.col(t) = h;
    }
    seq = std::move(next);
  }
  return seq.col(seq.cols() - 1);
}

EncoderNodes EncoderNodes::declare(ad::Graph& graph, const EncoderConfig& config) {
  EncoderNodes nodes;
  nodes.config = config;
  nodes.layers.resize(static_cast<std::size_t>(config.num_layers));
  const EncoderParams shapes = EncoderParams::zeros(config);
  std::size_t k = 0;
  shapes.for_each_tensor([&](const std::string& name, const Tensor& t) {
    nodes.layers[k / 9].push_back(graph.leaf(name, t.rows(), t.cols()));
    ++k;
  });
  return nodes;
}

Var encode(const EncoderNodes& nodes, Var inputs, Index batch) {
  const EncoderConfig& c = nodes.config;
  const Index steps = c.context_length;
  if (inputs.rows() != c.input_dim() || inputs.cols() != steps * batch) {
    throw ShapeError("encode: batched inputs have the wrong shape");
  }
  ad::Graph& g = inputs.graph();
  std::vector<Var> seq;
  for (Index t = 0; t < steps; ++t) seq.push_back(ad::col_slice(inputs, t * batch, batch));

  for (const std::vector<Var>& l : nodes.layers) {
    const Var &w_z = l[0], &u_z = l[1], &b_z = l[2], &w_r = l[3], &u_r = l[4], &b_r = l[5], &w_n = l[6],
              &u_n = l[7], &b_n = l[8];
    Var bz = ad::broadcast_cols(b_z, batch), br = ad::broadcast_cols(b_r, batch), bn = ad::broadcast_cols(b_n, batch);
    Var h = g.zeros(c.hidden_size, batch);
    for (Index t = 0; t < steps; ++t) {
      Var x = seq[static_cast<std::size_t>(t)];
      // The first step starts from h = 0, so the recurrent terms vanish.
      Var z = ad::sigmoid(t == 0 ? ad::matmul(w_z, x) + bz : ad::matmul(w_z, x) + ad::matmul(u_z, h) + bz);
      Var r, cand;
      if (t == 0) {
        cand = ad::tanh(ad::matmul(w_n, x) + bn);
        h = ad::hadamard(1.0 - z, cand);
      } else {
        r = ad::sigmoid(ad::matmul(w_r, x) + ad::matmul(u_r, h) + br);
        cand = ad::tanh(ad::matmul(w_n, x) + ad::matmul(u_n, ad::hadamard(r, h)) + bn);
        h = ad::hadamard(1.0 - z, cand) + ad::hadamard(z, h);
      }
      seq[static_cast<std::size_t>(t)] = h;
    }
  }
  return seq.back();
}

}  // namespace mqf2
