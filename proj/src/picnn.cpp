#include "mqf2/picnn.hpp"

#include "mqf2/autodiff/evaluate.hpp"
#include "mqf2/autodiff/gradient.hpp"
#include "mqf2/errors.hpp"

#include <cmath>

namespace mqf2 {

using ad::Tensor;
using ad::Var;
using Eigen::Index;

void PicnnConfig::validate() const {
  if (input_dim < 1) throw ConfigError("picnn.input_dim must be >= 1");
  if (context_dim < 1) throw ConfigError("picnn.context_dim must be >= 1");
  if (hidden_width < 1) throw ConfigError("picnn.hidden_width must be >= 1");
  if (num_layers < 2) throw ConfigError("picnn.num_layers must be >= 2");
  if (!(gamma_floor > 0.0)) throw ConfigError("picnn.gamma_floor must be > 0");
}

double inverse_softplus(double target) {
  // log(exp(t) - 1), stable for large t
  return target > 30.0 ? target : std::log(std::expm1(target));
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

Tensor uniform(Index rows, Index cols, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  return Tensor::NullaryExpr(rows, cols, [&] { return dist(rng); });
}

struct LayerShape {
  Index in_v;
  Index out;
};

std::vector<LayerShape> layer_shapes(const PicnnConfig& c) {
  std::vector<LayerShape> shapes;
  for (int i = 0; i <= c.num_layers; ++i) {
    const Index in_v = i == 0 ? 0 : c.hidden_width;
    const Index out = i == c.num_layers ? 1 : c.hidden_width;
    shapes.push_back({in_v, out});
  }
  return shapes;
}

PicnnParams allocate(const PicnnConfig& c) {
  PicnnParams p;
  p.config = c;
  const Index n = c.input_dim, w = c.hidden_width;
  p.embed_w = Tensor::Zero(w, c.context_dim);
  p.embed_b = Tensor::Zero(w, 1);
  for (const LayerShape& s : layer_shapes(c)) {
    PicnnLayer l;
    if (s.in_v > 0) {
      l.w_v = Tensor::Zero(s.out, s.in_v);
      l.w_vu = Tensor::Zero(s.in_v, w);
      l.b_v = Tensor::Zero(s.in_v, 1);
    }
    l.w_a = Tensor::Zero(s.out, n);
    l.w_au = Tensor::Zero(n, w);
    l.b_a = Tensor::Zero(n, 1);
    l.w_u = Tensor::Zero(s.out, w);
    l.b = Tensor::Zero(s.out, 1);
    p.layers.push_back(std::move(l));
  }
  p.raw_gamma = Tensor::Zero(1, 1);
  return p;
}

}  // namespace

PicnnParams PicnnParams::init(const PicnnConfig& config, std::mt19937_64& rng) {
  config.validate();
  PicnnParams p = allocate(config);
  const auto bound = [](Index fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); };
  const Index n = config.input_dim, w = config.hidden_width;
  p.embed_w = uniform(w, config.context_dim, bound(config.context_dim), rng);
  for (PicnnLayer& l : p.layers) {
    if (l.w_v.size() > 0) {
      l.w_v = uniform(l.w_v.rows(), l.w_v.cols(), bound(l.w_v.cols()), rng);
      l.w_vu = uniform(l.w_vu.rows(), w, bound(w), rng);
    }
    l.w_a = uniform(l.w_a.rows(), n, bound(n), rng);
    l.w_au = uniform(n, w, bound(w), rng);
    l.w_u = uniform(l.w_u.rows(), w, bound(w), rng);
  }
  p.raw_gamma(0, 0) = inverse_softplus(std::max(0.1 - config.gamma_floor, 1e-3));
  return p;
}

PicnnParams PicnnParams::zeros(const PicnnConfig& config, double gamma) {
  config.validate();
  if (!(gamma > config.gamma_floor)) throw ConfigError("zeros: gamma must exceed gamma_floor");
  PicnnParams p = allocate(config);
  p.raw_gamma(0, 0) = inverse_softplus(gamma - config.gamma_floor);
  return p;
}

double PicnnParams::effective_gamma() const { return config.gamma_floor + softplus(raw_gamma(0, 0)); }

Tensor PicnnParams::effective_w_v(std::size_t i) const { return layers.at(i).w_v.unaryExpr(&softplus); }

PicnnNodes PicnnNodes::declare(ad::Graph& graph, const PicnnConfig& config) {
  PicnnNodes nodes;
  nodes.config = config;
  // Shapes come from a zero parameter set so they stay in one place.
  PicnnParams shapes = allocate(config);
  std::map<std::string, Var> by_name;
  shapes.for_each_tensor([&](const std::string& name, const Tensor& t) {
    by_name[name] = graph.leaf(name, t.rows(), t.cols());
  });
  nodes.embed_w = by_name.at("picnn.embed.w");
  nodes.embed_b = by_name.at("picnn.embed.b");
  nodes.raw_gamma = by_name.at("picnn.raw_gamma");
  for (std::size_t i = 0; i < shapes.layers.size(); ++i) {
    const std::string p = "picnn.layer" + std::to_string(i) + ".";
    Layer l;
    if (i > 0) {
      l.w_v = by_name.at(p + "w_v");
      l.w_vu = by_name.at(p + "w_vu");
      l.b_v = by_name.at(p + "b_v");
    }
    l.w_a = by_name.at(p + "w_a");
    l.w_au = by_name.at(p + "w_au");
    l.b_a = by_name.at(p + "b_a");
    l.w_u = by_name.at(p + "w_u");
    l.b = by_name.at(p + "b");
    nodes.layers.push_back(l);
  }
  return nodes;
}

Var context_embed(const PicnnNodes& p, Var h) {
  return ad::softplus(ad::matmul(p.embed_w, h) + ad::broadcast_cols(p.embed_b, h.cols()));
}

Var effective_gamma(const PicnnNodes& p) { return ad::softplus(p.raw_gamma) + p.config.gamma_floor; }

Var potential_columns(const PicnnNodes& p, Var alpha, Var u) {
  const Index cols = alpha.cols();
  if (alpha.rows() != p.config.input_dim) throw ShapeError("potential: alpha has wrong dimension");
  if (u.cols() != cols || u.rows() != p.config.hidden_width) throw ShapeError("potential: context embedding shape");

  Var v;
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    const PicnnNodes::Layer& l = p.layers[i];
    Var alpha_gate = ad::matmul(l.w_au, u) + ad::broadcast_cols(l.b_a, cols);
    Var pre = ad::matmul(l.w_a, ad::hadamard(alpha, alpha_gate)) + ad::matmul(l.w_u, u) +
              ad::broadcast_cols(l.b, cols);
    if (i > 0) {
      Var v_gate = ad::relu(ad::matmul(l.w_vu, u) + ad::broadcast_cols(l.b_v, cols));
      pre = ad::matmul(ad::softplus(l.w_v), ad::hadamard(v, v_gate)) + pre;
    }
    const bool output = i + 1 == p.layers.size();
    v = output ? pre : ad::softplus(pre);
  }
  Var quad = ad::col_sums(ad::hadamard(alpha, alpha));
  return v + ad::scale_by(0.5 * effective_gamma(p), quad);
}

struct PotentialEvaluator::Impl {
  ad::Graph graph;
  PicnnNodes nodes;
  Var alpha, h, values, grads, hess;
  std::unique_ptr<ad::Evaluator> eval;
  Index columns = 0;
};

PotentialEvaluator::PotentialEvaluator(const PicnnConfig& config, Index columns, bool with_hessian)
    : impl_(std::make_unique<Impl>()) {
  // The floor is not checked here so that damaged models can still be probed.
  PicnnConfig shape = config;
  shape.gamma_floor = 1.0;
  shape.validate();
  Impl& m = *impl_;
  m.columns = columns;
  m.nodes = PicnnNodes::declare(m.graph, config);
  m.alpha = m.graph.leaf("alpha", config.input_dim, columns);
  m.h = m.graph.leaf("h", config.context_dim, columns);
  m.values = potential_columns(m.nodes, m.alpha, context_embed(m.nodes, m.h));
  m.grads = ad::gradient(ad::sum(m.values), m.alpha);
  if (with_hessian) m.hess = ad::batch_hessian(m.grads, m.alpha);
  m.eval = std::make_unique<ad::Evaluator>(m.graph);
}

PotentialEvaluator::~PotentialEvaluator() = default;
PotentialEvaluator::PotentialEvaluator(PotentialEvaluator&&) noexcept = default;
PotentialEvaluator& PotentialEvaluator::operator=(PotentialEvaluator&&) noexcept = default;

Index PotentialEvaluator::columns() const { return impl_->columns; }

void PotentialEvaluator::set_params(const PicnnParams& params) {
  params.for_each_tensor([&](const std::string& name, const Tensor& t) { impl_->eval->bind(name, t); });
}

void PotentialEvaluator::set_context(const Eigen::MatrixXd& h) { impl_->eval->bind(impl_->h, h); }

void PotentialEvaluator::evaluate(const Eigen::MatrixXd& alpha, Eigen::MatrixXd* values, Eigen::MatrixXd* gradients) {
  Impl& m = *impl_;
  m.eval->bind(m.alpha, alpha);
  if (gradients != nullptr) {
    m.eval->run({m.values, m.grads});
    *gradients = m.eval->value(m.grads);
  } else {
    m.eval->run({m.values});
  }
  if (values != nullptr) *values = m.eval->value(m.values);
}

const Eigen::MatrixXd& PotentialEvaluator::hessians(const Eigen::MatrixXd& alpha) {
  Impl& m = *impl_;
  if (!m.hess.valid()) throw ConfigError("PotentialEvaluator built without Hessian support");
  m.eval->bind(m.alpha, alpha);
  m.eval->run({m.hess});
  return m.eval->value(m.hess);
}

Eigen::VectorXd context_embed(const PicnnParams& params, const Eigen::VectorXd& h) {
  if (h.size() != params.config.context_dim) throw ShapeError("context_embed: h has wrong dimension");
  ad::Graph g;
  PicnnNodes nodes = PicnnNodes::declare(g, params.config);
  Var hv = g.leaf("h", params.config.context_dim, 1);
  Var u = context_embed(nodes, hv);
  ad::Evaluator ev(g);
  params.for_each_tensor([&](const std::string& name, const Tensor& t) { ev.bind(name, t); });
  ev.bind(hv, h);
  ev.run({u});
  return ev.value(u);
}

double potential(const PicnnParams& params, const Eigen::VectorXd& alpha, const Eigen::VectorXd& h) {
  PotentialEvaluator pe(params.config, 1);
  pe.set_params(params);
  pe.set_context(h);
  Eigen::MatrixXd values;
  pe.evaluate(alpha, &values, nullptr);
  return values(0, 0);
}

Eigen::VectorXd grad_potential(const PicnnParams& params, const Eigen::VectorXd& alpha, const Eigen::VectorXd& h) {
  PotentialEvaluator pe(params.config, 1);
  pe.set_params(params);
  pe.set_context(h);
  Eigen::MatrixXd grads;
  pe.evaluate(alpha, nullptr, &grads);
  return grads.col(0);
}

}  // namespace mqf2
