#pragma once

// Partially input-convex network G(alpha, h): convex in alpha, unrestricted in
// the context h, plus a strong-convexity term (gamma / 2) ||alpha||^2.
//
// Layer recurrence (hidden activations are softplus, the output layer is
// linear and scalar):
//
//   u       = softplus(W~ h + b~)
//   v_1     = softplus(Wa_0 (alpha o (Wau_0 u + ba_0)) + Wu_0 u + b_0)
//   v_{i+1} = a_i(Wv_i (v_i o [Wvu_i u + bv_i]_+) + Wa_i (alpha o (Wau_i u + ba_i)) + Wu_i u + b_i)
//   G       = v_out + (gamma / 2) ||alpha||^2,   gamma = gamma_floor + softplus(raw_gamma)
//
// Wv_i = softplus(raw Wv_i) is entrywise non-negative by construction.

#include "mqf2/autodiff/graph.hpp"

#include <Eigen/Dense>

#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mqf2 {

struct PicnnConfig {
  Eigen::Index input_dim = 1;    // n, dimension of the quantile vector
  Eigen::Index context_dim = 1;  // d, encoder hidden size
  Eigen::Index hidden_width = 40;
  int num_layers = 5;  // hidden layers; an output layer follows
  double gamma_floor = 1e-2;

  /// Throws ConfigError on an invalid configuration.
  void validate() const;
};

struct PicnnLayer {
  ad::Tensor w_v;   // raw, out x in_v (empty on the first layer)
  ad::Tensor w_vu;  // in_v x width
  ad::Tensor b_v;   // in_v x 1
  ad::Tensor w_a;   // out x n
  ad::Tensor w_au;  // n x width
  ad::Tensor b_a;   // n x 1
  ad::Tensor w_u;   // out x width
  ad::Tensor b;     // out x 1
};

struct PicnnParams {
  PicnnConfig config;
  std::vector<PicnnLayer> layers;  // num_layers hidden + 1 output
  ad::Tensor embed_w;              // width x d
  ad::Tensor embed_b;              // width x 1
  ad::Tensor raw_gamma;            // 1 x 1

  /// Fan-in uniform initialization, zero biases, effective gamma near 0.1.
  static PicnnParams init(const PicnnConfig& config, std::mt19937_64& rng);
  /// All raw weights and biases zero; raw_gamma set so the effective gamma equals `gamma`.
  static PicnnParams zeros(const PicnnConfig& config, double gamma = 1.0);

  double effective_gamma() const;
  /// softplus of the raw v-path weights of layer i (i >= 1).
  ad::Tensor effective_w_v(std::size_t i) const;

  /// Visits every trainable tensor with a stable name, in a fixed order.
  template <class F>
  void for_each_tensor(F&& f);
  template <class F>
  void for_each_tensor(F&& f) const;
};

/// raw value r such that softplus(r) == target (target > 0).
double inverse_softplus(double target);

/// Graph leaves of one PICNN parameter set.
struct PicnnNodes {
  struct Layer {
    ad::Var w_v, w_vu, b_v, w_a, w_au, b_a, w_u, b;
  };
  PicnnConfig config;
  std::vector<Layer> layers;
  ad::Var embed_w, embed_b, raw_gamma;

  static PicnnNodes declare(ad::Graph& graph, const PicnnConfig& config);
};

/// u = softplus(W~ h + b~); `h` is d x N, result width x N.
ad::Var context_embed(const PicnnNodes& p, ad::Var h);
/// Effective gamma as a 1x1 node.
ad::Var effective_gamma(const PicnnNodes& p);
/// Potential per column: alpha is n x N, u is width x N; result 1 x N.
ad::Var potential_columns(const PicnnNodes& p, ad::Var alpha, ad::Var u);

/// Evaluates G, grad_alpha G and optionally the Hessian for a fixed batch
/// width N. The graph is built once; parameters are re-bound with set_params.
class PotentialEvaluator {
 public:
  PotentialEvaluator(const PicnnConfig& config, Eigen::Index columns, bool with_hessian = false);
  ~PotentialEvaluator();
  PotentialEvaluator(PotentialEvaluator&&) noexcept;
  PotentialEvaluator& operator=(PotentialEvaluator&&) noexcept;

  void set_params(const PicnnParams& params);
  /// Binds the context embedding input h (d x N).
  void set_context(const Eigen::MatrixXd& h);

  /// G per column (1 x N) and its gradient (n x N) at alpha (n x N).
  void evaluate(const Eigen::MatrixXd& alpha, Eigen::MatrixXd* values, Eigen::MatrixXd* gradients);
  /// Packed Hessians (n*n x N); requires with_hessian.
  const Eigen::MatrixXd& hessians(const Eigen::MatrixXd& alpha);

  Eigen::Index columns() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Single-point conveniences. `h` has dimension d.
Eigen::VectorXd context_embed(const PicnnParams& params, const Eigen::VectorXd& h);
double potential(const PicnnParams& params, const Eigen::VectorXd& alpha, const Eigen::VectorXd& h);
Eigen::VectorXd grad_potential(const PicnnParams& params, const Eigen::VectorXd& alpha, const Eigen::VectorXd& h);

// ---------------------------------------------------------------------------

template <class F>
void PicnnParams::for_each_tensor(F&& f) {
  f(std::string("picnn.embed.w"), embed_w);
  f(std::string("picnn.embed.b"), embed_b);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "picnn.layer" + std::to_string(i) + ".";
    PicnnLayer& l = layers[i];
    if (i > 0) {
      f(p + "w_v", l.w_v);
      f(p + "w_vu", l.w_vu);
      f(p + "b_v", l.b_v);
    }
    f(p + "w_a", l.w_a);
    f(p + "w_au", l.w_au);
    f(p + "b_a", l.b_a);
    f(p + "w_u", l.w_u);
    f(p + "b", l.b);
  }
  f(std::string("picnn.raw_gamma"), raw_gamma);
}

template <class F>
void PicnnParams::for_each_tensor(F&& f) const {
  const_cast<PicnnParams*>(this)->for_each_tensor(
      [&](const std::string& name, ad::Tensor& t) { f(name, static_cast<const ad::Tensor&>(t)); });
}

}  // namespace mqf2
