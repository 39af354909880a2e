#pragma once

// Gated recurrent encoder mapping a conditioning window to the context vector h.
// Each step consumes (scaled target, covariates); h is the top layer's last state.
//
//   z  = sigmoid(Wz x + Uz h + bz)
//   r  = sigmoid(Wr x + Ur h + br)
//   c  = tanh(Wn x + Un (r o h) + bn)
//   h' = (1 - z) o c + z o h

#include "mqf2/autodiff/graph.hpp"

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

namespace mqf2 {

struct EncoderConfig {
  Eigen::Index hidden_size = 40;
  int num_layers = 2;
  Eigen::Index context_length = 24;
  Eigen::Index feature_dim = 0;  // covariates per step, in addition to the scaled target

  Eigen::Index input_dim() const { return 1 + feature_dim; }
  void validate() const;
};

struct GruLayer {
  ad::Tensor w_z, u_z, b_z;
  ad::Tensor w_r, u_r, b_r;
  ad::Tensor w_n, u_n, b_n;
};

struct EncoderParams {
  EncoderConfig config;
  std::vector<GruLayer> layers;

  /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases.
  static EncoderParams init(const EncoderConfig& config, std::mt19937_64& rng);
  static EncoderParams zeros(const EncoderConfig& config);

  template <class F>
  void for_each_tensor(F&& f);
  template <class F>
  void for_each_tensor(F&& f) const;
};

struct ScaledWindow {
  Eigen::VectorXd scaled;
  double scale = 1.0;
};

/// s = 1 + mean|past|, scaled = past / s.
ScaledWindow scale_window(const Eigen::VectorXd& past);

/// Assembles the per-step input matrix (input_dim x L): row 0 the scaled
/// targets, the remaining rows the covariates (feature_dim x L).
Eigen::MatrixXd encoder_inputs(const Eigen::VectorXd& scaled, const Eigen::MatrixXd& covariates);

/// `window` is input_dim x context_length, one column per step.
Eigen::VectorXd encode(const EncoderParams& params, const Eigen::MatrixXd& window);

struct EncoderNodes {
  EncoderConfig config;
  std::vector<std::vector<ad::Var>> layers;  // nine leaves per layer, in GruLayer order

  static EncoderNodes declare(ad::Graph& graph, const EncoderConfig& config);
};

/// Batched encoder graph. `inputs` is input_dim x (L * B): step t of the batch
/// occupies columns [t * B, (t + 1) * B). Returns hidden_size x B.
ad::Var encode(const EncoderNodes& nodes, ad::Var inputs, Eigen::Index batch);

// ---------------------------------------------------------------------------

template <class F>
void EncoderParams::for_each_tensor(F&& f) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "encoder.layer" + std::to_string(i) + ".";
    GruLayer& l = layers[i];
    f(p + "w_z", l.w_z);
    f(p + "u_z", l.u_z);
    f(p + "b_z", l.b_z);
    f(p + "w_r", l.w_r);
    f(p + "u_r", l.u_r);
    f(p + "b_r", l.b_r);
    f(p + "w_n", l.w_n);
    f(p + "u_n", l.u_n);
    f(p + "b_n", l.b_n);
  }
}

template <class F>
void EncoderParams::for_each_tensor(F&& f) const {
  const_cast<EncoderParams*>(this)->for_each_tensor(
      [&](const std::string& name, ad::Tensor& t) { f(name, static_cast<const ad::Tensor&>(t)); });
}

}  // namespace mqf2
