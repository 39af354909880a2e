#pragma once

// Windowed training instances, the two training objectives as batched graphs,
// and the Adam loop that fits encoder and PICNN jointly.

#include "mqf2/data.hpp"
#include "mqf2/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace mqf2 {

struct TrainConfig {
  Mode mode = Mode::energy_score;
  double beta = 1.0;  // energy-score exponent, strictly inside (0, 2)
  int es_samples = 50;
  int batch_size = 32;
  int epochs = 50;
  int batches_per_epoch = 50;
  double learning_rate = 1e-3;
  double grad_clip = 10.0;  // global-norm clipping threshold
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainingInstance {
  Eigen::MatrixXd inputs;  // encoder input, input_dim x context_length
  Eigen::VectorXd target;  // next n values, original units
  double scale = 1.0;      // window mean scale; targets enter the map as target / scale
  std::size_t series = 0;
  Eigen::Index start = 0;  // first context index within the series
};

struct InstanceSet {
  std::vector<TrainingInstance> instances;
  int skipped = 0;  // series too short for context_length + n
};

/// Covariates the encoder sees per step for this dataset: calendar features
/// plus dynamic real features; none for unconditional datasets.
Eigen::Index feature_dim_for(const TimeSeriesDataset& dataset);

/// Encoder input for the window of `context_length` steps ending before
/// `end`, and its scale. Steps before the series start are zero padded.
TrainingInstance window_at(const TimeSeriesDataset& dataset, std::size_t series, Eigen::Index end,
                           Eigen::Index context_length, Eigen::Index horizon);

/// `count` instances with series and start drawn uniformly among admissible
/// windows. Unconditional datasets use each whole series as the target with
/// a zero context and unit scale.
InstanceSet make_instances(const TimeSeriesDataset& dataset, Eigen::Index context_length, Eigen::Index n, int count,
                           std::uint64_t seed);

/// One minibatch in graph layout.
struct Batch {
  Eigen::MatrixXd inputs;     // input_dim x (L * B), step t at columns [t B, (t + 1) B)
  Eigen::MatrixXd targets;    // n x B, scaled
  Eigen::MatrixXd log_scale;  // 1 x B
  Eigen::MatrixXd alpha;      // n x (B * 2S) reference draws; energy-score mode only

  Eigen::Index size() const { return targets.cols(); }
};

Batch make_batch(const std::vector<TrainingInstance>& instances, std::size_t begin, std::size_t count, Mode mode,
                 int es_samples, std::mt19937_64& rng);

using GradientTable = std::map<std::string, Eigen::MatrixXd>;

/// Mean batch loss and its parameter gradients. The graph is built once for a
/// fixed batch size and reused with fresh bindings.
class BatchLoss {
 public:
  BatchLoss(const QuantileModel& model, const TrainConfig& config, Eigen::Index batch);
  ~BatchLoss();
  BatchLoss(BatchLoss&&) noexcept;
  BatchLoss& operator=(BatchLoss&&) noexcept;

  /// Energy score in scaled units, or the NLL of the original-unit targets.
  double evaluate(const QuantileModel& model, const Batch& batch, GradientTable* gradients = nullptr);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// -log p(z | h) for a target already in model units.
double nll_loss(const QuantileModel& model, const Eigen::VectorXd& z, const Eigen::VectorXd& h);

/// Context vector of an instance under the model's encoder.
Eigen::VectorXd context_of(const QuantileModel& model, const TrainingInstance& instance);

/// Mean NLL in original units over instances (adds n log s per instance).
double mean_nll(const QuantileModel& model, const std::vector<TrainingInstance>& instances);

struct Adam {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// One update of every tensor that has a gradient.
  void step(QuantileModel& model, const GradientTable& gradients);

 private:
  long steps_ = 0;
  GradientTable m_, v_;
};

/// Rescales all gradients so their joint 2-norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(GradientTable& gradients, double max_norm);

struct TrainResult {
  QuantileModel model;
  std::vector<double> loss_curve;  // mean batch loss per epoch
  int skipped_series = 0;
};

/// Called after every epoch with the 1-based epoch index.
using EpochHook = std::function<void(int epoch, const QuantileModel& model, double mean_loss)>;

/// Fits a fresh model. Throws NonFiniteLoss on a non-finite loss or gradient.
TrainResult train(const TimeSeriesDataset& dataset, const EncoderConfig& encoder, const PicnnConfig& picnn,
                  const TrainConfig& config, const EpochHook& hook = {});
/// Continues from `initial`.
TrainResult train(const TimeSeriesDataset& dataset, QuantileModel initial, const TrainConfig& config,
                  const EpochHook& hook = {});

void write_loss_curve(const std::vector<double>& curve, const std::string& path);

/// Per-step Gaussian forecaster that ignores cross-step dependence.
struct IndependentBaseline {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // population standard deviation

  /// n x count paths, every step drawn independently.
  Eigen::MatrixXd sample(Eigen::Index count, std::mt19937_64& rng) const;
};

/// Moments per horizon step over the final n values of every series (the
/// whole series for unconditional data).
IndependentBaseline baseline_independent(const TimeSeriesDataset& dataset, Eigen::Index n);

}  // namespace mqf2
