#include "mqf2/training.hpp"

#include "mqf2/autodiff/evaluate.hpp"
#include "mqf2/autodiff/gradient.hpp"
#include "mqf2/encoder.hpp"
#include "mqf2/errors.hpp"
#include "mqf2/quantile_map.hpp"
#include "mqf2/rng.hpp"
#include "mqf2/scoring.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace mqf2 {

using ad::Var;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

void TrainConfig::validate() const {
  if (!(beta > 0.0 && beta < 2.0)) throw ConfigError("train.beta must lie strictly between 0 and 2");
  if (es_samples < 2) throw ConfigError("train.es_samples must be >= 2");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batches_per_epoch < 1) throw ConfigError("train.batches_per_epoch must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (!(grad_clip > 0.0)) throw ConfigError("train.grad_clip must be > 0");
}

Index feature_dim_for(const TimeSeriesDataset& dataset) {
  if (dataset.unconditional) return 0;
  const Index dynamic = dataset.series.empty() ? 0 : dataset.series.front().dynamic_features.rows();
  for (const TimeSeries& s : dataset.series) {
    if (s.dynamic_features.rows() != dynamic) throw ConfigError("series disagree on the number of dynamic features");
  }
  return calendar_feature_count(dataset.freq) + dynamic;
}

TrainingInstance window_at(const TimeSeriesDataset& dataset, std::size_t series, Index end, Index context_length,
                           Index horizon) {
  const TimeSeries& s = dataset.series.at(series);
  TrainingInstance inst;
  inst.series = series;
  const Index features = feature_dim_for(dataset);
  inst.inputs = MatrixXd::Zero(1 + features, context_length);
  if (dataset.unconditional) {
    inst.target = s.target.head(std::min<Index>(horizon, s.target.size()));
    return inst;
  }
  inst.start = end - context_length;
  const Index first = std::max<Index>(inst.start, 0);
  const Index avail = end - first;
  const Index offset = first - inst.start;  // padded steps on the left
  if (avail > 0) {
    ScaledWindow w = scale_window(s.target.segment(first, avail));
    inst.scale = w.scale;
    inst.inputs.block(0, offset, 1, avail) = w.scaled.transpose();
    const Index cal = calendar_feature_count(dataset.freq);
    if (cal > 0) {
      inst.inputs.block(1, offset, cal, avail) = calendar_features(dataset.freq, advance(s.start, dataset.freq, first), avail);
    }
    if (s.dynamic_features.rows() > 0) {
      inst.inputs.block(1 + cal, offset, s.dynamic_features.rows(), avail) = s.dynamic_features.middleCols(first, avail);
    }
  }
  const Index tail = std::clamp<Index>(s.target.size() - end, 0, horizon);
  inst.target = s.target.segment(std::min<Index>(end, s.target.size()), tail);
  return inst;
}

InstanceSet make_instances(const TimeSeriesDataset& dataset, Index context_length, Index n, int count,
                           std::uint64_t seed) {
  if (context_length < 1 || n < 1) throw ConfigError("make_instances: context length and horizon must be >= 1");
  if (count < 0) throw ConfigError("make_instances: count must be >= 0");
  InstanceSet out;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < dataset.series.size(); ++i) {
    const Index len = dataset.series[i].target.size();
    const bool ok = dataset.unconditional ? len == n : len >= context_length + n;
    if (ok) {
      usable.push_back(i);
    } else {
      ++out.skipped;
    }
  }
  if (usable.empty()) {
    std::vector<std::string> ids;
    for (const TimeSeries& s : dataset.series) ids.push_back(s.id);
    throw SeriesTooShort(ids);
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, usable.size() - 1);
  out.instances.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    const std::size_t series = usable[pick(rng)];
    if (dataset.unconditional) {
      out.instances.push_back(window_at(dataset, series, 0, context_length, n));
      continue;
    }
    const Index last_start = dataset.series[series].target.size() - context_length - n;
    const Index start = std::uniform_int_distribution<Index>(0, last_start)(rng);
    out.instances.push_back(window_at(dataset, series, start + context_length, context_length, n));
  }
  return out;
}

Batch make_batch(const std::vector<TrainingInstance>& instances, std::size_t begin, std::size_t count, Mode mode,
                 int es_samples, std::mt19937_64& rng) {
  if (count == 0 || begin + count > instances.size()) throw ConfigError("make_batch: range outside instance set");
  const TrainingInstance& first = instances[begin];
  const Index b = static_cast<Index>(count), dim = first.inputs.rows(), len = first.inputs.cols();
  const Index n = first.target.size();
  Batch batch;
  batch.inputs.resize(dim, len * b);
  batch.targets.resize(n, b);
  batch.log_scale.resize(1, b);
  for (Index j = 0; j < b; ++j) {
    const TrainingInstance& inst = instances[begin + static_cast<std::size_t>(j)];
    if (inst.inputs.rows() != dim || inst.inputs.cols() != len || inst.target.size() != n) {
      throw ShapeError("make_batch: instances differ in shape");
    }
    for (Index t = 0; t < len; ++t) batch.inputs.col(t * b + j) = inst.inputs.col(t);
    batch.targets.col(j) = inst.target / inst.scale;
    batch.log_scale(0, j) = std::log(inst.scale);
  }
  if (mode == Mode::energy_score) batch.alpha = reference_draws(n, b * 2 * es_samples, rng);
  return batch;
}

struct BatchLoss::Impl {
  ad::Graph graph;
  Var inputs, targets, log_scale, alpha, loss;
  ad::GradientMap grads;
  std::vector<Var> roots;
  std::unique_ptr<ad::Evaluator> eval;
  Mode mode = Mode::energy_score;
  Index batch = 0;
};

BatchLoss::BatchLoss(const QuantileModel& model, const TrainConfig& config, Index batch)
    : impl_(std::make_unique<Impl>()) {
  config.validate();
  model.validate();
  Impl& m = *impl_;
  m.mode = model.mode;
  m.batch = batch;
  const EncoderConfig& ec = model.encoder.config;
  const PicnnConfig& pc = model.picnn.config;
  const Index n = pc.input_dim, s = config.es_samples;

  EncoderNodes enc = EncoderNodes::declare(m.graph, ec);
  PicnnNodes pic = PicnnNodes::declare(m.graph, pc);
  m.inputs = m.graph.leaf("batch.inputs", ec.input_dim(), ec.context_length * batch, false);
  m.targets = m.graph.leaf("batch.targets", n, batch, false);
  m.log_scale = m.graph.leaf("batch.log_scale", 1, batch, false);
  Var u = context_embed(pic, encode(enc, m.inputs, batch));

  if (model.mode == Mode::energy_score) {
    m.alpha = m.graph.leaf("batch.alpha", n, batch * 2 * s, false);
    Var potentials = potential_columns(pic, m.alpha, ad::repeat_cols(u, 2 * s));
    Var samples = ad::gradient(ad::sum(potentials), m.alpha);
    Var total;
    for (Index b = 0; b < batch; ++b) {
      const Index at = b * 2 * s;
      Var term = energy_score(ad::col_slice(samples, at, s), ad::col_slice(samples, at + s, s),
                              ad::col_slice(samples, at, 2 * s), ad::col_slice(m.targets, b, 1), config.beta);
      total = total.valid() ? total + term : term;
    }
    m.loss = (1.0 / static_cast<double>(batch)) * total;
  } else {
    Var g = ad::gradient(ad::sum(potential_columns(pic, m.targets, u)), m.targets);
    Var logdet = ad::batch_logdet_spd(ad::batch_hessian(g, m.targets), n);
    const double log_norm = 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    Var per = 0.5 * ad::col_sums(ad::hadamard(g, g)) + log_norm - logdet + static_cast<double>(n) * m.log_scale;
    m.loss = (1.0 / static_cast<double>(batch)) * ad::sum(per);
  }
  m.grads = ad::gradient_all(m.loss);
  m.roots.push_back(m.loss);
  for (const auto& [name, v] : m.grads) m.roots.push_back(v);
  m.eval = std::make_unique<ad::Evaluator>(m.graph);
}

BatchLoss::~BatchLoss() = default;
BatchLoss::BatchLoss(BatchLoss&&) noexcept = default;
BatchLoss& BatchLoss::operator=(BatchLoss&&) noexcept = default;

double BatchLoss::evaluate(const QuantileModel& model, const Batch& batch, GradientTable* gradients) {
  Impl& m = *impl_;
  if (batch.size() != m.batch) throw ShapeError("BatchLoss: batch size differs from the compiled graph");
  model.for_each_tensor([&](const std::string& name, const ad::Tensor& t) { m.eval->bind(name, t); });
  m.eval->bind(m.inputs, batch.inputs);
  m.eval->bind(m.targets, batch.targets);
  m.eval->bind(m.log_scale, batch.log_scale);
  if (m.alpha.valid()) m.eval->bind(m.alpha, batch.alpha);
  if (gradients == nullptr) {
    m.eval->run({m.loss});
  } else {
    m.eval->run(m.roots);
    gradients->clear();
    for (const auto& [name, v] : m.grads) gradients->emplace(name, m.eval->value(v));
  }
  return m.eval->scalar(m.loss);
}

double nll_loss(const QuantileModel& model, const VectorXd& z, const VectorXd& h) { return -log_density(model, z, h); }

VectorXd context_of(const QuantileModel& model, const TrainingInstance& instance) {
  return encode(model.encoder, instance.inputs);
}

double mean_nll(const QuantileModel& model, const std::vector<TrainingInstance>& instances) {
  if (instances.empty()) throw ConfigError("mean_nll: no instances");
  double total = 0.0;
  for (const TrainingInstance& inst : instances) {
    const double n = static_cast<double>(inst.target.size());
    total += nll_loss(model, inst.target / inst.scale, context_of(model, inst)) + n * std::log(inst.scale);
  }
  return total / static_cast<double>(instances.size());
}

void Adam::step(QuantileModel& model, const GradientTable& gradients) {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(steps_));
  model.for_each_tensor([&](const std::string& name, ad::Tensor& param) {
    auto it = gradients.find(name);
    if (it == gradients.end()) return;
    const MatrixXd& g = it->second;
    auto [m_it, fresh] = m_.try_emplace(name, MatrixXd::Zero(g.rows(), g.cols()));
    MatrixXd& v = v_.try_emplace(name, MatrixXd::Zero(g.rows(), g.cols())).first->second;
    MatrixXd& m = m_it->second;
    m = beta1 * m + (1.0 - beta1) * g;
    v = beta2 * v + (1.0 - beta2) * g.cwiseAbs2();
    param.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon);
  });
}

double clip_global_norm(GradientTable& gradients, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : gradients) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (auto& [name, g] : gradients) g *= f;
  }
  return norm;
}

namespace {

void check_dataset(const TimeSeriesDataset& dataset, const QuantileModel& model) {
  if (dataset.series.empty()) throw ConfigError("training data set is empty");
  if (model.horizon() != dataset.prediction_length) {
    throw ConfigError("picnn.input_dim (" + std::to_string(model.horizon()) + ") must equal the prediction length (" +
                      std::to_string(dataset.prediction_length) + ")");
  }
  if (model.encoder.config.feature_dim != feature_dim_for(dataset)) {
    throw ConfigError("encoder.feature_dim (" + std::to_string(model.encoder.config.feature_dim) +
                      ") does not match the data set (" + std::to_string(feature_dim_for(dataset)) + ")");
  }
  if (model.unconditional != dataset.unconditional) throw ConfigError("model and data set disagree on conditioning");
}

}  // namespace

TrainResult train(const TimeSeriesDataset& dataset, const EncoderConfig& encoder, const PicnnConfig& picnn,
                  const TrainConfig& config, const EpochHook& hook) {
  config.validate();
  std::mt19937_64 init_rng(substream(config.seed, "init"));
  QuantileModel model = QuantileModel::init(config.mode, encoder, picnn, init_rng);
  model.freq = dataset.freq;
  model.unconditional = dataset.unconditional;
  return train(dataset, std::move(model), config, hook);
}

TrainResult train(const TimeSeriesDataset& dataset, QuantileModel model, const TrainConfig& config,
                  const EpochHook& hook) {
  config.validate();
  model.validate();
  if (model.mode != config.mode) throw ConfigError("model mode differs from the training mode");
  check_dataset(dataset, model);

  TrainResult result;
  BatchLoss objective(model, config, config.batch_size);
  Adam adam;
  adam.learning_rate = config.learning_rate;
  std::mt19937_64 draw_rng(substream(config.seed, "training.draws"));
  const Index context = model.encoder.config.context_length, n = model.horizon();
  const int per_epoch = config.batch_size * config.batches_per_epoch;
  GradientTable grads;

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    InstanceSet set = make_instances(dataset, context, n, per_epoch,
                                     substream(config.seed, "training.windows", static_cast<std::uint64_t>(epoch)));
    result.skipped_series = set.skipped;
    double total = 0.0;
    for (int b = 0; b < config.batches_per_epoch; ++b) {
      Batch batch = make_batch(set.instances, static_cast<std::size_t>(b) * static_cast<std::size_t>(config.batch_size),
                               static_cast<std::size_t>(config.batch_size), config.mode, config.es_samples, draw_rng);
      const double loss = objective.evaluate(model, batch, &grads);
      const double norm = clip_global_norm(grads, config.grad_clip);
      if (!std::isfinite(loss) || !std::isfinite(norm)) throw NonFiniteLoss(epoch, b);
      adam.step(model, grads);
      total += loss;
    }
    result.loss_curve.push_back(total / config.batches_per_epoch);
    if (hook) hook(epoch, model, result.loss_curve.back());
  }
  result.model = std::move(model);
  return result;
}

void write_loss_curve(const std::vector<double>& curve, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,mean_loss\n";
  char buf[64];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", curve[i]);
    out << i + 1 << ',' << buf << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

MatrixXd IndependentBaseline::sample(Index count, std::mt19937_64& rng) const {
  const MatrixXd z = reference_draws(mean.size(), count, rng);
  return (stddev.asDiagonal() * z).colwise() + mean;
}

IndependentBaseline baseline_independent(const TimeSeriesDataset& dataset, Index n) {
  if (n < 1) throw ConfigError("baseline: horizon must be >= 1");
  std::vector<const TimeSeries*> used;
  for (const TimeSeries& s : dataset.series) {
    if (s.target.size() >= n) used.push_back(&s);
  }
  if (used.empty()) throw ConfigError("baseline: no series with at least " + std::to_string(n) + " points");
  MatrixXd tails(n, static_cast<Index>(used.size()));
  for (std::size_t j = 0; j < used.size(); ++j) tails.col(static_cast<Index>(j)) = used[j]->target.tail(n);
  IndependentBaseline b;
  b.mean = tails.rowwise().mean();
  b.stddev = ((tails.colwise() - b.mean).rowwise().squaredNorm() / static_cast<double>(tails.cols())).cwiseSqrt();
  return b;
}

}  // namespace mqf2
