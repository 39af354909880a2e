#pragma once

#include "mqf2/encoder.hpp"
#include "mqf2/picnn.hpp"

#include <random>
#include <string>

namespace mqf2 {

/// Energy-score models push reference draws forward through g; likelihood
/// models treat g as a flow from (scaled) targets to the reference.
enum class Mode { energy_score, max_likelihood };

std::string to_string(Mode mode);
/// Accepts "es" / "energy-score" and "ml" / "max-likelihood".
Mode parse_mode(const std::string& text);

struct QuantileModel {
  Mode mode = Mode::energy_score;
  EncoderParams encoder;
  PicnnParams picnn;
  std::string freq;            // dataset frequency the calendar features were built for
  bool unconditional = false;  // whole series is the target; the encoder sees zeros

  Eigen::Index horizon() const { return picnn.config.input_dim; }
  /// Cross-module consistency: PICNN context size equals the encoder hidden size.
  void validate() const;

  static QuantileModel init(Mode mode, const EncoderConfig& encoder, const PicnnConfig& picnn, std::mt19937_64& rng);

  /// Visits encoder then PICNN tensors.
  template <class F>
  void for_each_tensor(F&& f) {
    encoder.for_each_tensor(f);
    picnn.for_each_tensor(f);
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    encoder.for_each_tensor(f);
    picnn.for_each_tensor(f);
  }
};

inline constexpr int kCheckpointVersion = 1;

/// JSON checkpoint; tensors are stored as "%.17g" decimal strings so that a
/// save/load round trip is bit-exact.
void save_checkpoint(const QuantileModel& model, const std::string& path);
/// With `validate` false, configuration checks are skipped so that property
/// checks can report on a damaged model instead of refusing to load it.
QuantileModel load_checkpoint(const std::string& path, bool validate = true);

}  // namespace mqf2
