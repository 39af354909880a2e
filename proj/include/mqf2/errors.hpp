#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mqf2 {

/// Base class for all library errors. The `kind` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  enum class Kind { config, numerical, io, usage };

  Error(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& what) : Error(Kind::usage, "shape mismatch: " + what) {}
};

struct UnboundLeaf : Error {
  explicit UnboundLeaf(const std::string& name) : Error(Kind::usage, "unbound leaf '" + name + "'"), leaf(name) {}
  std::string leaf;
};

struct NonConvergence : Error {
  NonConvergence(double residual_, int iterations_)
      : Error(Kind::numerical, "L-BFGS inversion did not converge (residual " + std::to_string(residual_) + " after " +
                                   std::to_string(iterations_) + " iterations)"),
        residual(residual_),
        iterations(iterations_) {}
  double residual;
  int iterations;
};

struct HessianNotPD : Error {
  explicit HessianNotPD(const std::string& where = "")
      : Error(Kind::numerical, "Hessian is not positive definite" + (where.empty() ? "" : " (" + where + ")")) {}
};

struct NonFiniteLoss : Error {
  NonFiniteLoss(int epoch_, int batch_)
      : Error(Kind::numerical,
              "non-finite loss at epoch " + std::to_string(epoch_) + ", batch " + std::to_string(batch_)),
        epoch(epoch_),
        batch(batch_) {}
  int epoch;
  int batch;
};

struct ZeroDenominator : Error {
  ZeroDenominator() : Error(Kind::numerical, "sum of absolute targets is zero") {}
};

struct ZeroSeasonalError : Error {
  ZeroSeasonalError() : Error(Kind::numerical, "seasonal error is zero or undefined") {}
};

struct DegenerateVariance : Error {
  explicit DegenerateVariance(int step)
      : Error(Kind::numerical, "zero variance at horizon step " + std::to_string(step)), step(step) {}
  int step;
};

struct ParseError : Error {
  ParseError(const std::string& path, int line_, const std::string& what)
      : Error(Kind::io, path + ":" + std::to_string(line_) + ": " + what), line(line_) {}
  int line;
};

struct MissingMetadata : Error {
  explicit MissingMetadata(const std::string& what) : Error(Kind::io, "missing metadata: " + what) {}
};

struct LengthMismatch : Error {
  explicit LengthMismatch(const std::string& what) : Error(Kind::io, "length mismatch: " + what) {}
};

struct SeriesTooShort : Error {
  explicit SeriesTooShort(std::vector<std::string> ids_)
      : Error(Kind::config, "series too short: " + join(ids_)), ids(std::move(ids_)) {}
  std::vector<std::string> ids;

 private:
  static std::string join(const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) out += (out.empty() ? "" : ", ") + id;
    return out;
  }
};

struct UnknownFrequency : Error {
  explicit UnknownFrequency(const std::string& freq) : Error(Kind::config, "unknown frequency '" + freq + "'") {}
};

struct FactorizationFailure : Error {
  explicit FactorizationFailure(const std::string& what) : Error(Kind::numerical, "factorization failed: " + what) {}
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& what) : Error(Kind::config, what) {}
};

struct IoError : Error {
  explicit IoError(const std::string& what) : Error(Kind::io, what) {}
};

}  // namespace mqf2
