#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mfe {

// Base of every error raised by the library. `kind()` is a stable short
// identifier used in CLI diagnostics and tests.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

#define MFE_DEFINE_ERROR(Name)                                                 \
  class Name : public Error {                                                  \
  public:                                                                      \
    explicit Name(const std::string& what) : Error(#Name, what) {}            \
  };

MFE_DEFINE_ERROR(QuadratureNotConverged)
MFE_DEFINE_ERROR(DivisionDegenerate)
MFE_DEFINE_ERROR(AlphaTooSmall)
MFE_DEFINE_ERROR(GridTooCoarse)
MFE_DEFINE_ERROR(DensityNotNormalizable)
MFE_DEFINE_ERROR(NonPositiveDensity)
MFE_DEFINE_ERROR(DegenerateFit)
MFE_DEFINE_ERROR(InvalidArgument)

#undef MFE_DEFINE_ERROR

// Raised when a state coordinate becomes NaN/Inf. Carries enough context to
// replay the failing step.
class NonFiniteState : public Error {
public:
  NonFiniteState(const std::string& what, std::uint64_t seed, std::int64_t step)
      : Error("NonFiniteState", what + " (seed " + std::to_string(seed) +
                                    ", step " + std::to_string(step) + ")"),
        seed_(seed), step_(step) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::int64_t step() const noexcept { return step_; }

private:
  std::uint64_t seed_;
  std::int64_t step_;
};

// Configuration problems; always names the offending key.
class ConfigError : public Error {
public:
  ConfigError(std::string key, const std::string& constraint)
      : Error("ConfigError", key + ": " + constraint), key_(std::move(key)) {}

  const std::string& key() const noexcept { return key_; }

private:
  std::string key_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

} // namespace mfe
