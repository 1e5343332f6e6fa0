#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ocl {

// Error taxonomy. The CLI maps these onto exit codes, so every throw site
// below picks the category deliberately.
struct InvalidInput : std::runtime_error {
  explicit InvalidInput(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidConfig : std::runtime_error {
  explicit InvalidConfig(const std::string& msg) : std::runtime_error(msg) {}
};

struct DivergenceError : std::runtime_error {
  long step = -1;
  DivergenceError(const std::string& msg, long at_step)
      : std::runtime_error(msg + " (step " + std::to_string(at_step) + ")"),
        step(at_step) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

using VecD = std::vector<double>;

inline bool all_finite(const VecD& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Deterministic RNG. mt19937_64 output is fixed by the standard; the
// distribution transforms are hand-rolled because std::*_distribution is
// implementation-defined and would break byte-exact reproducibility across
// toolchains.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed) {}

  // Uniform in [0, 1) with 53 bits of precision.
  double uniform01() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Rejection sampling, unbiased.
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) throw InvalidInput("uniform_int: n must be positive");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller, no spare caching so the engine state alone captures the
  // whole sampler state (matters for checkpoint round-trips).
  double normal() {
    double u1 = uniform01();
    double u2 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (is.fail()) throw InvalidInput("Rng::deserialize: malformed state");
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace ocl
