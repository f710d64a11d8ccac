#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace hrf {

// mt19937 engine with explicit uniform/normal mappings. The standard
// distributions are implementation-defined, so the draw sequence here is
// pinned down by hand to keep trajectories reproducible and serializable.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(static_cast<std::mt19937::result_type>(seed)) {}

  // Uniform in [0, 1).
  float uniform() {
    return static_cast<float>(engine_() >> 8) * (1.0f / 16777216.0f);
  }

  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  int64_t uniform_int(int64_t n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^32.
    return static_cast<int64_t>(engine_() % static_cast<uint32_t>(n));
  }

  // Standard normal via Box-Muller. One value per call; the paired value is
  // discarded so state advances by exactly two draws.
  float normal() {
    float u1 = uniform();
    float u2 = uniform();
    if (u1 < 1e-12f) u1 = 1e-12f;
    return std::sqrt(-2.0f * std::log(u1)) * std::cos(6.28318530717958647692f * u2);
  }

  float normal(float mean, float stddev) { return mean + stddev * normal(); }

  std::string serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (is.fail()) throw std::runtime_error("Rng::deserialize: malformed state");
  }

  bool operator==(const Rng& o) const { return engine_ == o.engine_; }

 private:
  std::mt19937 engine_;
};

}  // namespace hrf
