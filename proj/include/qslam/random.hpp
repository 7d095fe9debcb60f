#pragma once

#include <cmath>
#include <cstdint>

#include "qslam/geometry.hpp"

namespace qslam {

/// Deterministic splitmix64 generator. Distribution helpers are written out
/// so streams are reproducible independent of the standard library.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return double(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t uniform_index(uint64_t n) { return n == 0 ? 0 : next() % n; }

  /// Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * kPi * u2);
    have_spare_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  Eigen::Vector3d normal_vec3(double sigma) {
    return {sigma * normal(), sigma * normal(), sigma * normal()};
  }

  /// Derives an independent stream, e.g. per frame or per object.
  Rng fork(uint64_t salt) {
    Rng r(state_ ^ (0x632be59bd9b4e019ULL * (salt + 1)));
    r.next();
    return r;
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0;
};

}  // namespace qslam
