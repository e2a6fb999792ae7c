#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "qfc/errors.hpp"

namespace qfc {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for trajectory i of a batch; independent of thread layout.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline std::size_t step_count(double t0, double t1, double dt) {
  if (!(dt > 0.0) || !(t1 > t0)) throw ValidationError("time grid: need dt > 0 and T > t0");
  const double k = (t1 - t0) / dt;
  const double kr = std::round(k);
  if (kr < 1.0 || std::abs(k - kr) > 1e-6 * std::max(1.0, kr))
    throw ValidationError("time grid: (T - t0)/dt must be an integer");
  return static_cast<std::size_t>(kr);
}

/// Brownian increments on a uniform mesh, reproducible from (seed, refinements).
/// A path refined r times was generated at dt * 2^r and bridged down, so
/// coarse and fine versions share the same Brownian path at common times.
class NoisePath {
 public:
  static NoisePath generate(double t0, double t1, double dt, std::uint64_t seed) {
    NoisePath p;
    p.t0_ = t0;
    p.t1_ = t1;
    p.dt_ = dt;
    p.seed_ = seed;
    const std::size_t k = step_count(t0, t1, dt);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sd = std::sqrt(dt);
    p.dw_.resize(k);
    for (auto& x : p.dw_) x = sd * normal(rng);
    return p;
  }

  /// Path with every increment split by a Brownian-bridge midpoint.
  NoisePath refined() const {
    NoisePath p;
    p.t0_ = t0_;
    p.t1_ = t1_;
    p.dt_ = 0.5 * dt_;
    p.seed_ = seed_;
    p.refinements_ = refinements_ + 1;
    std::mt19937_64 rng(splitmix64(seed_ + 0x5851f42d4c957f2dULL * static_cast<std::uint64_t>(p.refinements_)));
    std::normal_distribution<double> normal(0.0, 1.0);
    const double bridge_sd = 0.5 * std::sqrt(dt_);
    p.dw_.resize(2 * dw_.size());
    for (std::size_t k = 0; k < dw_.size(); ++k) {
      const double first = 0.5 * dw_[k] + bridge_sd * normal(rng);
      p.dw_[2 * k] = first;
      p.dw_[2 * k + 1] = dw_[k] - first;
    }
    return p;
  }

  NoisePath refined(int times) const {
    NoisePath p = *this;
    for (int i = 0; i < times; ++i) p = p.refined();
    return p;
  }

  /// Regenerates the path described by {t0, T, dt, seed, refinements}.
  static NoisePath from_description(double t0, double t1, double dt, std::uint64_t seed, int refinements = 0) {
    return generate(t0, t1, dt * std::ldexp(1.0, refinements), seed).refined(refinements);
  }

  static NoisePath zero(double t0, double t1, double dt) {
    NoisePath p;
    p.t0_ = t0;
    p.t1_ = t1;
    p.dt_ = dt;
    p.dw_.assign(step_count(t0, t1, dt), 0.0);
    return p;
  }

  double t0() const noexcept { return t0_; }
  double t1() const noexcept { return t1_; }
  double dt() const noexcept { return dt_; }
  std::uint64_t seed() const noexcept { return seed_; }
  int refinements() const noexcept { return refinements_; }
  std::size_t steps() const noexcept { return dw_.size(); }
  const std::vector<double>& increments() const noexcept { return dw_; }
  double time(std::size_t k) const noexcept { return t0_ + static_cast<double>(k) * dt_; }

  /// W at mesh point k (W(t0) = 0).
  double w_at(std::size_t k) const {
    double w = 0.0;
    for (std::size_t j = 0; j < k; ++j) w += dw_[j];
    return w;
  }

 private:
  NoisePath() = default;

  double t0_ = 0.0;
  double t1_ = 0.0;
  double dt_ = 0.0;
  std::uint64_t seed_ = 0;
  int refinements_ = 0;
  std::vector<double> dw_;
};

}  // namespace qfc
