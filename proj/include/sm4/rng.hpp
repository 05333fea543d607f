#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sm4 {

// Seed for a named sub-stream, e.g. derive_seed(seed, "predict:user", i).
// Every random consumer in the pipeline draws from its own stream so results
// do not depend on scheduling or on which other stages ran.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::uint64_t index = 0);

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Uniform on the open interval (0, 1), 53 bits of resolution.
  double uniform();
  std::size_t index(std::size_t n);
  bool bernoulli(double p);
  double exponential(double rate = 1.0);
  double normal(double mean, double stddev);
  double gamma(double shape);
  double beta(double a, double b);
  // Symmetric Dirichlet draw, stable for very small concentrations.
  std::vector<double> dirichlet(double concentration, std::size_t dim);
  // Draw an index proportional to nonnegative weights.
  std::size_t categorical(std::span<const double> weights);

  // Textual engine state; restore(save()) continues the exact same stream.
  std::string save() const;
  void restore(const std::string& state);

  std::mt19937_64& engine() { return engine_; }

 private:
  double log_gamma_variate(double shape);

  std::mt19937_64 engine_;
};

}  // namespace sm4
