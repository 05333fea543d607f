#include "sm4/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "sm4/error.hpp"

namespace sm4 {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream,
                          std::uint64_t index) {
  // FNV-1a over the stream name, then mix with seed and index.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed ^ h) + index);
}

double Rng::uniform() {
  // (k + 0.5) / 2^53 never hits 0 or 1.
  const std::uint64_t k = engine_() >> 11;
  return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
}

std::size_t Rng::index(std::size_t n) {
  if (n <= 1) {
    engine_();
    return 0;
  }
  return std::min(n - 1, static_cast<std::size_t>(uniform() * n));
}

bool Rng::bernoulli(double p) { return uniform() < p; }

double Rng::exponential(double rate) { return -std::log(uniform()) / rate; }

double Rng::normal(double mean, double stddev) {
  // Box-Muller, one variate per call so the stream position is simple.
  const double u1 = uniform();
  const double u2 = uniform();
  return mean + stddev * std::sqrt(-2.0 * std::log(u1)) *
                    std::cos(2.0 * M_PI * u2);
}

double Rng::log_gamma_variate(double shape) {
  if (shape < 1.0) {
    // G(a) = G(a + 1) * U^(1/a), kept in log space for tiny a.
    return log_gamma_variate(shape + 1.0) + std::log(uniform()) / shape;
  }
  // Marsaglia-Tsang.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal(0.0, 1.0);
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
      return std::log(d * v);
    }
  }
}

double Rng::gamma(double shape) { return std::exp(log_gamma_variate(shape)); }

double Rng::beta(double a, double b) {
  const double la = log_gamma_variate(a);
  const double lb = log_gamma_variate(b);
  const double m = std::max(la, lb);
  const double ea = std::exp(la - m);
  const double eb = std::exp(lb - m);
  return ea / (ea + eb);
}

std::vector<double> Rng::dirichlet(double concentration, std::size_t dim) {
  std::vector<double> out(dim);
  double hi = -std::numeric_limits<double>::infinity();
  for (auto& x : out) {
    x = log_gamma_variate(concentration);
    hi = std::max(hi, x);
  }
  double total = 0.0;
  for (auto& x : out) {
    x = std::exp(x - hi);
    total += x;
  }
  for (auto& x : out) x /= total;
  return out;
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double target = uniform() * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    target -= weights[i];
    if (target < 0.0) return i;
  }
  // Rounding left target marginally >= 0; take the last positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return weights.size() - 1;
}

std::string Rng::save() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (!is) throw Error("corrupt random generator state");
}

}  // namespace sm4
