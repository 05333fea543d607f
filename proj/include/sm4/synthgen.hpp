#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <variant>
#include <vector>

#include "sm4/corpus.hpp"
#include "sm4/model.hpp"

namespace sm4 {

struct GenSpec {
  int K = 5;
  std::size_t V = 200;
  std::size_t P = 100;
  std::size_t min_docs = 10;
  std::size_t max_docs = 10;
  std::size_t min_words = 5;
  std::size_t max_words = 5;
  double alpha = 0.1;
  double eta = 0.05;
  double delta = 0.8;
  double lambda1 = 0.1;
  double lambda0 = 5.0;
  // Drawn from Normal(0, 1) per topic when empty.
  std::vector<double> nu;
  double sigma2 = 0.1;
  // When set, every Phi_ab takes this value instead of a Beta draw.
  std::optional<double> forced_phi;
  // Planted link matrix; overrides the Beta draws and forced_phi.
  std::optional<UpperTriangular<double>> planted_phi;

  void validate() const;
};

struct GroundTruth {
  TopicParams params;
  Matrix<double> theta;      // P x K
  LatentState state;         // aligned with the returned dataset's index
  std::vector<double> y;     // continuous labels before thresholding
};

struct Generated {
  Dataset data;
  GroundTruth truth;
};

Generated generate_dataset(const GenSpec& spec, std::uint64_t seed);

void write_truth(const Generated& gen, const std::filesystem::path& path);

struct TargetZ {
  std::size_t doc;
};
struct TargetF {
  std::size_t word;
};
struct TargetS {
  std::size_t half_link;
};
using LatentTarget = std::variant<TargetZ, TargetF, TargetS>;

// Collapsed joint evaluated straight from the assignments, without caches.
double reference_log_joint(const Dataset& data, const LatentState& state,
                           const Hyperparams& hyper,
                           std::span<const double> nu, double sigma2);

// Exact conditional of one latent variable by evaluating the collapsed joint
// at each of its values. Refuses instances with more than 64 words + links.
std::vector<double> enumerate_conditionals(const Dataset& data,
                                           const LatentState& state,
                                           const LatentTarget& target,
                                           const Hyperparams& hyper,
                                           std::span<const double> nu,
                                           double sigma2);

}  // namespace sm4
