#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "sm4/corpus.hpp"
#include "sm4/matrix.hpp"

namespace sm4 {

struct Hyperparams {
  int K = 1;
  double alpha = 1.0;   // Dirichlet concentration on user features
  double eta = 1.0;     // Dirichlet concentration on word distributions
  double delta = 0.5;   // foreground probability
  double lambda1 = 0.1; // Beta prior on link probabilities
  double lambda0 = 1.0;

  // Throws sm4::Error unless every parameter is in its domain.
  void validate() const;
  bool operator==(const Hyperparams&) const = default;
};

// ln(#zero links / K^2), the pseudo-count standing in for absent friendships.
// Throws sm4::Error when the result would not be positive.
double compute_lambda0(std::size_t num_users, std::size_t num_edges, int K);

// Latent assignments, flat over the dataset's index:
// z per document, f per word position, s per half-link.
struct LatentState {
  std::vector<std::int32_t> z;
  std::vector<std::uint8_t> f;
  std::vector<std::int32_t> s;
  bool operator==(const LatentState&) const = default;
};

// Sufficient statistics of a LatentState. Samplers keep this in step with the
// state through decrement / increment pairs; recount() is the reference.
struct CountCache {
  CountCache() = default;
  CountCache(int K, std::size_t V, std::size_t P);

  static CountCache recount(const Dataset& data, const LatentState& state,
                            int K);

  int K = 0;
  std::size_t V = 0;
  std::size_t P = 0;
  Matrix<std::int64_t> user_topic;          // P x K: docs + half-links per topic
  std::vector<std::int64_t> user_denom;     // D_i + |Neighbors(i)|
  Matrix<std::int64_t> topic_word;          // K x V foreground words
  std::vector<std::int64_t> topic_word_total;
  std::vector<std::int64_t> back_word;      // V background words
  std::int64_t back_total = 0;
  UpperTriangular<std::int64_t> pair_link;  // positive links per topic pair

  std::int64_t foreground_total() const;
  bool operator==(const CountCache&) const = default;
};

struct TopicParams {
  int K = 0;
  std::size_t V = 0;
  Matrix<double> beta;            // K x V
  std::vector<double> beta_back;  // V
  UpperTriangular<double> phi;    // K x K, a <= b
  std::vector<double> nu;         // K
  double sigma2 = 1.0;
};

// Posterior means of the topic and background word distributions.
std::pair<Matrix<double>, std::vector<double>> recover_beta(
    const CountCache& cache, double eta);

// (lambda1 + C_ab) / (lambda1 + lambda0 + C_ab) for every a <= b.
UpperTriangular<double> recover_phi(const CountCache& cache, double lambda1,
                                    double lambda0);

// Unsmoothed: the empirical average of the user's topic indicators (throws if
// the user has no documents and no links). Smoothed: posterior mean under
// Dirichlet(alpha).
std::vector<double> theta_hat(const CountCache& cache, UserIndex i,
                              double alpha, bool smoothed);

TopicParams recover_params(const CountCache& cache, const Hyperparams& hyper,
                           std::vector<double> nu, double sigma2);

}  // namespace sm4
