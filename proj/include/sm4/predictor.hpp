#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sm4/corpus.hpp"
#include "sm4/model.hpp"
#include "sm4/rng.hpp"

namespace sm4 {

struct PredictConfig {
  int iters = 50;
  double burn_in = 0.5;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

// Topic pair explaining one friendship. a <= b always.
struct LinkPair {
  std::size_t edge = 0;
  int a = 0;
  int b = 0;
  double score = 0.0;
  bool operator==(const LinkPair&) const = default;
};

struct UserFeatures {
  Matrix<double> theta;  // P x K, rows on the simplex
  std::vector<LinkPair> link_pairs;
  bool operator==(const UserFeatures&) const = default;
};

struct UserError {
  UserIndex user = 0;
  std::string message;
};

struct PredictionReport {
  UserFeatures features;
  std::vector<UserError> errors;
};

// Gibbs inference of one user's document topics and foreground flags under
// frozen word distributions; returns the averaged smoothed feature vector.
std::vector<double> predict_user(std::span<const std::vector<TokenId>> docs,
                                 const TopicParams& params,
                                 const Hyperparams& hyper,
                                 const PredictConfig& cfg, Rng& rng);

// Best canonical topic pair for one friendship between users with features
// theta_p and theta_j. Ties go to the lexicographically smallest (a, b).
LinkPair best_link_pair(std::span<const double> theta_p,
                        std::span<const double> theta_j,
                        const UpperTriangular<double>& phi);

std::vector<LinkPair> assign_link_pairs(const Matrix<double>& theta,
                                        std::span<const Edge> edges,
                                        const UpperTriangular<double>& phi);

// Every user independently, each with its own stream derived from
// (cfg.seed, user index), so output is independent of cfg.threads.
PredictionReport predict_all(const Dataset& data, const TopicParams& params,
                             const Hyperparams& hyper,
                             const PredictConfig& cfg);

// Line-delimited records:
//   {"kind":"user","id":...,"theta":[...]}
//   {"kind":"edge","source":...,"target":...,"pair":[a,b],"score":...}
void write_features(const Dataset& data, const UserFeatures& features,
                    const std::filesystem::path& path);

struct FeaturesFile {
  std::vector<std::string> user_ids;
  Matrix<double> theta;
  struct EdgeRecord {
    std::string source;
    std::string target;
    int a = 0;
    int b = 0;
    double score = 0.0;
  };
  std::vector<EdgeRecord> edges;
};

FeaturesFile read_features(const std::filesystem::path& path);

}  // namespace sm4
