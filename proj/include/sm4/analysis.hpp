#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sm4/matrix.hpp"
#include "sm4/model.hpp"

namespace sm4 {

struct TokenWeight {
  TokenId token = 0;
  double probability = 0.0;
};

// n most probable tokens of topic a, descending, ties by token id.
std::vector<TokenWeight> topic_top_words(const TopicParams& params, int topic,
                                         std::size_t n);

// Column sums of theta divided by the number of users.
std::vector<double> topic_popularity(const Matrix<double>& theta);

struct PairRank {
  int a = 0;
  int b = 0;
  std::size_t count = 0;
  double score = 0.0;
};

// Pair counts normalized by popularity[a] * popularity[b] * num_edges,
// best first. Pairs with no links are omitted.
std::vector<PairRank> rank_topic_pairs(std::span<const std::pair<int, int>> pairs,
                                       std::span<const double> popularity,
                                       std::size_t top_n);

struct TopicMatch {
  int topic_a = 0;
  int topic_b = 0;
  double cosine = 0.0;
};

// Greedy maximum-cosine matching between the rows of two word-distribution
// matrices over the same vocabulary.
std::vector<TopicMatch> match_topics(const Matrix<double>& beta_a,
                                     const Matrix<double>& beta_b,
                                     std::size_t n_matches);

struct ChiSquare {
  double statistic = 0.0;
  double p_value = 1.0;
};

// Pearson chi-square on the 2x2 table (correct, incorrect) x (method a, b),
// one degree of freedom, no continuity correction.
ChiSquare chi_square_test(std::size_t correct_a, std::size_t n_a,
                          std::size_t correct_b, std::size_t n_b);

// Upper tail of the chi-square distribution.
double chi_square_survival(double x, double dof);
// Regularized upper incomplete gamma Q(a, x).
double regularized_gamma_q(double a, double x);

struct VizInput {
  const TopicParams* params = nullptr;
  const std::vector<std::string>* vocab = nullptr;
  std::vector<double> popularity;
  std::vector<PairRank> rankings;
  std::size_t top_words = 5;
};

// Writes a JSON summary and a DOT graph of topics and ranked pairs.
void export_viz(const VizInput& input, const std::filesystem::path& summary_path,
                const std::filesystem::path& dot_path);

std::string render_dot(const VizInput& input);
std::string render_summary(const VizInput& input);

}  // namespace sm4
