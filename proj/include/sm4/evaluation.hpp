#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sm4/corpus.hpp"
#include "sm4/matrix.hpp"

namespace sm4 {

// Normalized word frequencies over all of the user's documents.
std::vector<double> bow_features(const Dataset& data, UserIndex user);

std::vector<double> concat_features(std::span<const double> bow,
                                    std::span<const double> theta);

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<double> objective_trace;

  double decision(std::span<const double> x) const;
  int predict(std::span<const double> x) const {
    return decision(x) >= 0.0 ? 1 : -1;
  }
};

// 0.5 ||w||^2 + reg * sum_i log(1 + exp(-y_i (w.x_i + b))); bias unpenalized.
double logistic_objective(const Matrix<double>& X, std::span<const int> y,
                          double reg, std::span<const double> weights,
                          double bias, std::vector<double>* gradient = nullptr);

// L-BFGS with Armijo backtracking until ||grad|| <= 1e-6 or 10000 steps.
// Throws sm4::Error when y holds a single class.
LinearModel train_linear_classifier(const Matrix<double>& X,
                                    std::span<const int> y, double reg = 1.0);

struct CvResult {
  std::vector<double> fold_accuracy;
  double mean_accuracy = 0.0;
  std::vector<UserIndex> users;  // labeled users in evaluation order
  std::vector<int> fold_of;      // fold per entry of users
  std::vector<bool> correct;     // held-out prediction correct, per entry
  std::size_t num_correct() const;
};

// Seeded shuffle of the labeled users, contiguous folds. features has one row
// per user of the dataset; unlabeled rows are ignored.
CvResult cross_validate(const Dataset& data, const Matrix<double>& features,
                        int folds, std::uint64_t seed, double reg = 1.0,
                        unsigned threads = 1);

}  // namespace sm4
