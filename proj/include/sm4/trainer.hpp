#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sm4/checkpoint.hpp"
#include "sm4/corpus.hpp"
#include "sm4/model.hpp"
#include "sm4/rng.hpp"

namespace sm4 {

struct TrainConfig {
  int K = 10;
  int max_iters = 100;
  // Stop once an iteration's log-likelihood gain falls below this fraction of
  // the gain accumulated since initialization.
  double convergence = 0.01;
  bool early_stop = true;
  std::uint64_t seed = 0;
  // Fraction of max_iters before the convergence rule is consulted.
  double burn_in = 0.5;
  bool fix_hyper = false;
  double ridge_eps = 1e-6;
  double sigma2_floor = 1e-8;
  // Overrides the graph-size default for the link prior.
  std::optional<double> lambda0;

  void validate() const;
};

struct IterationMetrics {
  int iteration = 0;
  double log_likelihood = 0.0;
  double alpha = 0.0;
  double eta = 0.0;
  double delta = 0.0;
  double sigma2 = 0.0;
  bool accepted_alpha = false;
  bool accepted_eta = false;
  bool accepted_delta = false;
};

struct MhOutcome {
  Hyperparams hyper;
  bool accepted_alpha = false;
  bool accepted_eta = false;
  bool accepted_delta = false;
};

struct RegressionFit {
  std::vector<double> nu;
  double sigma2 = 1.0;
  double sigma2_unfloored = 1.0;
  std::size_t rows = 0;
};

// Pieces of the collapsed joint log-likelihood, split by the tuning parameter
// they depend on so Metropolis-Hastings can evaluate ratios cheaply.
double user_topic_log_term(const CountCache& cache, double alpha);
double word_log_term(const CountCache& cache, double eta);
double link_log_term(const CountCache& cache, double lambda1, double lambda0);
double switch_log_term(const CountCache& cache, double delta);
double label_log_term(const Dataset& data, const CountCache& cache,
                      std::span<const double> nu, double sigma2);

// Collapsed joint over (w, e, y, z, f, s) with theta, beta, Phi integrated out.
double joint_log_likelihood(const Dataset& data, const CountCache& cache,
                            const Hyperparams& hyper,
                            std::span<const double> nu, double sigma2);

// Closed-form ridge least squares of labels on unsmoothed theta-hat rows.
// Throws sm4::Error if no labeled user has any documents or links.
RegressionFit maximize_nu_sigma(const Dataset& data, const CountCache& cache,
                                double ridge_eps, double sigma2_floor);

// Independence-chain acceptance test in log space.
bool mh_accept(double log_ratio, double uniform);

// Collapsed Gibbs sampler over z, f, s. Owns the latent state and its counts;
// the dataset must outlive it.
class GibbsSampler {
 public:
  GibbsSampler(const Dataset& data, LatentState state, Hyperparams hyper,
               std::vector<double> nu, double sigma2, Rng rng);

  // Random z, f, s; alpha = eta = 1, delta = 0.5, nu = 0, sigma2 = 1,
  // lambda1 = 0.1 and lambda0 from the graph size.
  static GibbsSampler initialize(const Dataset& data, const TrainConfig& cfg);

  // Exact conditionals of one variable given all others. The cache is left
  // unchanged.
  std::vector<double> z_conditional(std::size_t doc);
  double f_conditional(std::size_t word);  // P(f = 1)
  std::vector<double> s_conditional(std::size_t half_link);

  // Decrement, draw from the conditional, increment.
  int sample_z(std::size_t doc);
  bool sample_f(std::size_t word);
  int sample_s(std::size_t half_link);

  // One pass over every z, then every f, then every s.
  void sweep();

  // One prior proposal each for alpha, eta and delta.
  MhOutcome mh_step();

  const Dataset& data() const { return *data_; }
  const LatentState& state() const { return state_; }
  const CountCache& cache() const { return cache_; }
  const Hyperparams& hyper() const { return hyper_; }
  const std::vector<double>& nu() const { return nu_; }
  double sigma2() const { return sigma2_; }
  Rng& rng() { return rng_; }

  void set_hyper(const Hyperparams& hyper);
  void set_regression(std::vector<double> nu, double sigma2);

  double log_likelihood() const;

 private:
  void remove_doc(std::size_t doc);
  void add_doc(std::size_t doc, int topic);
  void z_log_weights(std::size_t doc, std::vector<double>& out);
  void s_log_weights(std::size_t half_link, std::vector<double>& out);
  double label_log_factor(UserIndex user, double base_dot, int topic) const;
  double base_dot(UserIndex user) const;
  int draw(std::vector<double>& log_weights);

  const Dataset* data_;
  LatentState state_;
  CountCache cache_;
  Hyperparams hyper_;
  std::vector<double> nu_;
  double sigma2_;
  Rng rng_;

  std::vector<double> weights_;
  std::vector<std::int64_t> scratch_counts_;
  std::vector<std::int64_t> word_offsets_;
};

struct TrainResult {
  Checkpoint checkpoint;
  TopicParams params;
  std::vector<IterationMetrics> trace;
  bool converged = false;
};

using IterationObserver = std::function<void(const IterationMetrics&)>;

TrainResult train(const Dataset& data, const TrainConfig& cfg,
                  const IterationObserver& observer = {});

// Continue from a checkpoint until cfg.max_iters total iterations.
TrainResult resume_training(const Dataset& data, const Checkpoint& ckpt,
                            const TrainConfig& cfg,
                            const IterationObserver& observer = {});

}  // namespace sm4
