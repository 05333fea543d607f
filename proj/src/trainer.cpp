#include "sm4/trainer.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "sm4/error.hpp"

namespace sm4 {

void TrainConfig::validate() const {
  if (K < 1) throw Error("K must be at least 1");
  if (max_iters < 1) throw Error("max_iters must be at least 1");
  if (!(convergence > 0.0 && convergence < 1.0)) {
    throw Error("convergence threshold must lie in (0, 1)");
  }
  if (!(burn_in >= 0.0 && burn_in < 1.0)) {
    throw Error("burn_in must lie in [0, 1)");
  }
  if (!(ridge_eps >= 0.0)) throw Error("ridge_eps must be nonnegative");
  if (!(sigma2_floor > 0.0)) throw Error("sigma2_floor must be positive");
  if (lambda0 && !(*lambda0 > 0.0)) throw Error("lambda0 must be positive");
}

// ---------------------------------------------------------------------------
// Collapsed joint

double user_topic_log_term(const CountCache& cache, double alpha) {
  const double K_alpha = cache.K * alpha;
  const double lg_K_alpha = std::lgamma(K_alpha);
  const double lg_alpha = std::lgamma(alpha);
  double total = 0.0;
  for (std::size_t i = 0; i < cache.P; ++i) {
    const std::int64_t n = cache.user_denom[i];
    if (n == 0) continue;
    total += lg_K_alpha - std::lgamma(K_alpha + static_cast<double>(n));
    for (int a = 0; a < cache.K; ++a) {
      const std::int64_t c = cache.user_topic(i, a);
      if (c > 0) total += std::lgamma(alpha + static_cast<double>(c)) - lg_alpha;
    }
  }
  return total;
}

namespace {

double dcm_log_term(std::span<const std::int64_t> counts, std::int64_t total,
                    double eta) {
  const double V_eta = static_cast<double>(counts.size()) * eta;
  const double lg_eta = std::lgamma(eta);
  double out =
      std::lgamma(V_eta) - std::lgamma(V_eta + static_cast<double>(total));
  for (std::int64_t c : counts) {
    if (c > 0) out += std::lgamma(eta + static_cast<double>(c)) - lg_eta;
  }
  return out;
}

}  // namespace

double word_log_term(const CountCache& cache, double eta) {
  double total = 0.0;
  for (int a = 0; a < cache.K; ++a) {
    total += dcm_log_term(cache.topic_word.row(a), cache.topic_word_total[a], eta);
  }
  total += dcm_log_term(cache.back_word, cache.back_total, eta);
  return total;
}

double link_log_term(const CountCache& cache, double lambda1, double lambda0) {
  const double lg_l1 = std::lgamma(lambda1);
  const double lg_l10 = std::lgamma(lambda1 + lambda0);
  double total = 0.0;
  for (std::int64_t c : cache.pair_link.data()) {
    if (c == 0) continue;
    const double x = static_cast<double>(c);
    total += std::lgamma(lambda1 + x) - lg_l1 + lg_l10 -
             std::lgamma(lambda1 + lambda0 + x);
  }
  return total;
}

double switch_log_term(const CountCache& cache, double delta) {
  return static_cast<double>(cache.foreground_total()) * std::log(delta) +
         static_cast<double>(cache.back_total) * std::log1p(-delta);
}

double label_log_term(const Dataset& data, const CountCache& cache,
                      std::span<const double> nu, double sigma2) {
  const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi * sigma2);
  double total = 0.0;
  for (std::size_t i = 0; i < cache.P; ++i) {
    const auto y = data.label(static_cast<UserIndex>(i));
    if (!y || cache.user_denom[i] == 0) continue;
    double dot = 0.0;
    for (int a = 0; a < cache.K; ++a) {
      dot += static_cast<double>(cache.user_topic(i, a)) * nu[a];
    }
    const double r = *y - dot / static_cast<double>(cache.user_denom[i]);
    total += log_norm - r * r / (2.0 * sigma2);
  }
  return total;
}

double joint_log_likelihood(const Dataset& data, const CountCache& cache,
                            const Hyperparams& hyper,
                            std::span<const double> nu, double sigma2) {
  return user_topic_log_term(cache, hyper.alpha) +
         word_log_term(cache, hyper.eta) +
         link_log_term(cache, hyper.lambda1, hyper.lambda0) +
         switch_log_term(cache, hyper.delta) +
         label_log_term(data, cache, nu, sigma2);
}

// ---------------------------------------------------------------------------
// Regression step

RegressionFit maximize_nu_sigma(const Dataset& data, const CountCache& cache,
                                double ridge_eps, double sigma2_floor) {
  const int K = cache.K;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(K, K);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(K);
  double btb = 0.0;
  std::size_t rows = 0;
  Eigen::VectorXd row(K);
  for (std::size_t i = 0; i < cache.P; ++i) {
    const auto y = data.label(static_cast<UserIndex>(i));
    if (!y || cache.user_denom[i] == 0) continue;
    const double denom = static_cast<double>(cache.user_denom[i]);
    for (int a = 0; a < K; ++a) {
      row[a] = static_cast<double>(cache.user_topic(i, a)) / denom;
    }
    gram.noalias() += row * row.transpose();
    atb += *y * row;
    btb += static_cast<double>(*y) * *y;
    ++rows;
  }
  if (rows == 0) throw Error("label view empty; run unsupervised");

  gram.diagonal().array() += ridge_eps;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  Eigen::VectorXd nu = ldlt.solve(atb);
  // One step of iterative refinement.
  nu += ldlt.solve(atb - gram * nu);

  RegressionFit fit;
  fit.rows = rows;
  fit.nu.assign(nu.data(), nu.data() + K);
  fit.sigma2_unfloored = (btb - atb.dot(nu)) / static_cast<double>(rows);
  fit.sigma2 = std::max(sigma2_floor, fit.sigma2_unfloored);
  return fit;
}

bool mh_accept(double log_ratio, double uniform) {
  return log_ratio >= 0.0 || std::log(uniform) < log_ratio;
}

// ---------------------------------------------------------------------------
// Sampler

namespace {

// Turns log weights into probabilities in place.
void normalize_log(std::vector<double>& w) {
  const double hi = *std::max_element(w.begin(), w.end());
  double total = 0.0;
  for (double& x : w) {
    x = std::exp(x - hi);
    total += x;
  }
  for (double& x : w) x /= total;
}

}  // namespace

GibbsSampler::GibbsSampler(const Dataset& data, LatentState state,
                           Hyperparams hyper, std::vector<double> nu,
                           double sigma2, Rng rng)
    : data_(&data),
      state_(std::move(state)),
      hyper_(hyper),
      nu_(std::move(nu)),
      sigma2_(sigma2),
      rng_(std::move(rng)) {
  hyper_.validate();
  if (nu_.size() != static_cast<std::size_t>(hyper_.K)) {
    throw Error("nu must have K entries");
  }
  if (!(sigma2_ > 0.0)) throw Error("sigma2 must be positive");
  cache_ = CountCache::recount(data, state_, hyper_.K);
  weights_.resize(hyper_.K);
  scratch_counts_.assign(data.vocab_size(), 0);
}

GibbsSampler GibbsSampler::initialize(const Dataset& data,
                                      const TrainConfig& cfg) {
  cfg.validate();
  Hyperparams hyper;
  hyper.K = cfg.K;
  hyper.lambda0 = cfg.lambda0 ? *cfg.lambda0
                              : compute_lambda0(data.num_users(),
                                                data.edges().size(), cfg.K);
  Rng rng(derive_seed(cfg.seed, "train"));
  LatentState state;
  const auto K = static_cast<std::size_t>(cfg.K);
  state.z.resize(data.num_docs());
  for (auto& z : state.z) z = static_cast<std::int32_t>(rng.index(K));
  state.f.resize(data.num_words());
  for (auto& f : state.f) f = rng.bernoulli(0.5) ? 1 : 0;
  state.s.resize(data.num_half_links());
  for (auto& s : state.s) s = static_cast<std::int32_t>(rng.index(K));
  return GibbsSampler(data, std::move(state), hyper,
                      std::vector<double>(cfg.K, 0.0), 1.0, std::move(rng));
}

void GibbsSampler::set_hyper(const Hyperparams& hyper) {
  hyper.validate();
  if (hyper.K != hyper_.K) throw Error("cannot change K of a running sampler");
  hyper_ = hyper;
}

void GibbsSampler::set_regression(std::vector<double> nu, double sigma2) {
  if (nu.size() != nu_.size()) throw Error("nu must have K entries");
  if (!(sigma2 > 0.0)) throw Error("sigma2 must be positive");
  nu_ = std::move(nu);
  sigma2_ = sigma2;
}

double GibbsSampler::log_likelihood() const {
  return joint_log_likelihood(*data_, cache_, hyper_, nu_, sigma2_);
}

double GibbsSampler::base_dot(UserIndex user) const {
  double dot = 0.0;
  for (int a = 0; a < hyper_.K; ++a) {
    dot += static_cast<double>(cache_.user_topic(user, a)) * nu_[a];
  }
  return dot;
}

double GibbsSampler::label_log_factor(UserIndex user, double base,
                                      int topic) const {
  const auto y = data_->label(user);
  const std::int64_t denom = cache_.user_denom[user];
  if (!y || denom == 0) return 0.0;
  const double r = *y - (base + nu_[topic]) / static_cast<double>(denom);
  return -r * r / (2.0 * sigma2_);
}

int GibbsSampler::draw(std::vector<double>& log_weights) {
  normalize_log(log_weights);
  return static_cast<int>(rng_.categorical(log_weights));
}

void GibbsSampler::remove_doc(std::size_t doc) {
  const int z = state_.z[doc];
  --cache_.user_topic(data_->doc_user(doc), z);
  for (std::size_t w = data_->doc_begin(doc); w < data_->doc_end(doc); ++w) {
    if (state_.f[w]) {
      --cache_.topic_word(z, data_->word(w));
      --cache_.topic_word_total[z];
    }
  }
}

void GibbsSampler::add_doc(std::size_t doc, int topic) {
  state_.z[doc] = topic;
  ++cache_.user_topic(data_->doc_user(doc), topic);
  for (std::size_t w = data_->doc_begin(doc); w < data_->doc_end(doc); ++w) {
    if (state_.f[w]) {
      ++cache_.topic_word(topic, data_->word(w));
      ++cache_.topic_word_total[topic];
    }
  }
}

void GibbsSampler::z_log_weights(std::size_t doc, std::vector<double>& out) {
  const UserIndex user = data_->doc_user(doc);
  const double eta = hyper_.eta;
  const double V_eta = static_cast<double>(cache_.V) * eta;

  // Foreground tokens of the document with the number of earlier copies of
  // the same token, so the rising-factorial form of the DCM ratio applies.
  word_offsets_.clear();
  for (std::size_t w = data_->doc_begin(doc); w < data_->doc_end(doc); ++w) {
    if (!state_.f[w]) continue;
    const TokenId t = data_->word(w);
    word_offsets_.push_back(t);
    word_offsets_.push_back(scratch_counts_[t]++);
  }
  for (std::size_t j = 0; j < word_offsets_.size(); j += 2) {
    scratch_counts_[word_offsets_[j]] = 0;
  }
  const std::size_t n_fg = word_offsets_.size() / 2;

  const double base = base_dot(user);
  out.resize(hyper_.K);
  for (int m = 0; m < hyper_.K; ++m) {
    double lw = std::log(static_cast<double>(cache_.user_topic(user, m)) +
                        hyper_.alpha);
    const double total = static_cast<double>(cache_.topic_word_total[m]);
    for (std::size_t j = 0; j < word_offsets_.size(); j += 2) {
      const auto t = static_cast<std::size_t>(word_offsets_[j]);
      lw += std::log(eta + static_cast<double>(cache_.topic_word(m, t)) +
                     static_cast<double>(word_offsets_[j + 1]));
    }
    for (std::size_t t = 0; t < n_fg; ++t) {
      lw -= std::log(V_eta + total + static_cast<double>(t));
    }
    lw += label_log_factor(user, base, m);
    out[m] = lw;
  }
}

void GibbsSampler::s_log_weights(std::size_t h, std::vector<double>& out) {
  const UserIndex user = data_->half_link_source(h);
  const int partner = state_.s[h ^ 1];
  const double base = base_dot(user);
  out.resize(hyper_.K);
  for (int m = 0; m < hyper_.K; ++m) {
    const double c = static_cast<double>(cache_.pair_link(m, partner));
    out[m] = std::log(static_cast<double>(cache_.user_topic(user, m)) +
                      hyper_.alpha) +
             std::log(hyper_.lambda1 + c) -
             std::log(hyper_.lambda1 + hyper_.lambda0 + c) +
             label_log_factor(user, base, m);
  }
}

std::vector<double> GibbsSampler::z_conditional(std::size_t doc) {
  const int current = state_.z.at(doc);
  remove_doc(doc);
  std::vector<double> w;
  z_log_weights(doc, w);
  add_doc(doc, current);
  normalize_log(w);
  return w;
}

int GibbsSampler::sample_z(std::size_t doc) {
  remove_doc(doc);
  z_log_weights(doc, weights_);
  const int m = draw(weights_);
  add_doc(doc, m);
  return m;
}

double GibbsSampler::f_conditional(std::size_t word) {
  const std::size_t doc = data_->word_doc(word);
  const int z = state_.z[doc];
  const TokenId t = data_->word(word);
  const std::int64_t fg_self = state_.f.at(word) ? 1 : 0;
  const std::int64_t bg_self = 1 - fg_self;
  const double eta = hyper_.eta;
  const double V_eta = static_cast<double>(cache_.V) * eta;
  const double p1 =
      (eta + static_cast<double>(cache_.topic_word(z, t) - fg_self)) *
      hyper_.delta /
      (V_eta + static_cast<double>(cache_.topic_word_total[z] - fg_self));
  const double p0 =
      (eta + static_cast<double>(cache_.back_word[t] - bg_self)) *
      (1.0 - hyper_.delta) /
      (V_eta + static_cast<double>(cache_.back_total - bg_self));
  return p1 / (p1 + p0);
}

bool GibbsSampler::sample_f(std::size_t word) {
  const std::size_t doc = data_->word_doc(word);
  const int z = state_.z[doc];
  const TokenId t = data_->word(word);
  const double p = f_conditional(word);
  if (state_.f[word]) {
    --cache_.topic_word(z, t);
    --cache_.topic_word_total[z];
  } else {
    --cache_.back_word[t];
    --cache_.back_total;
  }
  const bool fg = rng_.bernoulli(p);
  state_.f[word] = fg ? 1 : 0;
  if (fg) {
    ++cache_.topic_word(z, t);
    ++cache_.topic_word_total[z];
  } else {
    ++cache_.back_word[t];
    ++cache_.back_total;
  }
  return fg;
}

std::vector<double> GibbsSampler::s_conditional(std::size_t h) {
  const UserIndex user = data_->half_link_source(h);
  const int current = state_.s.at(h);
  const int partner = state_.s[h ^ 1];
  --cache_.user_topic(user, current);
  --cache_.pair_link(current, partner);
  std::vector<double> w;
  s_log_weights(h, w);
  ++cache_.user_topic(user, current);
  ++cache_.pair_link(current, partner);
  normalize_log(w);
  return w;
}

int GibbsSampler::sample_s(std::size_t h) {
  const UserIndex user = data_->half_link_source(h);
  const int current = state_.s[h];
  const int partner = state_.s[h ^ 1];
  --cache_.user_topic(user, current);
  --cache_.pair_link(current, partner);
  s_log_weights(h, weights_);
  const int m = draw(weights_);
  state_.s[h] = m;
  ++cache_.user_topic(user, m);
  ++cache_.pair_link(m, partner);
  return m;
}

void GibbsSampler::sweep() {
  for (std::size_t d = 0; d < data_->num_docs(); ++d) sample_z(d);
  for (std::size_t w = 0; w < data_->num_words(); ++w) sample_f(w);
  for (std::size_t h = 0; h < data_->num_half_links(); ++h) sample_s(h);
}

MhOutcome GibbsSampler::mh_step() {
  MhOutcome out;
  out.hyper = hyper_;

  const double alpha = rng_.exponential(1.0);
  const double log_alpha = user_topic_log_term(cache_, alpha) -
                           user_topic_log_term(cache_, hyper_.alpha);
  if (mh_accept(log_alpha, rng_.uniform())) {
    out.hyper.alpha = alpha;
    out.accepted_alpha = true;
  }

  const double eta = rng_.exponential(1.0);
  const double log_eta =
      word_log_term(cache_, eta) - word_log_term(cache_, hyper_.eta);
  if (mh_accept(log_eta, rng_.uniform())) {
    out.hyper.eta = eta;
    out.accepted_eta = true;
  }

  const double delta = rng_.uniform();
  const double log_delta =
      switch_log_term(cache_, delta) - switch_log_term(cache_, hyper_.delta);
  if (mh_accept(log_delta, rng_.uniform())) {
    out.hyper.delta = delta;
    out.accepted_delta = true;
  }

  hyper_ = out.hyper;
  return out;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

bool has_regression_rows(const Dataset& data, const CountCache& cache) {
  for (std::size_t i = 0; i < cache.P; ++i) {
    if (data.label(static_cast<UserIndex>(i)) && cache.user_denom[i] > 0) {
      return true;
    }
  }
  return false;
}

TrainResult run(GibbsSampler& sampler, const TrainConfig& cfg,
                Checkpoint ckpt, const IterationObserver& observer) {
  const Dataset& data = sampler.data();
  const bool supervised = has_regression_rows(data, sampler.cache());
  const int check_from =
      std::max(2, static_cast<int>(std::ceil(cfg.burn_in * cfg.max_iters)));
  double previous = ckpt.log_likelihood_trace.empty()
                        ? ckpt.initial_log_likelihood
                        : ckpt.log_likelihood_trace.back();

  TrainResult result;
  for (int it = ckpt.iteration + 1; it <= cfg.max_iters; ++it) {
    sampler.sweep();
    IterationMetrics m;
    m.iteration = it;
    if (!cfg.fix_hyper) {
      const MhOutcome mh = sampler.mh_step();
      m.accepted_alpha = mh.accepted_alpha;
      m.accepted_eta = mh.accepted_eta;
      m.accepted_delta = mh.accepted_delta;
    }
    if (supervised) {
      RegressionFit fit = maximize_nu_sigma(data, sampler.cache(),
                                            cfg.ridge_eps, cfg.sigma2_floor);
      sampler.set_regression(std::move(fit.nu), fit.sigma2);
    }
    const double ll = sampler.log_likelihood();
    m.log_likelihood = ll;
    m.alpha = sampler.hyper().alpha;
    m.eta = sampler.hyper().eta;
    m.delta = sampler.hyper().delta;
    m.sigma2 = sampler.sigma2();
    ckpt.log_likelihood_trace.push_back(ll);
    ckpt.iteration = it;
    result.trace.push_back(m);
    if (observer) observer(m);

    const double gain = ll - previous;
    const double cumulative = ll - ckpt.initial_log_likelihood;
    previous = ll;
    if (cfg.early_stop && it >= check_from && cumulative > 0.0 &&
        gain < cfg.convergence * cumulative) {
      result.converged = true;
      break;
    }
  }

  ckpt.hyper = sampler.hyper();
  ckpt.nu = sampler.nu();
  ckpt.sigma2 = sampler.sigma2();
  ckpt.counts = sampler.cache();
  ckpt.state = sampler.state();
  ckpt.rng_state = sampler.rng().save();
  result.params = recover_params(ckpt.counts, ckpt.hyper, ckpt.nu, ckpt.sigma2);
  result.checkpoint = std::move(ckpt);
  return result;
}

}  // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg,
                  const IterationObserver& observer) {
  GibbsSampler sampler = GibbsSampler::initialize(data, cfg);
  Checkpoint ckpt;
  ckpt.vocab = data.vocab().tokens();
  for (const auto& u : data.users()) ckpt.user_ids.push_back(u.id);
  ckpt.seed = cfg.seed;
  ckpt.iteration = 0;
  ckpt.initial_log_likelihood = sampler.log_likelihood();
  return run(sampler, cfg, std::move(ckpt), observer);
}

TrainResult resume_training(const Dataset& data, const Checkpoint& ckpt,
                            const TrainConfig& cfg,
                            const IterationObserver& observer) {
  cfg.validate();
  if (ckpt.vocab != data.vocab().tokens()) {
    throw Error("checkpoint vocabulary differs from the dataset");
  }
  if (ckpt.user_ids.size() != data.num_users()) {
    throw Error("checkpoint user list differs from the dataset");
  }
  for (std::size_t i = 0; i < data.num_users(); ++i) {
    if (ckpt.user_ids[i] != data.users()[i].id) {
      throw Error("checkpoint user list differs from the dataset");
    }
  }
  Rng rng;
  rng.restore(ckpt.rng_state);
  GibbsSampler sampler(data, ckpt.state, ckpt.hyper, ckpt.nu, ckpt.sigma2,
                       std::move(rng));
  if (!(sampler.cache() == ckpt.counts)) {
    throw Error("checkpoint counts do not match its latent state");
  }
  return run(sampler, cfg, ckpt, observer);
}

}  // namespace sm4
