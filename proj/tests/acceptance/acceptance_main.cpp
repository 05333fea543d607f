// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "sm4/analysis.hpp"
#include "sm4/evaluation.hpp"
#include "sm4/predictor.hpp"
#include "sm4/synthgen.hpp"
#include "sm4/trainer.hpp"
#include "test_util.hpp"

using namespace sm4;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Users [begin, end) of d with the edges among them.
Dataset subset(const Dataset& d, std::size_t begin, std::size_t end) {
  std::vector<UserRecord> users(d.users().begin() + begin, d.users().begin() + end);
  std::vector<Edge> edges;
  for (const Edge& e : d.edges()) {
    const auto u = static_cast<std::size_t>(e.u), v = static_cast<std::size_t>(e.v);
    if (u >= begin && u < end && v >= begin && v < end) {
      edges.push_back({static_cast<UserIndex>(u - begin), static_cast<UserIndex>(v - begin)});
    }
  }
  return Dataset(std::move(users), d.vocab(), std::move(edges));
}

// n disjoint copies of d.
Dataset replicate(const Dataset& d, std::size_t n) {
  std::vector<UserRecord> users;
  std::vector<Edge> edges;
  const auto P = d.num_users();
  for (std::size_t c = 0; c < n; ++c) {
    for (const auto& u : d.users()) {
      users.push_back(u);
      users.back().id += "_" + std::to_string(c);
    }
    for (const Edge& e : d.edges()) {
      edges.push_back({static_cast<UserIndex>(e.u + c * P), static_cast<UserIndex>(e.v + c * P)});
    }
  }
  return Dataset(std::move(users), d.vocab(), std::move(edges));
}

// ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  const auto t0 = Clock::now();
  Rng rng(derive_seed(1, "acceptance:oracle"));
  int instances = 0;
  std::size_t checked = 0;
  double worst = 0.0;
  for (; instances < 300; ++instances) {
    const auto t = sm4::testing::random_tiny_instance(rng, 4, 3, 5, 6, 3);
    GibbsSampler g(t.data, t.state, t.hyper, t.nu, t.sigma2, Rng(instances));
    for (std::size_t d = 0; d < t.data.num_docs(); ++d, ++checked) {
      const auto e = enumerate_conditionals(t.data, t.state, TargetZ{d}, t.hyper, t.nu, t.sigma2);
      worst = std::max(worst, sm4::testing::total_variation(g.z_conditional(d), e));
    }
    for (std::size_t w = 0; w < t.data.num_words(); ++w, ++checked) {
      const auto e = enumerate_conditionals(t.data, t.state, TargetF{w}, t.hyper, t.nu, t.sigma2);
      const double p1 = g.f_conditional(w);
      worst = std::max(worst, sm4::testing::total_variation({1.0 - p1, p1}, e));
    }
    for (std::size_t h = 0; h < t.data.num_half_links(); ++h, ++checked) {
      const auto e = enumerate_conditionals(t.data, t.state, TargetS{h}, t.hyper, t.nu, t.sigma2);
      worst = std::max(worst, sm4::testing::total_variation(g.s_conditional(h), e));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-10 && secs < 60.0,
          fmt("%d instances, %zu conditionals, max TV %.3g, %.2fs", instances, checked, worst, secs)};
}

Outcome cache_consistency() {
  Rng rng(derive_seed(2, "acceptance:cache"));
  int updates = 0, mismatches = 0;
  while (updates < 500) {
    const auto t = sm4::testing::random_tiny_instance(rng, 8, 4, 8, 60, 12);
    GibbsSampler g(t.data, t.state, t.hyper, t.nu, t.sigma2, Rng(updates));
    for (int round = 0; round < 3 && updates < 500; ++round) {
      auto check = [&] {
        ++updates;
        if (!(g.cache() == CountCache::recount(t.data, g.state(), t.hyper.K))) ++mismatches;
      };
      for (std::size_t d = 0; d < t.data.num_docs(); ++d) g.sample_z(d), check();
      for (std::size_t w = 0; w < t.data.num_words(); ++w) g.sample_f(w), check();
      for (std::size_t h = 0; h < t.data.num_half_links(); ++h) g.sample_s(h), check();
    }
  }
  return {mismatches == 0, fmt("%d updates, %d mismatches", updates, mismatches)};
}

Outcome parameter_recovery() {
  const auto t0 = Clock::now();
  GenSpec spec;
  spec.K = 5;
  spec.V = 200;
  spec.P = 500;
  spec.min_docs = 15;
  spec.max_docs = 25;
  spec.min_words = 8;
  spec.max_words = 12;
  spec.alpha = 0.1;
  spec.eta = 0.05;
  spec.delta = 0.8;
  spec.lambda1 = 0.1;
  spec.lambda0 = std::log(static_cast<double>(spec.P * (spec.P - 1) / 2) / (spec.K * spec.K));
  const auto gen = generate_dataset(spec, 2024);

  TrainConfig cfg;
  cfg.K = 5;
  cfg.max_iters = 200;
  cfg.early_stop = false;
  cfg.seed = 7;
  const auto result = train(gen.data, cfg);

  const auto matches = match_topics(gen.truth.params.beta, result.params.beta, 5);
  double min_cos = 1.0;
  std::vector<int> to_model(5, -1);
  for (const auto& m : matches) {
    min_cos = std::min(min_cos, m.cosine);
    to_model[m.topic_a] = m.topic_b;
  }
  const bool beta_ok = matches.size() == 5 && min_cos >= 0.9;

  int eligible = 0, within = 0;
  std::ostringstream phi_detail;
  for (int a = 0; a < 5; ++a) {
    const int m = to_model[a];
    if (m < 0) continue;
    const auto links = result.checkpoint.counts.pair_link(m, m);
    if (links < 20) continue;
    ++eligible;
    const double truth = gen.truth.params.phi(a, a);
    const double est = result.params.phi(m, m);
    if (std::abs(truth - est) <= 0.15) ++within;
    phi_detail << fmt(" [%d: links %lld true %.3f est %.3f]", a, static_cast<long long>(links),
                      truth, est);
  }
  const bool phi_ok = within == eligible;
  const double secs = seconds_since(t0);
  return {beta_ok && phi_ok && secs < 600.0,
          fmt("min matched cosine %.4f (%s); Phi diagonal within 0.15 on %d/%d eligible pairs (%s);"
              " %.1fs;",
              min_cos, beta_ok ? "ok" : "low", within, eligible, phi_ok ? "ok" : "off", secs) +
              phi_detail.str()};
}

Outcome regression_correctness() {
  Rng rng(derive_seed(4, "acceptance:regression"));
  int instances = 0;
  double worst_nu = 0.0, worst_sigma = 0.0;
  while (instances < 50) {
    const auto t = sm4::testing::random_tiny_instance(rng, 40, 6, 8, 120, 30);
    const CountCache c = CountCache::recount(t.data, t.state, t.hyper.K);
    std::vector<std::vector<double>> A;
    std::vector<double> b;
    for (std::size_t i = 0; i < t.data.num_users(); ++i) {
      const auto y = t.data.label(static_cast<UserIndex>(i));
      if (!y || c.user_denom[i] == 0) continue;
      A.push_back(theta_hat(c, static_cast<UserIndex>(i), 1.0, false));
      b.push_back(*y);
    }
    if (A.empty()) continue;
    ++instances;
    const double eps = 1e-6;
    const auto fit = maximize_nu_sigma(t.data, c, eps, 1e-8);

    // Dense normal equations solved by Gauss-Jordan with partial pivoting.
    const std::size_t K = A[0].size();
    std::vector<std::vector<double>> M(K, std::vector<double>(K + 1, 0.0));
    for (std::size_t r = 0; r < A.size(); ++r) {
      for (std::size_t i = 0; i < K; ++i) {
        for (std::size_t j = 0; j < K; ++j) M[i][j] += A[r][i] * A[r][j];
        M[i][K] += A[r][i] * b[r];
      }
    }
    for (std::size_t i = 0; i < K; ++i) M[i][i] += eps;
    for (std::size_t col = 0; col < K; ++col) {
      std::size_t piv = col;
      for (std::size_t r = col + 1; r < K; ++r) {
        if (std::abs(M[r][col]) > std::abs(M[piv][col])) piv = r;
      }
      std::swap(M[col], M[piv]);
      for (std::size_t r = 0; r < K; ++r) {
        if (r == col) continue;
        const double f = M[r][col] / M[col][col];
        for (std::size_t k = col; k <= K; ++k) M[r][k] -= f * M[col][k];
      }
    }
    double scale = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < K; ++i) {
      const double x = M[i][K] / M[i][i];
      scale = std::max(scale, std::abs(x));
      diff = std::max(diff, std::abs(x - fit.nu[i]));
    }
    worst_nu = std::max(worst_nu, diff / std::max(scale, 1e-300));

    double btb = 0.0, btAnu = 0.0;
    for (std::size_t r = 0; r < A.size(); ++r) {
      btb += b[r] * b[r];
      btAnu += b[r] * std::inner_product(A[r].begin(), A[r].end(), fit.nu.begin(), 0.0);
    }
    worst_sigma = std::max(worst_sigma,
                           std::abs(fit.sigma2_unfloored - (btb - btAnu) / A.size()));
  }
  return {worst_nu <= 1e-8 && worst_sigma <= 1e-10,
          fmt("%d instances, max relative nu error %.3g, max sigma2 error %.3g", instances,
              worst_nu, worst_sigma)};
}

Outcome link_pair_correctness() {
  Rng rng(derive_seed(5, "acceptance:pairs"));
  const int K = 8;
  int mismatches = 0, ties = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    // Every fourth triple is drawn on a coarse grid so exact ties occur.
    const bool coarse = trial % 4 == 0;
    Matrix<double> theta(2, K);
    for (int r = 0; r < 2; ++r) {
      if (coarse) {
        for (int a = 0; a < K; ++a) theta(r, a) = static_cast<double>(rng.index(3));
        double s = 0.0;
        for (int a = 0; a < K; ++a) s += theta(r, a);
        if (s == 0.0) theta(r, 0) = s = 1.0;
        for (int a = 0; a < K; ++a) theta(r, a) /= s;
      } else {
        const auto row = rng.dirichlet(0.7, K);
        std::copy(row.begin(), row.end(), theta.row(r).begin());
      }
    }
    UpperTriangular<double> phi(K);
    for (auto& x : phi.data()) x = coarse ? 0.25 * (1 + rng.index(2)) : rng.uniform();
    const std::vector<Edge> edge{{0, 1}};
    const LinkPair got = assign_link_pairs(theta, edge, phi).at(0);

    double best = -1.0;
    int count_best = 0, ba = -1, bb = -1;
    for (int a = 0; a < K; ++a) {
      for (int b = a; b < K; ++b) {
        const double s = std::max(theta(0, a) * phi(a, b) * theta(1, b),
                                  theta(0, b) * phi(a, b) * theta(1, a));
        if (s > best) {
          best = s;
          ba = a;
          bb = b;
          count_best = 1;
        } else if (s == best) {
          ++count_best;
        }
      }
    }
    if (count_best > 1) ++ties;
    if (got.a != ba || got.b != bb || got.score != best) ++mismatches;
  }
  return {mismatches == 0, fmt("1000 triples (K=8), %d with tied maxima, %d mismatches", ties,
                               mismatches)};
}

Outcome linear_time() {
  GenSpec spec;
  spec.K = 10;
  spec.V = 500;
  spec.P = 600;
  spec.min_docs = 15;
  spec.max_docs = 25;
  spec.min_words = 5;
  spec.max_words = 10;
  spec.forced_phi = 0.01;
  const auto base = generate_dataset(spec, 6);

  std::vector<double> per_sweep;
  std::vector<std::size_t> words;
  for (std::size_t scale : {1, 2, 4}) {
    const Dataset d = replicate(base.data, scale);
    TrainConfig cfg;
    cfg.K = spec.K;
    cfg.seed = 3;
    GibbsSampler g = GibbsSampler::initialize(d, cfg);
    g.sweep();
    std::vector<double> times;
    for (int rep = 0; rep < 7; ++rep) {
      const auto t0 = Clock::now();
      g.sweep();
      times.push_back(seconds_since(t0));
    }
    std::nth_element(times.begin(), times.begin() + 3, times.end());
    per_sweep.push_back(times[3]);
    words.push_back(d.num_words() + d.num_half_links());
  }
  const double r1 = per_sweep[1] / per_sweep[0];
  const double r2 = per_sweep[2] / per_sweep[1];
  const bool ok = std::abs(r1 / 2.0 - 1.0) <= 0.3 && std::abs(r2 / 2.0 - 1.0) <= 0.3;
  return {ok, fmt("median sweep %.4fs / %.4fs / %.4fs at %zu / %zu / %zu tokens+half-links;"
                  " doubling ratios %.2f, %.2f",
                  per_sweep[0], per_sweep[1], per_sweep[2], words[0], words[1], words[2], r1, r2)};
}

Outcome prediction_parallelism() {
  GenSpec spec;
  spec.K = 10;
  spec.V = 500;
  spec.P = 1000;
  spec.min_docs = 15;
  spec.max_docs = 25;
  spec.min_words = 5;
  spec.max_words = 10;
  spec.forced_phi = 0.005;
  const auto gen = generate_dataset(spec, 7);
  Hyperparams h;
  h.K = spec.K;
  h.alpha = spec.alpha;
  h.delta = spec.delta;
  PredictConfig cfg;
  cfg.seed = 11;

  cfg.threads = 1;
  auto t0 = Clock::now();
  const auto one = predict_all(gen.data, gen.truth.params, h, cfg);
  const double t1 = seconds_since(t0);
  cfg.threads = 8;
  t0 = Clock::now();
  const auto eight = predict_all(gen.data, gen.truth.params, h, cfg);
  const double t8 = seconds_since(t0);

  const bool identical = one.features == eight.features;
  const double speedup = t1 / t8;
  return {identical && speedup >= 4.0,
          fmt("bit-identical: %s; 1 worker %.3fs, 8 workers %.3fs, speedup %.2fx on %u hardware"
              " threads",
              identical ? "yes" : "no", t1, t8, speedup, std::thread::hardware_concurrency())};
}

Outcome validation_direction() {
  const auto t0 = Clock::now();
  int significant = 0, positive = 0;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    GenSpec spec;
    spec.K = 6;
    spec.V = 600;
    spec.P = 3000;
    spec.min_docs = 3;
    spec.max_docs = 6;
    spec.min_words = 3;
    spec.max_words = 6;
    spec.alpha = 0.2;
    spec.eta = 0.05;
    spec.delta = 0.8;
    spec.nu = {2.0, -2.0, 1.5, -1.5, 1.0, -1.0};
    spec.sigma2 = 0.1;
    UpperTriangular<double> phi(spec.K, 0.0005);
    for (int a = 0; a < spec.K; ++a) phi(a, a) = 0.01;
    spec.planted_phi = phi;
    const auto gen = generate_dataset(spec, seed);

    // Fit on the first third, evaluate on users the model never saw.
    const std::size_t n_train = spec.P / 3;
    const Dataset train_set = subset(gen.data, 0, n_train);
    const Dataset eval_set = subset(gen.data, n_train, spec.P);
    TrainConfig cfg;
    cfg.K = spec.K;
    cfg.max_iters = 150;
    cfg.seed = seed;
    const auto model = train(train_set, cfg);
    PredictConfig pc;
    pc.seed = seed;
    const auto pred = predict_all(eval_set, model.params, model.checkpoint.hyper, pc);

    const std::size_t P = eval_set.num_users();
    const std::size_t V = eval_set.vocab_size();
    Matrix<double> bow(P, V), both(P, V + spec.K);
    for (std::size_t i = 0; i < P; ++i) {
      const auto b = bow_features(eval_set, static_cast<UserIndex>(i));
      std::copy(b.begin(), b.end(), bow.row(i).begin());
      const auto c = concat_features(b, pred.features.theta.row(i));
      std::copy(c.begin(), c.end(), both.row(i).begin());
    }
    const auto base = cross_validate(eval_set, bow, 10, seed);
    const auto plus = cross_validate(eval_set, both, 10, seed);
    const auto chi = chi_square_test(plus.num_correct(), plus.correct.size(), base.num_correct(),
                                     base.correct.size());
    const double gain = plus.mean_accuracy - base.mean_accuracy;
    if (gain > 0.0) ++positive;
    if (gain > 0.0 && chi.statistic > 3.84) ++significant;
    per_seed << fmt(" [seed %llu: BoW %.4f, BoW+theta %.4f, chi2 %.2f]",
                    static_cast<unsigned long long>(seed), base.mean_accuracy, plus.mean_accuracy,
                    chi.statistic);
  }
  const double secs = seconds_since(t0);
  return {positive == 5 && significant >= 4 && secs < 900.0,
          fmt("gain > 0 on %d/5 seeds, significant on %d/5, %.1fs;", positive, significant, secs) +
              per_seed.str()};
}

Outcome chi_square_unit() {
  const auto r = chi_square_test(90, 100, 50, 100);
  // Pooled two-proportion z statistic, squared.
  const double p1 = 0.9, p2 = 0.5, pooled = 140.0 / 200.0;
  const double z2 = (p1 - p2) * (p1 - p2) / (pooled * (1.0 - pooled) * (1.0 / 100 + 1.0 / 100));
  const auto eq = chi_square_test(40, 80, 20, 40);
  const bool ok = std::abs(r.statistic - z2) <= 1e-6 && r.p_value < 1e-8 &&
                  eq.statistic == 0.0 && eq.p_value == 1.0;
  return {ok, fmt("statistic %.9f vs two-proportion %.9f, p %.3g; equal proportions -> %.1f, p %.1f",
                  r.statistic, z2, r.p_value, eq.statistic, eq.p_value)};
}

Outcome convergence_monitor() {
  GenSpec spec;
  spec.K = 5;
  spec.V = 200;
  spec.P = 300;
  spec.min_docs = 10;
  spec.max_docs = 20;
  spec.min_words = 5;
  spec.max_words = 10;
  spec.alpha = 0.1;
  spec.eta = 0.05;
  spec.lambda0 = 8.0;
  const auto gen = generate_dataset(spec, 10);
  TrainConfig cfg;
  cfg.K = 5;
  cfg.max_iters = 200;
  cfg.early_stop = false;
  cfg.seed = 10;
  const auto r = train(gen.data, cfg);
  const auto& ll = r.checkpoint.log_likelihood_trace;

  // Means of consecutive 20-sweep blocks may dip by at most three standard
  // deviations of the final block's per-sweep values.
  const std::size_t W = 20;
  std::vector<double> block;
  for (std::size_t k = 0; k + W <= ll.size(); k += W) {
    block.push_back(std::accumulate(ll.begin() + k, ll.begin() + k + W, 0.0) / W);
  }
  double var = 0.0;
  for (std::size_t k = ll.size() - W; k < ll.size(); ++k) {
    var += (ll[k] - block.back()) * (ll[k] - block.back());
  }
  const double tol = 3.0 * std::sqrt(var / (W - 1));
  double worst_dip = 0.0;
  for (std::size_t k = 1; k < block.size(); ++k) {
    worst_dip = std::max(worst_dip, block[k - 1] - block[k]);
  }
  const bool trend_ok = ll.back() > r.checkpoint.initial_log_likelihood && worst_dip <= tol;

  Rng rng(derive_seed(10, "acceptance:ratio"));
  double worst_ratio = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = sm4::testing::random_tiny_instance(rng, 6, 4, 6, 30, 8);
    GibbsSampler g(t.data, t.state, t.hyper, t.nu, t.sigma2, Rng(trial));
    const double base = g.log_likelihood();
    auto joint_of = [&](const LatentState& s) {
      return joint_log_likelihood(t.data, CountCache::recount(t.data, s, t.hyper.K), t.hyper,
                                  t.nu, t.sigma2);
    };
    for (std::size_t d = 0; d < t.data.num_docs(); ++d) {
      const auto p = g.z_conditional(d);
      for (int m = 0; m < t.hyper.K; ++m) {
        LatentState alt = t.state;
        alt.z[d] = m;
        worst_ratio = std::max(worst_ratio, std::abs(std::log(p[m] / p[t.state.z[d]]) -
                                                     (joint_of(alt) - base)));
      }
    }
    for (std::size_t w = 0; w < t.data.num_words(); ++w) {
      const double p1 = g.f_conditional(w);
      LatentState alt = t.state;
      alt.f[w] = 1 - alt.f[w];
      const double lr = t.state.f[w] ? std::log((1.0 - p1) / p1) : std::log(p1 / (1.0 - p1));
      worst_ratio = std::max(worst_ratio, std::abs(lr - (joint_of(alt) - base)));
    }
    for (std::size_t h = 0; h < t.data.num_half_links(); ++h) {
      const auto p = g.s_conditional(h);
      for (int m = 0; m < t.hyper.K; ++m) {
        LatentState alt = t.state;
        alt.s[h] = m;
        worst_ratio = std::max(worst_ratio, std::abs(std::log(p[m] / p[t.state.s[h]]) -
                                                     (joint_of(alt) - base)));
      }
    }
  }
  return {trend_ok && worst_ratio <= 1e-8,
          fmt("initial %.1f, final %.1f, worst 20-sweep block dip %.2f (tolerance %.2f);"
              " max ratio-identity error %.3g",
              r.checkpoint.initial_log_likelihood, ll.back(), worst_dip, tol, worst_ratio)};
}

}  // namespace

// With arguments, runs only the listed criterion numbers.
int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"oracle equivalence", oracle_equivalence},
      {"cache consistency", cache_consistency},
      {"parameter recovery", parameter_recovery},
      {"regression step", regression_correctness},
      {"link topic pairs", link_pair_correctness},
      {"linear-time sweeps", linear_time},
      {"prediction determinism and speedup", prediction_parallelism},
      {"validation protocol direction", validation_direction},
      {"chi-square check", chi_square_unit},
      {"convergence monitor", convergence_monitor},
  };
  std::vector<bool> selected(criteria.size(), argc == 1);
  for (int k = 1; k < argc; ++k) {
    const auto n = static_cast<std::size_t>(std::atoi(argv[k]));
    if (n >= 1 && n <= criteria.size()) selected[n - 1] = true;
  }
  int failed = 0;
  std::size_t ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    ++ran;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("criterion %zu (%s): %s - %s\n", i + 1, criteria[i].first,
                o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
