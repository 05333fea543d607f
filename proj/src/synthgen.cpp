#include "sm4/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "json.hpp"
#include "sm4/error.hpp"
#include "sm4/rng.hpp"

namespace sm4 {

void GenSpec::validate() const {
  if (K < 1) throw Error("K must be at least 1");
  if (V < 1) throw Error("V must be at least 1");
  if (min_docs > max_docs) throw Error("min_docs exceeds max_docs");
  if (min_words > max_words) throw Error("min_words exceeds max_words");
  if (!(alpha > 0.0) || !(eta > 0.0)) throw Error("alpha and eta must be positive");
  if (!(delta > 0.0 && delta <= 1.0)) throw Error("delta must lie in (0, 1]");
  if (!(lambda1 > 0.0) || !(lambda0 > 0.0)) throw Error("lambda1 and lambda0 must be positive");
  if (!nu.empty() && nu.size() != static_cast<std::size_t>(K)) {
    throw Error("nu must have K entries");
  }
  if (!(sigma2 >= 0.0)) throw Error("sigma2 must be nonnegative");
  if (forced_phi && !(*forced_phi >= 0.0 && *forced_phi <= 1.0)) {
    throw Error("forced phi must lie in [0, 1]");
  }
  if (planted_phi && planted_phi->size() != static_cast<std::size_t>(K)) {
    throw Error("planted phi must be K x K");
  }
}

namespace {

// Inverse-CDF sampling from a fixed discrete distribution.
class DiscreteTable {
 public:
  explicit DiscreteTable(std::span<const double> p) : cdf_(p.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) cdf_[i] = acc += p[i];
  }
  std::size_t draw(Rng& rng) const {
    const double u = rng.uniform() * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(it - cdf_.begin(), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

std::size_t uniform_between(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + rng.index(hi - lo + 1);
}

}  // namespace

Generated generate_dataset(const GenSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, "generate"));
  const int K = spec.K;
  const std::size_t V = spec.V;
  const std::size_t P = spec.P;

  GroundTruth truth;
  TopicParams& tp = truth.params;
  tp.K = K;
  tp.V = V;
  tp.beta_back = rng.dirichlet(spec.eta, V);
  tp.beta = Matrix<double>(K, V);
  for (int a = 0; a < K; ++a) {
    const auto row = rng.dirichlet(spec.eta, V);
    std::copy(row.begin(), row.end(), tp.beta.row(a).begin());
  }
  tp.phi = UpperTriangular<double>(K);
  for (int a = 0; a < K; ++a) {
    for (int b = a; b < K; ++b) {
      if (spec.planted_phi) {
        tp.phi(a, b) = (*spec.planted_phi)(a, b);
      } else if (spec.forced_phi) {
        tp.phi(a, b) = *spec.forced_phi;
      } else {
        tp.phi(a, b) = rng.beta(spec.lambda1, spec.lambda0);
      }
    }
  }
  tp.nu = spec.nu;
  if (tp.nu.empty()) {
    for (int a = 0; a < K; ++a) tp.nu.push_back(rng.normal(0.0, 1.0));
  }
  tp.sigma2 = spec.sigma2;

  truth.theta = Matrix<double>(P, K);
  for (std::size_t i = 0; i < P; ++i) {
    const auto row = rng.dirichlet(spec.alpha, K);
    std::copy(row.begin(), row.end(), truth.theta.row(i).begin());
  }

  std::vector<DiscreteTable> topic_tables;
  for (int a = 0; a < K; ++a) topic_tables.emplace_back(tp.beta.row(a));
  const DiscreteTable back_table(tp.beta_back);
  std::vector<DiscreteTable> user_tables;
  for (std::size_t i = 0; i < P; ++i) user_tables.emplace_back(truth.theta.row(i));

  Vocabulary vocab;
  for (std::size_t v = 0; v < V; ++v) vocab.add("w" + std::to_string(v));

  std::vector<UserRecord> users(P);
  Matrix<std::int64_t> indicator_counts(P, K, 0);
  std::vector<std::int64_t> indicator_total(P, 0);
  for (std::size_t i = 0; i < P; ++i) {
    users[i].id = "u" + std::to_string(i);
    const std::size_t D = uniform_between(rng, spec.min_docs, spec.max_docs);
    for (std::size_t k = 0; k < D; ++k) {
      const int z = static_cast<int>(user_tables[i].draw(rng));
      truth.state.z.push_back(z);
      ++indicator_counts(i, z);
      ++indicator_total[i];
      const std::size_t W = uniform_between(rng, spec.min_words, spec.max_words);
      auto& doc = users[i].docs.emplace_back();
      for (std::size_t l = 0; l < W; ++l) {
        const bool fg = rng.bernoulli(spec.delta);
        truth.state.f.push_back(fg ? 1 : 0);
        const auto w = fg ? topic_tables[z].draw(rng) : back_table.draw(rng);
        doc.push_back(static_cast<TokenId>(w));
      }
    }
  }

  // Every unordered pair is a candidate friendship.
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = i + 1; j < P; ++j) {
      const int s_ij = static_cast<int>(user_tables[i].draw(rng));
      const int s_ji = static_cast<int>(user_tables[j].draw(rng));
      if (!rng.bernoulli(tp.phi(s_ij, s_ji))) continue;
      edges.push_back({static_cast<UserIndex>(i), static_cast<UserIndex>(j)});
      truth.state.s.push_back(s_ij);
      truth.state.s.push_back(s_ji);
      ++indicator_counts(i, s_ij);
      ++indicator_counts(j, s_ji);
      ++indicator_total[i];
      ++indicator_total[j];
    }
  }

  const double sd = std::sqrt(spec.sigma2);
  truth.y.resize(P);
  for (std::size_t i = 0; i < P; ++i) {
    double mean = 0.0;
    for (int a = 0; a < K; ++a) {
      const double share =
          indicator_total[i] > 0
              ? static_cast<double>(indicator_counts(i, a)) / indicator_total[i]
              : truth.theta(i, a);
      mean += share * tp.nu[a];
    }
    truth.y[i] = rng.normal(mean, sd);
    users[i].label = truth.y[i] >= 0.0 ? 1 : -1;
  }

  Dataset data(std::move(users), std::move(vocab), std::move(edges));
  return {std::move(data), std::move(truth)};
}

void write_truth(const Generated& gen, const std::filesystem::path& path) {
  using nlohmann::json;
  const TopicParams& tp = gen.truth.params;
  json beta = json::array();
  for (int a = 0; a < tp.K; ++a) {
    const auto row = tp.beta.row(a);
    beta.push_back(std::vector<double>(row.begin(), row.end()));
  }
  json phi = json::array();
  for (int a = 0; a < tp.K; ++a) {
    for (int b = a; b < tp.K; ++b) {
      phi.push_back({{"a", a}, {"b", b}, {"value", tp.phi(a, b)}});
    }
  }
  json theta = json::array();
  for (std::size_t i = 0; i < gen.truth.theta.rows(); ++i) {
    const auto row = gen.truth.theta.row(i);
    theta.push_back({{"id", gen.data.users()[i].id},
                     {"theta", std::vector<double>(row.begin(), row.end())}});
  }
  json doc = {{"K", tp.K},
              {"V", tp.V},
              {"vocab", gen.data.vocab().tokens()},
              {"beta", std::move(beta)},
              {"beta_back", tp.beta_back},
              {"phi", std::move(phi)},
              {"nu", tp.nu},
              {"sigma2", tp.sigma2},
              {"theta", std::move(theta)},
              {"y", gen.truth.y},
              {"z", gen.truth.state.z},
              {"f", gen.truth.state.f},
              {"s", gen.truth.state.s}};
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << doc.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Brute-force oracle

double reference_log_joint(const Dataset& data, const LatentState& state,
                           const Hyperparams& hyper,
                           std::span<const double> nu, double sigma2) {
  // Each Dirichlet- or Beta-compound term is evaluated as a sequence of urn
  // draws, log prod_t (prior + count so far) / (total prior + t).
  const int K = hyper.K;
  const std::size_t V = data.vocab_size();
  const std::size_t P = data.num_users();
  double lp = 0.0;

  std::vector<std::vector<int>> user_counts(P, std::vector<int>(K, 0));
  std::vector<int> user_total(P, 0);
  auto user_draw = [&](UserIndex i, int topic) {
    lp += std::log((hyper.alpha + user_counts[i][topic]) /
                   (K * hyper.alpha + user_total[i]));
    ++user_counts[i][topic];
    ++user_total[i];
  };
  for (std::size_t d = 0; d < data.num_docs(); ++d) user_draw(data.doc_user(d), state.z[d]);
  for (std::size_t h = 0; h < data.num_half_links(); ++h) {
    user_draw(data.half_link_source(h), state.s[h]);
  }

  std::vector<std::vector<int>> topic_counts(K + 1, std::vector<int>(V, 0));
  std::vector<int> topic_total(K + 1, 0);
  for (std::size_t w = 0; w < data.num_words(); ++w) {
    const bool fg = state.f[w] != 0;
    lp += std::log(fg ? hyper.delta : 1.0 - hyper.delta);
    const int bucket = fg ? state.z[data.word_doc(w)] : K;  // K = background
    const TokenId t = data.word(w);
    lp += std::log((hyper.eta + topic_counts[bucket][t]) /
                   (static_cast<double>(V) * hyper.eta + topic_total[bucket]));
    ++topic_counts[bucket][t];
    ++topic_total[bucket];
  }

  std::vector<std::vector<int>> pair_counts(K, std::vector<int>(K, 0));
  for (std::size_t e = 0; e < data.edges().size(); ++e) {
    const int a = std::min(state.s[2 * e], state.s[2 * e + 1]);
    const int b = std::max(state.s[2 * e], state.s[2 * e + 1]);
    const int c = pair_counts[a][b]++;
    lp += std::log((hyper.lambda1 + c) / (hyper.lambda1 + hyper.lambda0 + c));
  }

  for (std::size_t i = 0; i < P; ++i) {
    const auto y = data.label(static_cast<UserIndex>(i));
    if (!y || user_total[i] == 0) continue;
    double mean = 0.0;
    for (int a = 0; a < K; ++a) {
      mean += nu[a] * user_counts[i][a] / static_cast<double>(user_total[i]);
    }
    const double r = *y - mean;
    lp += -0.5 * std::log(2.0 * std::numbers::pi * sigma2) - r * r / (2.0 * sigma2);
  }
  return lp;
}

std::vector<double> enumerate_conditionals(const Dataset& data,
                                           const LatentState& state,
                                           const LatentTarget& target,
                                           const Hyperparams& hyper,
                                           std::span<const double> nu,
                                           double sigma2) {
  if (data.num_words() + data.edges().size() > 64) {
    throw Error("instance too large for enumeration");
  }
  LatentState work = state;
  std::vector<double> logp;
  if (const auto* t = std::get_if<TargetZ>(&target)) {
    for (int m = 0; m < hyper.K; ++m) {
      work.z.at(t->doc) = m;
      logp.push_back(reference_log_joint(data, work, hyper, nu, sigma2));
    }
  } else if (const auto* t = std::get_if<TargetF>(&target)) {
    for (std::uint8_t v = 0; v < 2; ++v) {
      work.f.at(t->word) = v;
      logp.push_back(reference_log_joint(data, work, hyper, nu, sigma2));
    }
  } else {
    const auto& ts = std::get<TargetS>(target);
    for (int m = 0; m < hyper.K; ++m) {
      work.s.at(ts.half_link) = m;
      logp.push_back(reference_log_joint(data, work, hyper, nu, sigma2));
    }
  }
  const double hi = *std::max_element(logp.begin(), logp.end());
  double total = 0.0;
  for (double& x : logp) total += x = std::exp(x - hi);
  for (double& x : logp) x /= total;
  return logp;
}

}  // namespace sm4
