#include "sm4/model.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "sm4/error.hpp"

namespace sm4 {

void Hyperparams::validate() const {
  if (K < 1) throw Error("K must be at least 1");
  if (!(alpha > 0.0)) throw Error("alpha must be positive");
  if (!(eta > 0.0)) throw Error("eta must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw Error("delta must lie in (0, 1)");
  if (!(lambda1 > 0.0)) throw Error("lambda1 must be positive");
  if (!(lambda0 > 0.0)) throw Error("lambda0 must be positive");
}

double compute_lambda0(std::size_t num_users, std::size_t num_edges, int K) {
  if (K < 1) throw Error("K must be at least 1");
  const double pairs = 0.5 * static_cast<double>(num_users) *
                       (static_cast<double>(num_users) - 1.0);
  const double zero_links = pairs - static_cast<double>(num_edges);
  const double ratio = zero_links / (static_cast<double>(K) * K);
  if (!(ratio > 1.0)) {
    throw Error("lambda0 = ln(" + std::to_string(zero_links) + " zero links / K^2) is not positive; "
                "the graph is too small or too dense for the default, set lambda0 manually");
  }
  return std::log(ratio);
}

CountCache::CountCache(int K_, std::size_t V_, std::size_t P_)
    : K(K_),
      V(V_),
      P(P_),
      user_topic(P_, K_, 0),
      user_denom(P_, 0),
      topic_word(K_, V_, 0),
      topic_word_total(K_, 0),
      back_word(V_, 0),
      back_total(0),
      pair_link(K_, 0) {}

CountCache CountCache::recount(const Dataset& data, const LatentState& state,
                               int K) {
  if (state.z.size() != data.num_docs() || state.f.size() != data.num_words() ||
      state.s.size() != data.num_half_links()) {
    throw Error("latent state does not match the dataset");
  }
  CountCache c(K, data.vocab_size(), data.num_users());
  for (std::size_t d = 0; d < data.num_docs(); ++d) {
    const int z = state.z[d];
    if (z < 0 || z >= K) throw Error("document topic out of range");
    ++c.user_topic(data.doc_user(d), z);
    ++c.user_denom[data.doc_user(d)];
    for (std::size_t w = data.doc_begin(d); w < data.doc_end(d); ++w) {
      if (state.f[w]) {
        ++c.topic_word(z, data.word(w));
        ++c.topic_word_total[z];
      } else {
        ++c.back_word[data.word(w)];
        ++c.back_total;
      }
    }
  }
  for (std::size_t h = 0; h < data.num_half_links(); ++h) {
    const int s = state.s[h];
    if (s < 0 || s >= K) throw Error("link topic out of range");
    ++c.user_topic(data.half_link_source(h), s);
    ++c.user_denom[data.half_link_source(h)];
    if (h % 2 == 0) ++c.pair_link(s, state.s[h + 1]);
  }
  return c;
}

std::int64_t CountCache::foreground_total() const {
  return std::accumulate(topic_word_total.begin(), topic_word_total.end(),
                         std::int64_t{0});
}

std::pair<Matrix<double>, std::vector<double>> recover_beta(
    const CountCache& cache, double eta) {
  const double V_eta = static_cast<double>(cache.V) * eta;
  Matrix<double> beta(cache.K, cache.V);
  for (int a = 0; a < cache.K; ++a) {
    const double denom = V_eta + static_cast<double>(cache.topic_word_total[a]);
    for (std::size_t v = 0; v < cache.V; ++v) {
      beta(a, v) = (eta + static_cast<double>(cache.topic_word(a, v))) / denom;
    }
  }
  std::vector<double> back(cache.V);
  const double denom = V_eta + static_cast<double>(cache.back_total);
  for (std::size_t v = 0; v < cache.V; ++v) {
    back[v] = (eta + static_cast<double>(cache.back_word[v])) / denom;
  }
  return {std::move(beta), std::move(back)};
}

UpperTriangular<double> recover_phi(const CountCache& cache, double lambda1,
                                    double lambda0) {
  UpperTriangular<double> phi(cache.K);
  for (int a = 0; a < cache.K; ++a) {
    for (int b = a; b < cache.K; ++b) {
      const double c = static_cast<double>(cache.pair_link(a, b));
      phi(a, b) = (lambda1 + c) / (lambda1 + lambda0 + c);
    }
  }
  return phi;
}

std::vector<double> theta_hat(const CountCache& cache, UserIndex i,
                              double alpha, bool smoothed) {
  if (i < 0 || static_cast<std::size_t>(i) >= cache.P) {
    throw std::out_of_range("user index out of range");
  }
  const double denom = static_cast<double>(cache.user_denom[i]);
  std::vector<double> out(cache.K);
  if (smoothed) {
    const double total = denom + cache.K * alpha;
    for (int a = 0; a < cache.K; ++a) {
      out[a] = (static_cast<double>(cache.user_topic(i, a)) + alpha) / total;
    }
    return out;
  }
  if (denom == 0.0) {
    throw Error("theta-hat undefined for user " + std::to_string(i) +
                " without documents or links");
  }
  for (int a = 0; a < cache.K; ++a) {
    out[a] = static_cast<double>(cache.user_topic(i, a)) / denom;
  }
  return out;
}

TopicParams recover_params(const CountCache& cache, const Hyperparams& hyper,
                           std::vector<double> nu, double sigma2) {
  TopicParams p;
  p.K = cache.K;
  p.V = cache.V;
  std::tie(p.beta, p.beta_back) = recover_beta(cache, hyper.eta);
  p.phi = recover_phi(cache, hyper.lambda1, hyper.lambda0);
  p.nu = std::move(nu);
  p.sigma2 = sigma2;
  return p;
}

}  // namespace sm4
