#include "sm4/predictor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <thread>

#include "json.hpp"
#include "sm4/error.hpp"

namespace sm4 {

std::vector<double> predict_user(std::span<const std::vector<TokenId>> docs,
                                 const TopicParams& params,
                                 const Hyperparams& hyper,
                                 const PredictConfig& cfg, Rng& rng) {
  const int K = params.K;
  const double alpha = hyper.alpha;
  const double delta = hyper.delta;
  std::vector<double> theta(K, 0.0);
  if (docs.empty()) {
    std::fill(theta.begin(), theta.end(), 1.0 / K);
    return theta;
  }
  for (const auto& doc : docs) {
    for (TokenId t : doc) {
      if (t < 0 || static_cast<std::size_t>(t) >= params.V) {
        throw Error("token id " + std::to_string(t) +
                    " outside the trained vocabulary");
      }
    }
  }
  if (cfg.iters < 1) throw Error("prediction needs at least one sweep");

  const auto D = docs.size();
  std::vector<int> z(D);
  std::vector<std::vector<std::uint8_t>> f(D);
  std::vector<std::int64_t> counts(K, 0);
  for (std::size_t k = 0; k < D; ++k) {
    z[k] = static_cast<int>(rng.index(K));
    ++counts[z[k]];
    f[k].resize(docs[k].size());
    for (auto& x : f[k]) x = rng.bernoulli(0.5) ? 1 : 0;
  }

  const int retain_from = static_cast<int>(std::floor(cfg.burn_in * cfg.iters));
  const double denom = static_cast<double>(D) + K * alpha;
  std::vector<double> weights(K);
  int retained = 0;
  for (int sweep = 0; sweep < cfg.iters; ++sweep) {
    for (std::size_t k = 0; k < D; ++k) {
      --counts[z[k]];
      for (int m = 0; m < K; ++m) {
        double lw = std::log(static_cast<double>(counts[m]) + alpha);
        for (std::size_t l = 0; l < docs[k].size(); ++l) {
          if (f[k][l]) lw += std::log(params.beta(m, docs[k][l]));
        }
        weights[m] = lw;
      }
      const double hi = *std::max_element(weights.begin(), weights.end());
      for (double& w : weights) w = std::exp(w - hi);
      z[k] = static_cast<int>(rng.categorical(weights));
      ++counts[z[k]];
    }
    for (std::size_t k = 0; k < D; ++k) {
      for (std::size_t l = 0; l < docs[k].size(); ++l) {
        const TokenId t = docs[k][l];
        const double p1 = delta * params.beta(z[k], t);
        const double p0 = (1.0 - delta) * params.beta_back[t];
        f[k][l] = rng.bernoulli(p1 / (p1 + p0)) ? 1 : 0;
      }
    }
    if (sweep >= retain_from) {
      for (int a = 0; a < K; ++a) {
        theta[a] += (static_cast<double>(counts[a]) + alpha) / denom;
      }
      ++retained;
    }
  }
  for (double& x : theta) x /= retained;
  return theta;
}

LinkPair best_link_pair(std::span<const double> theta_p,
                        std::span<const double> theta_j,
                        const UpperTriangular<double>& phi) {
  const int K = static_cast<int>(theta_p.size());
  LinkPair best;
  best.score = -1.0;
  for (int a = 0; a < K; ++a) {
    for (int b = a; b < K; ++b) {
      const double forward = theta_p[a] * phi(a, b) * theta_j[b];
      const double reverse = theta_p[b] * phi(a, b) * theta_j[a];
      const double score = std::max(forward, reverse);
      if (score > best.score) {
        best.a = a;
        best.b = b;
        best.score = score;
      }
    }
  }
  return best;
}

std::vector<LinkPair> assign_link_pairs(const Matrix<double>& theta,
                                        std::span<const Edge> edges,
                                        const UpperTriangular<double>& phi) {
  std::vector<LinkPair> out;
  out.reserve(edges.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    LinkPair lp = best_link_pair(theta.row(edges[e].u), theta.row(edges[e].v), phi);
    lp.edge = e;
    out.push_back(lp);
  }
  return out;
}

PredictionReport predict_all(const Dataset& data, const TopicParams& params,
                             const Hyperparams& hyper,
                             const PredictConfig& cfg) {
  const std::size_t P = data.num_users();
  PredictionReport report;
  report.features.theta = Matrix<double>(P, params.K);

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < P; i = next++) {
      const auto user = static_cast<UserIndex>(i);
      Rng rng(derive_seed(cfg.seed, "predict:user", i));
      auto row = report.features.theta.row(i);
      try {
        const auto theta = predict_user(data.user(user).docs, params, hyper, cfg, rng);
        std::copy(theta.begin(), theta.end(), row.begin());
      } catch (const std::exception& e) {
        std::fill(row.begin(), row.end(), 1.0 / params.K);
        std::lock_guard lock(error_mutex);
        report.errors.push_back({user, e.what()});
      }
    }
  };

  const unsigned threads = std::max(1u, cfg.threads);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  std::sort(report.errors.begin(), report.errors.end(),
            [](const UserError& a, const UserError& b) { return a.user < b.user; });

  report.features.link_pairs =
      assign_link_pairs(report.features.theta, data.edges(), params.phi);
  return report;
}

using nlohmann::json;

void write_features(const Dataset& data, const UserFeatures& features,
                    const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < data.num_users(); ++i) {
    const auto row = features.theta.row(i);
    json rec = {{"kind", "user"},
                {"id", data.users()[i].id},
                {"theta", std::vector<double>(row.begin(), row.end())}};
    out << rec.dump() << '\n';
  }
  for (const LinkPair& lp : features.link_pairs) {
    const Edge& e = data.edges().at(lp.edge);
    json rec = {{"kind", "edge"},
                {"source", data.user(e.u).id},
                {"target", data.user(e.v).id},
                {"pair", {lp.a, lp.b}},
                {"score", lp.score}};
    out << rec.dump() << '\n';
  }
}

FeaturesFile read_features(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  FeaturesFile ff;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    try {
      const json rec = json::parse(line);
      const auto kind = rec.at("kind").get<std::string>();
      if (kind == "user") {
        ff.user_ids.push_back(rec.at("id").get<std::string>());
        rows.push_back(rec.at("theta").get<std::vector<double>>());
        if (rows.back().size() != rows.front().size()) {
          throw Error(where + ": feature vectors differ in length");
        }
      } else if (kind == "edge") {
        FeaturesFile::EdgeRecord e;
        e.source = rec.at("source").get<std::string>();
        e.target = rec.at("target").get<std::string>();
        const auto pair = rec.at("pair").get<std::vector<int>>();
        if (pair.size() != 2) throw Error(where + ": pair needs two topics");
        e.a = pair[0];
        e.b = pair[1];
        e.score = rec.at("score").get<double>();
        ff.edges.push_back(std::move(e));
      } else {
        throw Error(where + ": unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw Error(where + ": malformed record: " + e.what());
    }
  }
  const std::size_t K = rows.empty() ? 0 : rows.front().size();
  ff.theta = Matrix<double>(rows.size(), K);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(), ff.theta.row(i).begin());
  }
  return ff;
}

}  // namespace sm4
