#include "sm4/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <numeric>
#include <thread>

#include "sm4/error.hpp"
#include "sm4/rng.hpp"

namespace sm4 {

std::vector<double> bow_features(const Dataset& data, UserIndex user) {
  std::vector<double> out(data.vocab_size(), 0.0);
  std::size_t total = 0;
  for (const auto& doc : data.user(user).docs) {
    for (TokenId t : doc) {
      out[t] += 1.0;
      ++total;
    }
  }
  if (total > 0) {
    for (double& x : out) x /= static_cast<double>(total);
  }
  return out;
}

std::vector<double> concat_features(std::span<const double> bow,
                                    std::span<const double> theta) {
  std::vector<double> out;
  out.reserve(bow.size() + theta.size());
  out.insert(out.end(), bow.begin(), bow.end());
  out.insert(out.end(), theta.begin(), theta.end());
  return out;
}

double LinearModel::decision(std::span<const double> x) const {
  if (x.size() != weights.size()) throw Error("feature dimension mismatch");
  return std::inner_product(x.begin(), x.end(), weights.begin(), bias);
}

namespace {

// log(1 + exp(t)) without overflow.
double softplus(double t) {
  return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Row-compressed copy of a feature matrix; bag-of-words rows are mostly zero.
struct SparseRows {
  std::vector<std::size_t> begin{0};
  std::vector<std::size_t> col;
  std::vector<double> val;

  explicit SparseRows(const Matrix<double>& X) {
    for (std::size_t i = 0; i < X.rows(); ++i) {
      const auto row = X.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) {
        if (row[j] != 0.0) {
          col.push_back(j);
          val.push_back(row[j]);
        }
      }
      begin.push_back(col.size());
    }
  }
};

double sparse_objective(const SparseRows& X, std::span<const int> y, double reg,
                        std::span<const double> p, std::vector<double>& g) {
  const std::size_t D = p.size() - 1;
  const double bias = p[D];
  g.assign(p.begin(), p.end());
  g[D] = 0.0;
  // Extended-precision sums: near the optimum the decreases the line search
  // must detect are smaller than the rounding noise of a double accumulation.
  long double f = 0.0L;
  for (std::size_t j = 0; j < D; ++j) f += 0.5L * p[j] * p[j];
  long double loss = 0.0L;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double s = bias;
    for (std::size_t k = X.begin[i]; k < X.begin[i + 1]; ++k) s += X.val[k] * p[X.col[k]];
    const double margin = y[i] * s;
    loss += softplus(-margin);
    const double coef = -reg * y[i] * sigmoid(-margin);
    for (std::size_t k = X.begin[i]; k < X.begin[i + 1]; ++k) g[X.col[k]] += coef * X.val[k];
    g[D] += coef;
  }
  return static_cast<double>(f + reg * loss);
}

}  // namespace

double logistic_objective(const Matrix<double>& X, std::span<const int> y,
                          double reg, std::span<const double> weights,
                          double bias, std::vector<double>* gradient) {
  const std::size_t D = X.cols();
  double f = 0.5 * dot(weights, weights);
  if (gradient) {
    gradient->assign(weights.begin(), weights.end());
    gradient->push_back(0.0);
  }
  for (std::size_t i = 0; i < X.rows(); ++i) {
    const auto x = X.row(i);
    const double margin = y[i] * (dot(x, weights) + bias);
    f += reg * softplus(-margin);
    if (gradient) {
      const double coef = -reg * y[i] * sigmoid(-margin);
      for (std::size_t j = 0; j < D; ++j) (*gradient)[j] += coef * x[j];
      (*gradient)[D] += coef;
    }
  }
  return f;
}

LinearModel train_linear_classifier(const Matrix<double>& X,
                                    std::span<const int> y, double reg) {
  if (X.rows() != y.size()) throw Error("feature rows and labels differ in count");
  if (!(reg > 0.0)) throw Error("regularization constant must be positive");
  const bool has_pos = std::find(y.begin(), y.end(), 1) != y.end();
  const bool has_neg = std::find(y.begin(), y.end(), -1) != y.end();
  if (!has_pos || !has_neg) throw Error("classifier needs both label classes");

  constexpr int kMaxIters = 10000;
  constexpr double kTolerance = 1e-6;
  constexpr std::size_t kMemory = 10;

  const std::size_t D = X.cols();
  std::vector<double> x(D + 1, 0.0);  // weights then bias
  const SparseRows sparse(X);
  auto eval = [&](const std::vector<double>& p, std::vector<double>& g) {
    return sparse_objective(sparse, y, reg, p, g);
  };

  std::vector<double> g;
  double f = eval(x, g);
  LinearModel model;
  model.objective_trace.push_back(f);

  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  std::vector<double> dir(D + 1), x_new(D + 1), g_new;
  int it = 0;
  for (; it < kMaxIters; ++it) {
    if (std::sqrt(dot(g, g)) <= kTolerance) break;

    // Two-loop recursion.
    dir = g;
    std::vector<double> alphas(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alphas[k] = rho_hist[k] * dot(s_hist[k], dir);
      for (std::size_t j = 0; j <= D; ++j) dir[j] -= alphas[k] * y_hist[k][j];
    }
    if (!s_hist.empty()) {
      const double gamma = dot(s_hist.back(), y_hist.back()) /
                           dot(y_hist.back(), y_hist.back());
      for (double& v : dir) v *= gamma;
    }
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * dot(y_hist[k], dir);
      for (std::size_t j = 0; j <= D; ++j) dir[j] += s_hist[k][j] * (alphas[k] - beta);
    }
    for (double& v : dir) v = -v;
    double slope = dot(g, dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t j = 0; j <= D; ++j) dir[j] = -g[j];
      slope = dot(g, dir);
    }

    // Armijo backtracking keeps the objective monotone.
    double step = 1.0;
    double f_new = 0.0;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      for (std::size_t j = 0; j <= D; ++j) x_new[j] = x[j] + step * dir[j];
      f_new = eval(x_new, g_new);
      if (f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // no further progress representable

    std::vector<double> s(D + 1), yv(D + 1);
    for (std::size_t j = 0; j <= D; ++j) {
      s[j] = x_new[j] - x[j];
      yv[j] = g_new[j] - g[j];
    }
    const double sy = dot(s, yv);
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
      if (s_hist.size() > kMemory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    model.objective_trace.push_back(f);
  }

  model.weights.assign(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(D));
  model.bias = x[D];
  model.iterations = it;
  model.gradient_norm = std::sqrt(dot(g, g));
  return model;
}

std::size_t CvResult::num_correct() const {
  return static_cast<std::size_t>(std::count(correct.begin(), correct.end(), true));
}

CvResult cross_validate(const Dataset& data, const Matrix<double>& features,
                        int folds, std::uint64_t seed, double reg,
                        unsigned threads) {
  if (folds < 2) throw Error("cross-validation needs at least two folds");
  if (features.rows() != data.num_users()) {
    throw Error("feature matrix needs one row per user");
  }
  CvResult r;
  for (std::size_t i = 0; i < data.num_users(); ++i) {
    if (data.label(static_cast<UserIndex>(i))) {
      r.users.push_back(static_cast<UserIndex>(i));
    }
  }
  const std::size_t n = r.users.size();
  if (n < static_cast<std::size_t>(folds)) {
    throw Error("only " + std::to_string(n) + " labeled users for " +
                std::to_string(folds) + " folds");
  }
  Rng rng(derive_seed(seed, "cv-shuffle"));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(r.users[i - 1], r.users[rng.index(i)]);
  }
  r.fold_of.resize(n);
  std::vector<std::size_t> bounds(folds + 1);
  for (int f = 0; f <= folds; ++f) bounds[f] = n * f / folds;
  for (int f = 0; f < folds; ++f) {
    for (std::size_t k = bounds[f]; k < bounds[f + 1]; ++k) r.fold_of[k] = f;
  }

  r.correct.assign(n, false);
  r.fold_accuracy.assign(folds, 0.0);
  std::vector<char> correct(n, 0);
  std::vector<std::string> failures(folds);

  auto run_fold = [&](int f) {
    const std::size_t n_train = n - (bounds[f + 1] - bounds[f]);
    Matrix<double> X(n_train, features.cols());
    std::vector<int> y;
    y.reserve(n_train);
    std::size_t row = 0;
    for (std::size_t k = 0; k < n; ++k) {
      if (r.fold_of[k] == f) continue;
      const auto src = features.row(r.users[k]);
      std::copy(src.begin(), src.end(), X.row(row++).begin());
      y.push_back(*data.label(r.users[k]));
    }
    const LinearModel model = train_linear_classifier(X, y, reg);
    std::size_t hits = 0;
    for (std::size_t k = bounds[f]; k < bounds[f + 1]; ++k) {
      const bool ok = model.predict(features.row(r.users[k])) == *data.label(r.users[k]);
      correct[k] = ok ? 1 : 0;
      hits += ok ? 1 : 0;
    }
    r.fold_accuracy[f] = static_cast<double>(hits) /
                         static_cast<double>(bounds[f + 1] - bounds[f]);
  };
  auto guarded = [&](int f) {
    try {
      run_fold(f);
    } catch (const std::exception& e) {
      failures[f] = e.what();
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(threads, folds));
  if (workers == 1) {
    for (int f = 0; f < folds; ++f) guarded(f);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (int f = next++; f < folds; f = next++) guarded(f);
      });
    }
  }
  for (int f = 0; f < folds; ++f) {
    if (!failures[f].empty()) {
      throw Error("fold " + std::to_string(f) + ": " + failures[f]);
    }
  }
  for (std::size_t k = 0; k < n; ++k) r.correct[k] = correct[k] != 0;
  r.mean_accuracy = std::accumulate(r.fold_accuracy.begin(), r.fold_accuracy.end(), 0.0) /
                    static_cast<double>(folds);
  return r;
}

}  // namespace sm4
