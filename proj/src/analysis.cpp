#include "sm4/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "sm4/error.hpp"

namespace sm4 {

std::vector<TokenWeight> topic_top_words(const TopicParams& params, int topic,
                                         std::size_t n) {
  if (topic < 0 || topic >= params.K) {
    throw std::out_of_range("topic " + std::to_string(topic) + " out of range");
  }
  n = std::min(n, params.V);
  const auto row = params.beta.row(topic);
  std::vector<TokenId> order(params.V);
  std::iota(order.begin(), order.end(), 0);
  std::partial_sort(order.begin(), order.begin() + n, order.end(),
                    [&](TokenId x, TokenId y) {
                      return row[x] != row[y] ? row[x] > row[y] : x < y;
                    });
  std::vector<TokenWeight> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({order[i], row[order[i]]});
  return out;
}

std::vector<double> topic_popularity(const Matrix<double>& theta) {
  if (theta.rows() == 0) throw Error("no feature vectors to summarize");
  std::vector<double> pop(theta.cols(), 0.0);
  for (std::size_t i = 0; i < theta.rows(); ++i) {
    for (std::size_t a = 0; a < theta.cols(); ++a) pop[a] += theta(i, a);
  }
  for (double& p : pop) p /= static_cast<double>(theta.rows());
  return pop;
}

std::vector<PairRank> rank_topic_pairs(std::span<const std::pair<int, int>> pairs,
                                       std::span<const double> popularity,
                                       std::size_t top_n) {
  const int K = static_cast<int>(popularity.size());
  std::map<std::pair<int, int>, std::size_t> counts;
  for (auto [a, b] : pairs) {
    if (a > b) std::swap(a, b);
    if (a < 0 || b >= K) throw Error("link pair topic out of range");
    ++counts[{a, b}];
  }
  const double n_edges = static_cast<double>(pairs.size());
  std::vector<PairRank> out;
  for (const auto& [pair, count] : counts) {
    const double pop = popularity[pair.first] * popularity[pair.second];
    if (!(pop > 0.0)) {
      throw Error("topic pair (" + std::to_string(pair.first) + ", " +
                  std::to_string(pair.second) +
                  ") has links but zero popularity");
    }
    out.push_back({pair.first, pair.second, count,
                   static_cast<double>(count) / (pop * n_edges)});
  }
  std::stable_sort(out.begin(), out.end(), [](const PairRank& x, const PairRank& y) {
    return x.score > y.score;
  });
  if (out.size() > top_n) out.resize(top_n);
  return out;
}

std::vector<TopicMatch> match_topics(const Matrix<double>& beta_a,
                                     const Matrix<double>& beta_b,
                                     std::size_t n_matches) {
  if (beta_a.cols() != beta_b.cols()) {
    throw Error("topic models have different vocabulary sizes");
  }
  auto norm = [](std::span<const double> r) {
    return std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
  };
  std::vector<TopicMatch> candidates;
  candidates.reserve(beta_a.rows() * beta_b.rows());
  for (std::size_t i = 0; i < beta_a.rows(); ++i) {
    const auto ra = beta_a.row(i);
    const double na = norm(ra);
    for (std::size_t j = 0; j < beta_b.rows(); ++j) {
      const auto rb = beta_b.row(j);
      const double denom = na * norm(rb);
      const double dot = std::inner_product(ra.begin(), ra.end(), rb.begin(), 0.0);
      candidates.push_back({static_cast<int>(i), static_cast<int>(j),
                            denom > 0.0 ? std::min(1.0, dot / denom) : 0.0});
    }
  }
  // Candidates were generated in (i, j) order; stable sort keeps that as the
  // tie-break.
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const TopicMatch& x, const TopicMatch& y) {
                     return x.cosine > y.cosine;
                   });
  std::vector<bool> used_a(beta_a.rows(), false), used_b(beta_b.rows(), false);
  std::vector<TopicMatch> out;
  for (const auto& c : candidates) {
    if (out.size() == n_matches) break;
    if (used_a[c.topic_a] || used_b[c.topic_b]) continue;
    used_a[c.topic_a] = used_b[c.topic_b] = true;
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Chi-square

namespace {

// Series for the lower regularized gamma P(a, x), valid for x < a + 1.
double gamma_p_series(double a, double x) {
  double term = 1.0 / a;
  double sum = term;
  for (int n = 1; n < 1000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Continued fraction (modified Lentz) for Q(a, x), valid for x >= a + 1.
double gamma_q_fraction(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i < 1000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace

double regularized_gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw Error("invalid incomplete gamma arguments");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_fraction(a, x);
}

double chi_square_survival(double x, double dof) {
  if (x <= 0.0) return 1.0;
  return regularized_gamma_q(0.5 * dof, 0.5 * x);
}

ChiSquare chi_square_test(std::size_t correct_a, std::size_t n_a,
                          std::size_t correct_b, std::size_t n_b) {
  if (n_a == 0 || n_b == 0) throw Error("chi-square test needs trials for both methods");
  if (correct_a > n_a || correct_b > n_b) {
    throw Error("more correct predictions than trials");
  }
  const double a = static_cast<double>(correct_a);
  const double b = static_cast<double>(n_a - correct_a);
  const double c = static_cast<double>(correct_b);
  const double d = static_cast<double>(n_b - correct_b);
  const double col_correct = a + c;
  const double col_wrong = b + d;
  ChiSquare out;
  if (col_correct == 0.0 || col_wrong == 0.0) return out;
  const double n = a + b + c + d;
  const double cross = a * d - b * c;
  out.statistic = n * cross * cross /
                  (static_cast<double>(n_a) * static_cast<double>(n_b) *
                   col_correct * col_wrong);
  out.p_value = chi_square_survival(out.statistic, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Export

namespace {

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out.push_back('\\');
    out.push_back(ch);
  }
  return out;
}

std::string token_name(const VizInput& in, TokenId t) {
  if (in.vocab && static_cast<std::size_t>(t) < in.vocab->size()) {
    return (*in.vocab)[t];
  }
  return "#" + std::to_string(t);
}

std::string format_double(double x, int precision) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << x;
  return os.str();
}

}  // namespace

std::string render_dot(const VizInput& in) {
  const TopicParams& p = *in.params;
  std::ostringstream os;
  os << "graph topics {\n";
  os << "  node [shape=box, fontname=\"Helvetica\"];\n";
  for (int a = 0; a < p.K; ++a) {
    std::string words;
    for (const auto& tw : topic_top_words(p, a, in.top_words)) {
      if (!words.empty()) words += ' ';
      words += dot_escape(token_name(in, tw.token));
    }
    const double pop = a < static_cast<int>(in.popularity.size()) ? in.popularity[a] : 0.0;
    const double nu = a < static_cast<int>(p.nu.size()) ? p.nu[a] : 0.0;
    const bool positive = nu >= 0.0;
    os << "  t" << a << " [label=\"topic " << a << " ("
       << format_double(100.0 * pop, 1) << "%) " << (positive ? "+" : "")
       << format_double(nu, 2) << "\\n" << words << "\", style="
       << (positive ? "solid" : "dashed")
       << ", penwidth=" << (positive ? "3" : "1") << "];\n";
  }
  double max_score = 0.0;
  for (const auto& r : in.rankings) max_score = std::max(max_score, r.score);
  for (const auto& r : in.rankings) {
    const double width = max_score > 0.0 ? 1.0 + 4.0 * r.score / max_score : 1.0;
    os << "  t" << r.a << " -- t" << r.b << " [label=\""
       << format_double(r.score, 3) << "\", penwidth="
       << format_double(width, 2) << ", count=" << r.count << "];\n";
  }
  os << "}\n";
  return os.str();
}

std::string render_summary(const VizInput& in) {
  using nlohmann::json;
  const TopicParams& p = *in.params;
  json topics = json::array();
  for (int a = 0; a < p.K; ++a) {
    json words = json::array();
    for (const auto& tw : topic_top_words(p, a, in.top_words)) {
      words.push_back({{"token", token_name(in, tw.token)}, {"probability", tw.probability}});
    }
    topics.push_back({{"topic", a},
                      {"popularity", a < static_cast<int>(in.popularity.size()) ? in.popularity[a] : 0.0},
                      {"nu", a < static_cast<int>(p.nu.size()) ? p.nu[a] : 0.0},
                      {"top_words", std::move(words)}});
  }
  json pairs = json::array();
  for (const auto& r : in.rankings) {
    pairs.push_back({{"a", r.a}, {"b", r.b}, {"count", r.count}, {"score", r.score}});
  }
  json doc = {{"topics", std::move(topics)}, {"pairs", std::move(pairs)}};
  return doc.dump(2) + "\n";
}

void export_viz(const VizInput& input, const std::filesystem::path& summary_path,
                const std::filesystem::path& dot_path) {
  if (!input.params) throw Error("export needs trained parameters");
  const std::string summary = render_summary(input);
  const std::string dot = render_dot(input);
  std::ofstream s(summary_path);
  if (!s) throw Error("cannot write " + summary_path.string());
  s << summary;
  std::ofstream d(dot_path);
  if (!d) throw Error("cannot write " + dot_path.string());
  d << dot;
}

}  // namespace sm4
