#include "cli.hpp"

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "sm4/analysis.hpp"
#include "sm4/checkpoint.hpp"
#include "sm4/corpus.hpp"
#include "sm4/error.hpp"
#include "sm4/evaluation.hpp"
#include "sm4/predictor.hpp"
#include "sm4/synthgen.hpp"
#include "sm4/trainer.hpp"

namespace sm4::cli {
namespace {

using nlohmann::json;

std::shared_ptr<spdlog::logger> logger() {
  if (auto l = spdlog::get("sm4")) return l;
  auto l = spdlog::stderr_logger_mt("sm4");
  l->set_pattern("[%H:%M:%S.%e] [%l] %v");
  l->set_level(spdlog::level::warn);
  if (const char* env = std::getenv("SM4_LOG_LEVEL")) {
    l->set_level(spdlog::level::from_str(env));
  }
  return l;
}

struct GenerateArgs {
  GenSpec spec;
  std::size_t docs = 10;
  std::size_t words = 5;
  std::uint64_t seed = 0;
  std::string out_users, out_edges, out_truth;
};

struct TrainArgs {
  std::string users, edges, out, metrics, resume;
  TrainConfig cfg;
  int min_token_freq = 1;
  double lambda0 = 0.0;
  bool no_early_stop = false;
};

struct PredictArgs {
  std::string checkpoint, users, edges, out;
  PredictConfig cfg;
};

struct AnalyzeArgs {
  std::string checkpoint, features, out_summary, out_dot;
  std::size_t top_words = 5;
  std::size_t top_pairs = 10;
};

struct EvaluateArgs {
  std::string users, edges, checkpoint, features;
  int folds = 10;
  std::uint64_t seed = 0;
  double reg = 1.0;
  unsigned threads = 1;
};

Dataset load_for_checkpoint(const std::string& users, const std::string& edges,
                            const Checkpoint& ckpt, Vocabulary& vocab) {
  vocab = Vocabulary(ckpt.vocab);
  LoadOptions opts;
  opts.fixed_vocab = &vocab;
  Dataset data = load_dataset(users, edges, opts);
  if (data.dropped_tokens() > 0) {
    logger()->info("dropped {} tokens not in the trained vocabulary",
                   data.dropped_tokens());
  }
  return data;
}

int run_generate(const GenerateArgs& a, std::ostream& out) {
  GenSpec spec = a.spec;
  spec.min_docs = spec.max_docs = a.docs;
  spec.min_words = spec.max_words = a.words;
  const Generated gen = generate_dataset(spec, a.seed);
  write_users(gen.data, a.out_users);
  write_edges(gen.data, a.out_edges);
  if (!a.out_truth.empty()) write_truth(gen, a.out_truth);
  out << json{{"users", gen.data.num_users()},
              {"edges", gen.data.edges().size()},
              {"documents", gen.data.num_docs()},
              {"words", gen.data.num_words()}}
             .dump()
      << '\n';
  return kOk;
}

int run_train(TrainArgs a, std::ostream& out) {
  LoadOptions opts;
  opts.min_token_freq = a.min_token_freq;
  std::optional<Checkpoint> previous;
  Vocabulary vocab;
  Dataset data;
  if (!a.resume.empty()) {
    previous = load_checkpoint(a.resume);
    data = load_for_checkpoint(a.users, a.edges, *previous, vocab);
    a.cfg.K = previous->hyper.K;
  } else {
    data = load_dataset(a.users, a.edges, opts);
  }
  if (a.lambda0 > 0.0) a.cfg.lambda0 = a.lambda0;
  a.cfg.early_stop = !a.no_early_stop;
  logger()->info("training on {} users, {} documents, {} words, {} edges",
                 data.num_users(), data.num_docs(), data.num_words(),
                 data.edges().size());

  std::ofstream metrics_file;
  std::ostream* metrics = &out;
  if (!a.metrics.empty()) {
    metrics_file.open(a.metrics);
    if (!metrics_file) throw Error("cannot write " + a.metrics);
    metrics = &metrics_file;
  }
  auto observer = [&](const IterationMetrics& m) {
    *metrics << json{{"iteration", m.iteration},
                     {"log_likelihood", m.log_likelihood},
                     {"alpha", m.alpha},
                     {"eta", m.eta},
                     {"delta", m.delta},
                     {"sigma2", m.sigma2},
                     {"accepted_alpha", m.accepted_alpha},
                     {"accepted_eta", m.accepted_eta},
                     {"accepted_delta", m.accepted_delta}}
                    .dump()
             << '\n';
  };
  const TrainResult result =
      previous ? resume_training(data, *previous, a.cfg, observer)
               : train(data, a.cfg, observer);
  save_checkpoint(result.checkpoint, a.out);
  logger()->info("stopped after {} iterations{}", result.checkpoint.iteration,
                 result.converged ? " (converged)" : "");
  return kOk;
}

int run_predict(const PredictArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  Vocabulary vocab;
  const Dataset data = load_for_checkpoint(a.users, a.edges, ckpt, vocab);
  const TopicParams params =
      recover_params(ckpt.counts, ckpt.hyper, ckpt.nu, ckpt.sigma2);
  const PredictionReport report = predict_all(data, params, ckpt.hyper, a.cfg);
  for (const auto& e : report.errors) {
    logger()->error("user {}: {}", data.user(e.user).id, e.message);
  }
  write_features(data, report.features, a.out);
  out << json{{"users", data.num_users()},
              {"edges", data.edges().size()},
              {"dropped_tokens", data.dropped_tokens()},
              {"errors", report.errors.size()}}
             .dump()
      << '\n';
  return report.errors.empty() ? kOk : kDataError;
}

int run_analyze(const AnalyzeArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  const TopicParams params =
      recover_params(ckpt.counts, ckpt.hyper, ckpt.nu, ckpt.sigma2);
  const FeaturesFile ff = read_features(a.features);
  if (ff.theta.cols() != static_cast<std::size_t>(params.K)) {
    throw Error("features have " + std::to_string(ff.theta.cols()) +
                " topics, checkpoint has " + std::to_string(params.K));
  }
  VizInput in;
  in.params = &params;
  in.vocab = &ckpt.vocab;
  in.top_words = a.top_words;
  in.popularity = topic_popularity(ff.theta);
  std::vector<std::pair<int, int>> pairs;
  for (const auto& e : ff.edges) pairs.emplace_back(e.a, e.b);
  in.rankings = rank_topic_pairs(pairs, in.popularity, a.top_pairs);
  export_viz(in, a.out_summary, a.out_dot);
  out << json{{"topics", params.K}, {"ranked_pairs", in.rankings.size()}}.dump()
      << '\n';
  return kOk;
}

int run_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  Vocabulary vocab;
  const Dataset data = load_for_checkpoint(a.users, a.edges, ckpt, vocab);
  const FeaturesFile ff = read_features(a.features);
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < ff.user_ids.size(); ++i) row_of[ff.user_ids[i]] = i;

  const std::size_t V = data.vocab_size();
  const std::size_t K = ff.theta.cols();
  Matrix<double> bow(data.num_users(), V);
  Matrix<double> both(data.num_users(), V + K);
  for (std::size_t i = 0; i < data.num_users(); ++i) {
    const auto& id = data.users()[i].id;
    auto it = row_of.find(id);
    if (it == row_of.end()) throw Error("no feature vector for user '" + id + "'");
    const auto b = bow_features(data, static_cast<UserIndex>(i));
    std::copy(b.begin(), b.end(), bow.row(i).begin());
    const auto c = concat_features(b, ff.theta.row(it->second));
    std::copy(c.begin(), c.end(), both.row(i).begin());
  }
  const CvResult base = cross_validate(data, bow, a.folds, a.seed, a.reg, a.threads);
  const CvResult plus = cross_validate(data, both, a.folds, a.seed, a.reg, a.threads);
  const ChiSquare chi = chi_square_test(plus.num_correct(), plus.correct.size(),
                                        base.num_correct(), base.correct.size());
  out << json{{"folds", a.folds},
              {"bow", {{"fold_accuracy", base.fold_accuracy},
                       {"mean_accuracy", base.mean_accuracy}}},
              {"bow_plus_theta", {{"fold_accuracy", plus.fold_accuracy},
                                  {"mean_accuracy", plus.mean_accuracy}}},
              {"chi_square", chi.statistic},
              {"p_value", chi.p_value}}
             .dump(2)
      << '\n';
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err) {
  CLI::App app{"Supervised multi-view mixed membership model toolkit", "sm4"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "simulate a synthetic dataset");
  g->add_option("--k", gen.spec.K, "topics")->required();
  g->add_option("--v", gen.spec.V, "vocabulary size")->required();
  g->add_option("--p", gen.spec.P, "users")->required();
  g->add_option("--docs-per-user", gen.docs)->capture_default_str();
  g->add_option("--words-per-doc", gen.words)->capture_default_str();
  g->add_option("--alpha", gen.spec.alpha)->capture_default_str();
  g->add_option("--eta", gen.spec.eta)->capture_default_str();
  g->add_option("--delta", gen.spec.delta)->capture_default_str();
  g->add_option("--lambda1", gen.spec.lambda1)->capture_default_str();
  g->add_option("--lambda0", gen.spec.lambda0)->capture_default_str();
  g->add_option("--sigma2", gen.spec.sigma2, "label noise variance")->capture_default_str();
  g->add_option("--seed", gen.seed)->capture_default_str();
  g->add_option("--out-users", gen.out_users)->required();
  g->add_option("--out-edges", gen.out_edges)->required();
  g->add_option("--out-truth", gen.out_truth);

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "fit the model with collapsed Gibbs sampling");
  t->add_option("--users", tr.users)->required();
  t->add_option("--edges", tr.edges)->required();
  auto* k_opt = t->add_option("--k", tr.cfg.K, "topics");
  t->add_option("--iters", tr.cfg.max_iters)->capture_default_str();
  t->add_option("--seed", tr.cfg.seed)->capture_default_str();
  t->add_flag("--fix-hyper", tr.cfg.fix_hyper, "disable Metropolis-Hastings on alpha, eta, delta");
  auto* freq_opt = t->add_option("--min-token-freq", tr.min_token_freq)->capture_default_str();
  t->add_option("--convergence", tr.cfg.convergence)->capture_default_str();
  t->add_flag("--no-early-stop", tr.no_early_stop, "always run --iters sweeps");
  t->add_option("--lambda0", tr.lambda0, "override the link prior pseudo-count");
  t->add_option("--metrics", tr.metrics, "per-iteration log (default: stdout)");
  auto* resume_opt = t->add_option("--resume", tr.resume, "continue from a checkpoint");
  resume_opt->excludes(k_opt)->excludes(freq_opt);
  t->add_option("--out", tr.out)->required();

  PredictArgs pr;
  auto* p = app.add_subcommand("predict", "infer user features and friendship topic pairs");
  p->add_option("--checkpoint", pr.checkpoint)->required();
  p->add_option("--users", pr.users)->required();
  p->add_option("--edges", pr.edges)->required();
  p->add_option("--seed", pr.cfg.seed)->capture_default_str();
  p->add_option("--threads", pr.cfg.threads)->capture_default_str();
  p->add_option("--iters", pr.cfg.iters)->capture_default_str();
  p->add_option("--out", pr.out)->required();

  AnalyzeArgs an;
  auto* z = app.add_subcommand("analyze", "summarize topics and friendship pairs");
  z->add_option("--checkpoint", an.checkpoint)->required();
  z->add_option("--features", an.features)->required();
  z->add_option("--top-words", an.top_words)->capture_default_str();
  z->add_option("--top-pairs", an.top_pairs)->capture_default_str();
  z->add_option("--out-summary", an.out_summary)->required();
  z->add_option("--out-dot", an.out_dot)->required();

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "cross-validated label prediction, BoW vs BoW + features");
  e->add_option("--users", ev.users)->required();
  e->add_option("--edges", ev.edges)->required();
  e->add_option("--checkpoint", ev.checkpoint)->required();
  e->add_option("--features", ev.features)->required();
  e->add_option("--folds", ev.folds)->capture_default_str();
  e->add_option("--seed", ev.seed)->capture_default_str();
  e->add_option("--reg", ev.reg, "classifier regularization constant")->capture_default_str();
  e->add_option("--threads", ev.threads)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
    if (t->parsed() && tr.resume.empty() && k_opt->count() == 0) {
      throw CLI::RequiredError("--k");
    }
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (g->parsed()) return run_generate(gen, out);
    if (t->parsed()) return run_train(tr, out);
    if (p->parsed()) return run_predict(pr, out);
    if (z->parsed()) return run_analyze(an, out);
    if (e->parsed()) return run_evaluate(ev, out);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace sm4::cli
