#include "sm4/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sm4/error.hpp"

namespace sm4 {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "sm4-checkpoint";

template <typename T>
std::vector<T> get_vector(const json& j, const char* key) {
  return j.at(key).get<std::vector<T>>();
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  const CountCache& c = ckpt.counts;
  json j;
  j["format"] = kFormatName;
  j["version"] = Checkpoint::kFormatVersion;
  j["K"] = c.K;
  j["V"] = c.V;
  j["P"] = c.P;
  j["vocab"] = ckpt.vocab;
  j["user_ids"] = ckpt.user_ids;
  j["hyper"] = {{"alpha", ckpt.hyper.alpha},     {"eta", ckpt.hyper.eta},
                {"delta", ckpt.hyper.delta},     {"lambda1", ckpt.hyper.lambda1},
                {"lambda0", ckpt.hyper.lambda0}};
  j["nu"] = ckpt.nu;
  j["sigma2"] = ckpt.sigma2;
  j["counts"] = {
      {"user_topic", c.user_topic.data()},
      {"user_denom", c.user_denom},
      {"topic_word", c.topic_word.data()},
      {"topic_word_total", c.topic_word_total},
      {"back_word", c.back_word},
      {"back_total", c.back_total},
      {"pair_link", c.pair_link.data()},
  };
  j["state"] = {{"z", ckpt.state.z}, {"f", ckpt.state.f}, {"s", ckpt.state.s}};
  j["rng"] = {{"seed", ckpt.seed}, {"state", ckpt.rng_state}};
  j["iteration"] = ckpt.iteration;
  j["initial_log_likelihood"] = ckpt.initial_log_likelihood;
  j["log_likelihood_trace"] = ckpt.log_likelihood_trace;
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  try {
    if (j.at("format") != kFormatName) throw Error("not an sm4 checkpoint");
    const int version = j.at("version").get<int>();
    if (version != Checkpoint::kFormatVersion) {
      throw Error("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ck;
    const int K = j.at("K").get<int>();
    const auto V = j.at("V").get<std::size_t>();
    const auto P = j.at("P").get<std::size_t>();
    ck.vocab = get_vector<std::string>(j, "vocab");
    ck.user_ids = get_vector<std::string>(j, "user_ids");
    if (ck.vocab.size() != V || ck.user_ids.size() != P) {
      throw Error("checkpoint header disagrees with vocabulary or user list");
    }
    const json& h = j.at("hyper");
    ck.hyper.K = K;
    ck.hyper.alpha = h.at("alpha").get<double>();
    ck.hyper.eta = h.at("eta").get<double>();
    ck.hyper.delta = h.at("delta").get<double>();
    ck.hyper.lambda1 = h.at("lambda1").get<double>();
    ck.hyper.lambda0 = h.at("lambda0").get<double>();
    ck.hyper.validate();
    ck.nu = get_vector<double>(j, "nu");
    ck.sigma2 = j.at("sigma2").get<double>();
    if (ck.nu.size() != static_cast<std::size_t>(K)) {
      throw Error("nu has wrong length");
    }

    CountCache c(K, V, P);
    const json& cj = j.at("counts");
    c.user_topic.data() = get_vector<std::int64_t>(cj, "user_topic");
    c.user_denom = get_vector<std::int64_t>(cj, "user_denom");
    c.topic_word.data() = get_vector<std::int64_t>(cj, "topic_word");
    c.topic_word_total = get_vector<std::int64_t>(cj, "topic_word_total");
    c.back_word = get_vector<std::int64_t>(cj, "back_word");
    c.back_total = cj.at("back_total").get<std::int64_t>();
    c.pair_link.data() = get_vector<std::int64_t>(cj, "pair_link");
    if (c.user_topic.data().size() != P * K || c.user_denom.size() != P ||
        c.topic_word.data().size() != V * K ||
        c.topic_word_total.size() != static_cast<std::size_t>(K) ||
        c.back_word.size() != V ||
        c.pair_link.data().size() != static_cast<std::size_t>(K * (K + 1) / 2)) {
      throw Error("checkpoint count tables have wrong shapes");
    }
    ck.counts = std::move(c);

    const json& sj = j.at("state");
    ck.state.z = get_vector<std::int32_t>(sj, "z");
    ck.state.f = get_vector<std::uint8_t>(sj, "f");
    ck.state.s = get_vector<std::int32_t>(sj, "s");

    ck.seed = j.at("rng").at("seed").get<std::uint64_t>();
    ck.rng_state = j.at("rng").at("state").get<std::string>();
    ck.iteration = j.at("iteration").get<int>();
    ck.initial_log_likelihood = j.at("initial_log_likelihood").get<double>();
    ck.log_likelihood_trace = get_vector<double>(j, "log_likelihood_trace");
    return ck;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << checkpoint_to_string(ckpt);
  if (!out) throw Error("failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace sm4
