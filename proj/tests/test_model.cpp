#include <cmath>

#include "doctest.h"
#include "sm4/checkpoint.hpp"
#include "sm4/error.hpp"
#include "sm4/model.hpp"
#include "test_util.hpp"

using namespace sm4;
using doctest::Approx;

namespace {

// One user with the given documents (token lists), no links.
Dataset single_user(std::vector<std::vector<TokenId>> docs, std::size_t V) {
  std::vector<UserRecord> users(1);
  users[0].id = "a";
  users[0].docs = std::move(docs);
  return Dataset(std::move(users), sm4::testing::numbered_vocab(V), {});
}

}  // namespace

TEST_CASE("compute_lambda0") {
  CHECK(compute_lambda0(5, 2, 2) == Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(compute_lambda0(3, 3, 1), Error);
  // Zero-link count 799,977,486 over K^2 = 2500.
  CHECK(compute_lambda0(40000, 2514, 50) == Approx(12.676048131879902).epsilon(1e-12));
  CHECK_THROWS_AS(compute_lambda0(4, 0, 3), Error);  // 6 / 9 < 1
}

TEST_CASE("Hyperparams validation") {
  Hyperparams h;
  CHECK_NOTHROW(h.validate());
  h.delta = 1.0;
  CHECK_THROWS_AS(h.validate(), Error);
  h.delta = 0.5;
  h.alpha = 0.0;
  CHECK_THROWS_AS(h.validate(), Error);
}

TEST_CASE("recover_beta") {
  SUBCASE("prior mean when empty") {
    CountCache c(2, 4, 0);
    auto [beta, back] = recover_beta(c, 0.7);
    for (int a = 0; a < 2; ++a)
      for (std::size_t v = 0; v < 4; ++v) CHECK(beta(a, v) == Approx(0.25));
    for (double x : back) CHECK(x == Approx(0.25));
  }
  SUBCASE("closed form") {
    CountCache c(1, 2, 0);
    c.topic_word(0, 0) = 2;
    c.topic_word_total[0] = 2;
    auto [beta, back] = recover_beta(c, 1.0);
    CHECK(beta(0, 0) == Approx(0.75));
    CHECK(beta(0, 1) == Approx(0.25));
  }
  SUBCASE("matches direct recomputation from the state") {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
      auto t = sm4::testing::random_tiny_instance(rng, 5, 3, 4, 30, 4);
      const CountCache c = CountCache::recount(t.data, t.state, t.hyper.K);
      auto [beta, back] = recover_beta(c, t.hyper.eta);
      const double V = static_cast<double>(t.data.vocab_size());
      for (int a = 0; a < t.hyper.K; ++a) {
        double row_sum = 0.0;
        for (std::size_t v = 0; v < t.data.vocab_size(); ++v) {
          double n = 0.0, total = 0.0;
          for (std::size_t w = 0; w < t.data.num_words(); ++w) {
            if (!t.state.f[w] || t.state.z[t.data.word_doc(w)] != a) continue;
            total += 1.0;
            if (static_cast<std::size_t>(t.data.word(w)) == v) n += 1.0;
          }
          CHECK(beta(a, v) == Approx((t.hyper.eta + n) / (V * t.hyper.eta + total)));
          CHECK(beta(a, v) > 0.0);
          row_sum += beta(a, v);
        }
        CHECK(std::abs(row_sum - 1.0) < 1e-9);
      }
      double back_sum = 0.0;
      for (double x : back) back_sum += x;
      CHECK(std::abs(back_sum - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("recover_phi") {
  CountCache c(3, 1, 0);
  const double l0 = std::log(2.0);
  auto phi = recover_phi(c, 0.1, l0);
  CHECK(phi(0, 2) == Approx(0.1 / (0.1 + l0)));
  c.pair_link(2, 1) = 3;
  phi = recover_phi(c, 0.1, l0);
  CHECK(phi(1, 2) == Approx(0.8172633047005514).epsilon(1e-12));
  CHECK(phi(2, 1) == phi(1, 2));
  double previous = 0.0;
  for (int n = 0; n < 50; ++n) {
    c.pair_link(0, 0) = n;
    const double v = recover_phi(c, 0.1, l0)(0, 0);
    CHECK(v > previous);
    CHECK(v > 0.0);
    CHECK(v < 1.0);
    previous = v;
  }
}

TEST_CASE("theta_hat") {
  SUBCASE("documents only") {
    const Dataset d = single_user({{0}, {1}}, 2);
    LatentState st{{0, 0}, {1, 1}, {}};
    const CountCache c = CountCache::recount(d, st, 2);
    const auto raw = theta_hat(c, 0, 1.0, false);
    CHECK(raw[0] == Approx(1.0));
    CHECK(raw[1] == Approx(0.0));
    const auto smooth = theta_hat(c, 0, 1.0, true);
    CHECK(smooth[0] == Approx(0.75));
    CHECK(smooth[1] == Approx(0.25));
  }
  SUBCASE("documents and links weigh equally") {
    std::vector<UserRecord> users(2);
    users[0] = {"a", {{0}}, std::nullopt};
    users[1] = {"b", {}, std::nullopt};
    const Dataset d(std::move(users), sm4::testing::numbered_vocab(1), {{0, 1}});
    LatentState st{{0}, {1}, {1, 0}};
    const CountCache c = CountCache::recount(d, st, 2);
    const auto raw = theta_hat(c, 0, 1.0, false);
    CHECK(raw[0] == Approx(0.5));
    CHECK(raw[1] == Approx(0.5));
  }
  SUBCASE("isolated user without documents") {
    const Dataset d = single_user({}, 1);
    const CountCache c = CountCache::recount(d, LatentState{}, 3);
    CHECK_THROWS_AS(theta_hat(c, 0, 0.5, false), Error);
    const auto smooth = theta_hat(c, 0, 0.5, true);
    for (double x : smooth) CHECK(x == Approx(1.0 / 3.0));
  }
}

TEST_CASE("recount invariants") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    auto t = sm4::testing::random_tiny_instance(rng, 6, 3, 5, 40, 8);
    const CountCache c = CountCache::recount(t.data, t.state, t.hyper.K);
    std::int64_t fg = 0;
    for (int a = 0; a < t.hyper.K; ++a)
      for (std::size_t v = 0; v < c.V; ++v) fg += c.topic_word(a, v);
    CHECK(fg + c.back_total == static_cast<std::int64_t>(t.data.num_words()));
    std::int64_t pairs = 0;
    for (auto x : c.pair_link.data()) pairs += x;
    CHECK(pairs == static_cast<std::int64_t>(t.data.edges().size()));
    for (std::size_t i = 0; i < t.data.num_users(); ++i) {
      const auto u = static_cast<UserIndex>(i);
      std::int64_t row = 0;
      for (int a = 0; a < t.hyper.K; ++a) row += c.user_topic(i, a);
      const auto expected = static_cast<std::int64_t>(
          t.data.num_user_docs(u) + t.data.neighbors(u).size());
      CHECK(row == expected);
      CHECK(c.user_denom[i] == expected);
      double s = 0.0;
      for (double x : theta_hat(c, u, t.hyper.alpha, true)) s += x;
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(9);
  auto t = sm4::testing::random_tiny_instance(rng, 5, 3, 4, 20, 5);
  Checkpoint ck;
  ck.vocab = t.data.vocab().tokens();
  for (const auto& u : t.data.users()) ck.user_ids.push_back(u.id);
  ck.hyper = t.hyper;
  ck.nu = t.nu;
  ck.nu[0] = 0.1 + 0.2;  // not exactly representable in short decimal
  ck.sigma2 = 1.0 / 3.0;
  ck.counts = CountCache::recount(t.data, t.state, t.hyper.K);
  ck.state = t.state;
  ck.seed = 0xfedcba9876543210ULL;
  ck.rng_state = rng.save();
  ck.iteration = 7;
  ck.initial_log_likelihood = -1234.5678901234567;
  ck.log_likelihood_trace = {-1000.1, -999.987654321, std::nextafter(-998.0, 0.0)};

  sm4::testing::TempDir dir;
  save_checkpoint(ck, dir.file("a.json"));
  const Checkpoint loaded = load_checkpoint(dir.file("a.json"));
  CHECK(loaded == ck);
  save_checkpoint(loaded, dir.file("b.json"));
  CHECK(sm4::testing::read_file(dir.file("a.json")) ==
        sm4::testing::read_file(dir.file("b.json")));

  Rng restored;
  restored.restore(loaded.rng_state);
  for (int k = 0; k < 10; ++k) CHECK(restored.engine()() == rng.engine()());
}

TEST_CASE("checkpoint rejects foreign or broken documents") {
  CHECK_THROWS_AS(checkpoint_from_string("{}"), Error);
  CHECK_THROWS_AS(checkpoint_from_string("not json"), Error);
  CHECK_THROWS_AS(checkpoint_from_string(R"({"format":"sm4-checkpoint","version":99})"), Error);
}
