#include "sm4/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sm4/error.hpp"

namespace sm4 {

using nlohmann::json;

Vocabulary::Vocabulary(std::vector<std::string> tokens) {
  for (auto& t : tokens) {
    if (index_.count(t)) throw Error("duplicate vocabulary token '" + t + "'");
    add(t);
  }
}

TokenId Vocabulary::add(const std::string& token) {
  auto [it, inserted] =
      index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::optional<TokenId> Vocabulary::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Dataset::Dataset(std::vector<UserRecord> users, Vocabulary vocab,
                 std::vector<Edge> edges)
    : users_(std::move(users)), vocab_(std::move(vocab)) {
  const auto P = static_cast<UserIndex>(users_.size());
  const auto V = static_cast<TokenId>(vocab_.size());
  for (UserIndex i = 0; i < P; ++i) {
    const auto& u = users_[i];
    if (!user_index_.emplace(u.id, i).second) {
      throw Error("duplicate user id '" + u.id + "'");
    }
    if (u.label && *u.label != 1 && *u.label != -1) {
      throw Error("user '" + u.id + "' has label " + std::to_string(*u.label) +
                  ", expected +1 or -1");
    }
    for (const auto& doc : u.docs) {
      for (TokenId t : doc) {
        if (t < 0 || t >= V) {
          throw Error("user '" + u.id + "' has token id " + std::to_string(t) +
                      " outside vocabulary of size " + std::to_string(V));
        }
      }
    }
  }
  edges_.reserve(edges.size());
  for (Edge e : edges) {
    if (e.u < 0 || e.u >= P || e.v < 0 || e.v >= P) {
      throw Error("edge (" + std::to_string(e.u) + ", " + std::to_string(e.v) +
                  ") refers to a missing user");
    }
    if (e.u == e.v) {
      throw Error("self-loop on user '" + users_[e.u].id + "'");
    }
    if (e.u > e.v) std::swap(e.u, e.v);
    edges_.push_back(e);
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());
  build_index();
}

void Dataset::build_index() {
  const std::size_t P = users_.size();

  std::vector<std::size_t> degree(P, 0);
  for (const Edge& e : edges_) {
    ++degree[e.u];
    ++degree[e.v];
  }
  adj_offsets_.assign(P + 1, 0);
  for (std::size_t i = 0; i < P; ++i) {
    adj_offsets_[i + 1] = adj_offsets_[i] + degree[i];
  }
  adj_.assign(adj_offsets_[P], 0);
  half_links_.assign(adj_offsets_[P], 0);
  half_offsets_ = adj_offsets_;
  std::vector<std::size_t> fill(adj_offsets_.begin(), adj_offsets_.end() - 1);
  // Edges are sorted, so filling lower neighbors first keeps each list sorted.
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const Edge& ed = edges_[e];
    adj_[fill[ed.v]] = ed.u;
    half_links_[fill[ed.v]++] = 2 * e + 1;
  }
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const Edge& ed = edges_[e];
    adj_[fill[ed.u]] = ed.v;
    half_links_[fill[ed.u]++] = 2 * e;
  }

  user_doc_offsets_.assign(P + 1, 0);
  doc_user_.clear();
  doc_offsets_.assign(1, 0);
  tokens_.clear();
  word_doc_.clear();
  for (std::size_t i = 0; i < P; ++i) {
    for (const auto& doc : users_[i].docs) {
      const std::size_t d = doc_user_.size();
      doc_user_.push_back(static_cast<UserIndex>(i));
      for (TokenId t : doc) {
        tokens_.push_back(t);
        word_doc_.push_back(d);
      }
      doc_offsets_.push_back(tokens_.size());
    }
    user_doc_offsets_[i + 1] = doc_user_.size();
  }
}

std::optional<UserIndex> Dataset::find_user(const std::string& id) const {
  auto it = user_index_.find(id);
  if (it == user_index_.end()) return std::nullopt;
  return it->second;
}

std::span<const UserIndex> Dataset::neighbors(UserIndex i) const {
  return {adj_.data() + adj_offsets_[i], adj_offsets_[i + 1] - adj_offsets_[i]};
}

std::span<const std::size_t> Dataset::user_half_links(UserIndex i) const {
  return {half_links_.data() + half_offsets_[i],
          half_offsets_[i + 1] - half_offsets_[i]};
}

std::size_t Dataset::num_labeled() const {
  return static_cast<std::size_t>(std::count_if(
      users_.begin(), users_.end(),
      [](const UserRecord& u) { return u.label.has_value(); }));
}

std::vector<UserIndex> neighbors(const Dataset& data, UserIndex i) {
  if (i < 0 || static_cast<std::size_t>(i) >= data.num_users()) {
    throw std::out_of_range("user index " + std::to_string(i) +
                            " out of range");
  }
  auto n = data.neighbors(i);
  return {n.begin(), n.end()};
}

namespace {

struct RawUser {
  std::string id;
  std::vector<std::vector<std::string>> docs;
  std::optional<int> label;
};

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

bool blank(const std::string& line) {
  return line.find_first_not_of(" \t\r") == std::string::npos;
}

std::vector<RawUser> read_raw_users(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<RawUser> users;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(where + ": malformed record: " + e.what());
    }
    if (!rec.is_object() || !rec.contains("id") || !rec["id"].is_string()) {
      throw Error(where + ": record needs a string \"id\"");
    }
    RawUser u;
    u.id = rec["id"].get<std::string>();
    if (rec.contains("docs")) {
      const auto& docs = rec["docs"];
      if (!docs.is_array()) throw Error(where + ": \"docs\" must be a list");
      for (const auto& doc : docs) {
        if (!doc.is_array()) {
          throw Error(where + ": each document must be a list of tokens");
        }
        auto& out = u.docs.emplace_back();
        for (const auto& tok : doc) {
          if (!tok.is_string()) throw Error(where + ": tokens must be strings");
          out.push_back(tok.get<std::string>());
        }
      }
    }
    if (rec.contains("label") && !rec["label"].is_null()) {
      const auto& lab = rec["label"];
      if (!lab.is_number_integer() ||
          (lab.get<int>() != 1 && lab.get<int>() != -1)) {
        throw Error(where + ": label must be 1, -1 or null");
      }
      u.label = lab.get<int>();
    }
    users.push_back(std::move(u));
  }
  return users;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& users_path,
                     const std::filesystem::path& edges_path,
                     const LoadOptions& options) {
  auto raw = read_raw_users(users_path);

  Vocabulary vocab;
  std::size_t dropped = 0;
  if (options.fixed_vocab) {
    vocab = *options.fixed_vocab;
  } else {
    std::unordered_map<std::string, std::size_t> freq;
    for (const auto& u : raw)
      for (const auto& doc : u.docs)
        for (const auto& tok : doc) ++freq[tok];
    const auto cutoff = static_cast<std::size_t>(std::max(1, options.min_token_freq));
    for (const auto& u : raw)
      for (const auto& doc : u.docs)
        for (const auto& tok : doc)
          if (freq[tok] >= cutoff) vocab.add(tok);
  }

  std::vector<UserRecord> users;
  users.reserve(raw.size());
  std::unordered_map<std::string, UserIndex> ids;
  for (auto& r : raw) {
    if (!ids.emplace(r.id, static_cast<UserIndex>(users.size())).second) {
      throw Error(users_path.string() + ": duplicate user id '" + r.id + "'");
    }
    UserRecord u{std::move(r.id), {}, r.label};
    for (const auto& doc : r.docs) {
      auto& coded = u.docs.emplace_back();
      for (const auto& tok : doc) {
        if (auto id = vocab.find(tok)) {
          coded.push_back(*id);
        } else {
          ++dropped;
        }
      }
    }
    users.push_back(std::move(u));
  }

  std::vector<Edge> edges;
  auto in = open_input(edges_path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const std::string where = edges_path.string() + ":" + std::to_string(lineno);
    std::istringstream is(line);
    std::string a, b, extra;
    if (!(is >> a >> b) || (is >> extra)) {
      throw Error(where + ": expected two user ids");
    }
    auto ia = ids.find(a);
    auto ib = ids.find(b);
    if (ia == ids.end()) throw Error(where + ": unknown user id '" + a + "'");
    if (ib == ids.end()) throw Error(where + ": unknown user id '" + b + "'");
    if (ia->second == ib->second) {
      throw Error(where + ": self-loop on user '" + a + "'");
    }
    edges.push_back({ia->second, ib->second});
  }

  Dataset data(std::move(users), std::move(vocab), std::move(edges));
  data.set_dropped_tokens(dropped);
  return data;
}

void write_users(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& u : data.users()) {
    json docs = json::array();
    for (const auto& doc : u.docs) {
      json d = json::array();
      for (TokenId t : doc) d.push_back(data.vocab().token(t));
      docs.push_back(std::move(d));
    }
    json rec = {{"id", u.id}, {"docs", std::move(docs)}};
    rec["label"] = u.label ? json(*u.label) : json(nullptr);
    out << rec.dump() << '\n';
  }
}

void write_edges(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const Edge& e : data.edges()) {
    out << data.user(e.u).id << ' ' << data.user(e.v).id << '\n';
  }
}

}  // namespace sm4
