#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace sm4 {

using TokenId = std::int32_t;
using UserIndex = std::int32_t;

struct UserRecord {
  std::string id;
  std::vector<std::vector<TokenId>> docs;
  std::optional<int> label;  // +1 or -1 when present
};

// Dense token <-> id map. Ids are assigned in first-seen order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  TokenId add(const std::string& token);
  std::optional<TokenId> find(const std::string& token) const;
  const std::string& token(TokenId id) const { return tokens_.at(id); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// Undirected friendship, always stored with u < v.
struct Edge {
  UserIndex u = 0;
  UserIndex v = 0;
  auto operator<=>(const Edge&) const = default;
};

// Immutable multi-view dataset. Besides the per-user records it keeps a flat
// index (documents, word positions, half-links) that the samplers walk.
//
// Half-link h = 2e is edge e seen from its smaller endpoint (u -> v),
// h = 2e + 1 the reverse. The partner of h is h ^ 1.
class Dataset {
 public:
  Dataset() = default;
  // Validates token ids, labels and edge endpoints; canonicalizes and
  // deduplicates edges. Throws sm4::Error on any violation.
  Dataset(std::vector<UserRecord> users, Vocabulary vocab,
          std::vector<Edge> edges);

  std::size_t num_users() const { return users_.size(); }
  std::size_t vocab_size() const { return vocab_.size(); }
  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<UserRecord>& users() const { return users_; }
  const UserRecord& user(UserIndex i) const { return users_.at(i); }
  const std::vector<Edge>& edges() const { return edges_; }
  std::optional<UserIndex> find_user(const std::string& id) const;
  std::span<const UserIndex> neighbors(UserIndex i) const;

  std::size_t num_docs() const { return doc_user_.size(); }
  std::size_t num_words() const { return tokens_.size(); }
  std::size_t num_half_links() const { return 2 * edges_.size(); }

  UserIndex doc_user(std::size_t d) const { return doc_user_[d]; }
  std::size_t doc_begin(std::size_t d) const { return doc_offsets_[d]; }
  std::size_t doc_end(std::size_t d) const { return doc_offsets_[d + 1]; }
  TokenId word(std::size_t w) const { return tokens_[w]; }
  std::size_t word_doc(std::size_t w) const { return word_doc_[w]; }

  std::size_t user_doc_begin(UserIndex i) const { return user_doc_offsets_[i]; }
  std::size_t user_doc_end(UserIndex i) const {
    return user_doc_offsets_[i + 1];
  }
  std::size_t num_user_docs(UserIndex i) const {
    return user_doc_end(i) - user_doc_begin(i);
  }
  std::span<const std::size_t> user_half_links(UserIndex i) const;

  UserIndex half_link_source(std::size_t h) const {
    const Edge& e = edges_[h / 2];
    return h % 2 == 0 ? e.u : e.v;
  }
  UserIndex half_link_target(std::size_t h) const {
    const Edge& e = edges_[h / 2];
    return h % 2 == 0 ? e.v : e.u;
  }

  std::optional<int> label(UserIndex i) const { return users_[i].label; }
  std::size_t num_labeled() const;

  // Tokens dropped while coding against a fixed vocabulary.
  std::size_t dropped_tokens() const { return dropped_tokens_; }
  void set_dropped_tokens(std::size_t n) { dropped_tokens_ = n; }

 private:
  void build_index();

  std::vector<UserRecord> users_;
  Vocabulary vocab_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, UserIndex> user_index_;

  std::vector<std::size_t> adj_offsets_;
  std::vector<UserIndex> adj_;
  std::vector<std::size_t> user_doc_offsets_;
  std::vector<UserIndex> doc_user_;
  std::vector<std::size_t> doc_offsets_;
  std::vector<TokenId> tokens_;
  std::vector<std::size_t> word_doc_;
  std::vector<std::size_t> half_offsets_;
  std::vector<std::size_t> half_links_;
  std::size_t dropped_tokens_ = 0;
};

struct LoadOptions {
  // Tokens occurring fewer times than this across the corpus are removed.
  int min_token_freq = 1;
  // When set, tokens are coded against this vocabulary instead of building
  // one; unknown tokens are dropped and counted.
  const Vocabulary* fixed_vocab = nullptr;
};

// Users file: one JSON object per line, {"id": str, "docs": [[str]], "label":
// 1 | -1 | null}. Edges file: two whitespace-separated user ids per line.
Dataset load_dataset(const std::filesystem::path& users_path,
                     const std::filesystem::path& edges_path,
                     const LoadOptions& options = {});

void write_users(const Dataset& data, const std::filesystem::path& path);
void write_edges(const Dataset& data, const std::filesystem::path& path);

// Sorted friends of user i. Throws std::out_of_range for a bad index.
std::vector<UserIndex> neighbors(const Dataset& data, UserIndex i);

}  // namespace sm4
