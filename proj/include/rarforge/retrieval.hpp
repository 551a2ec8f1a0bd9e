#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "rarforge/dataset.hpp"

namespace rarforge {

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual int dimension() const = 0;
  // Deterministic per input; fixed dimension per instance.
  virtual std::vector<double> embed(const std::string& text) const = 0;
};

// Feature-hashed unigram counts, L2-normalized. Text with no tokens maps to
// the zero vector; anything else has unit norm, so dot product == cosine.
class HashedBowEmbedder final : public Embedder {
 public:
  explicit HashedBowEmbedder(int dimension = 256);
  int dimension() const override { return dimension_; }
  std::vector<double> embed(const std::string& text) const override;

 private:
  int dimension_;
};

struct RetrievalConfig {
  int top_k = 3;

  void validate() const;  // top_k >= 1
};

struct SearchResult {
  UserDocument document;
  double score = 0.0;
};

// Immutable after build; safe for concurrent searches.
class ProfileIndex {
 public:
  ProfileIndex(std::string user_id, std::vector<std::vector<double>> vectors,
               std::vector<UserDocument> documents, std::shared_ptr<const Embedder> embedder);

  const std::string& user_id() const { return user_id_; }
  std::size_t size() const { return documents_.size(); }
  const std::vector<std::vector<double>>& vectors() const { return vectors_; }
  const std::vector<UserDocument>& documents() const { return documents_; }
  const Embedder& embedder() const { return *embedder_; }

 private:
  std::string user_id_;
  std::vector<std::vector<double>> vectors_;
  std::vector<UserDocument> documents_;
  std::shared_ptr<const Embedder> embedder_;
};

ProfileIndex build_index(const UserProfile& profile, std::shared_ptr<const Embedder> embedder);

// Top-min(k, |index|) by inner product, descending; ties broken by ascending
// position in the profile. Empty query is an error (the protocol should have
// rejected it upstream).
std::vector<SearchResult> search(const ProfileIndex& index, const std::string& query, int k);

// `[1] <text>` per entry, newline-joined; the exact sentinel
// "No relevant information found." when empty.
std::string format_information(const std::vector<SearchResult>& results);

// Debug dump, one {"doc_id", "vector"} JSON object per line.
void dump_index(const ProfileIndex& index, std::ostream& out);

}  // namespace rarforge
