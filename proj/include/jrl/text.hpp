// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#ifndef JRL_TEXT_HPP_
#define JRL_TEXT_HPP_

#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

namespace jrl {

// Reserved ids, fixed in this order.
enum SpecialToken : int {
  kPad = 0,
  kCls = 1,
  kQuery = 2,
  kDoc = 3,
  kMask = 4,
  kSep = 5,
  kUnk = 6,
};
constexpr int kNumSpecialTokens = 7;

// Characters treated as standalone punctuation tokens.
bool is_punct_token(const std::string& tok);

// Whitespace + punctuation splitting: chunks split on whitespace, then the
// fixed ASCII punctuation set . , ; : ! ? ( ) " ' is peeled off both ends of
// each chunk as single-character tokens. Interior punctuation stays put.
std::vector<std::string> split_words(const std::string& text);

class Vocab {
 public:
  Vocab();

  // Adds a word if absent; returns its id. Reserved names cannot be added.
  int add(const std::string& word);
  void add_text(const std::string& text);

  int id_of(const std::string& word) const;  // kUnk when absent
  const std::string& token_of(int id) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  bool contains(const std::string& word) const { return map_.count(word) > 0; }

  std::vector<int> tokenize(const std::string& text) const;

  const std::vector<std::string>& tokens() const { return tokens_; }
  static Vocab from_tokens(const std::vector<std::string>& tokens);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> map_;
};

struct Document {
  std::string doc_id;
  std::string text;
  std::string source_tag;
};

struct QAExample {
  std::string question;
  std::vector<std::string> options;
  int gold_index = 0;
  std::optional<std::string> rationale;
  std::optional<std::set<std::string>> gold_concepts;
};

// [CLS][Q] t1..  padded with [MASK] / truncated to exactly n_q + 2 ids.
std::vector<int> build_query_ids(const Vocab& vocab, const std::string& question, int n_q);

struct DocIds {
  std::vector<int> ids;          // [CLS][D] d1..dn
  std::vector<bool> punct_mask;  // true where the token is punctuation
};
DocIds build_doc_ids(const Vocab& vocab, const Document& doc, int max_tokens = 0);

// Line-delimited JSON ingestion. Malformed lines raise std::runtime_error
// naming the 1-based line number; duplicate doc ids raise naming the id.
std::vector<Document> load_corpus(const std::string& path);
std::vector<QAExample> load_qa(const std::string& path);
void save_corpus(const std::string& path, const std::vector<Document>& docs);
void save_qa(const std::string& path, const std::vector<QAExample>& qa);

// Deterministic vocab for a data set: specials, then first occurrence order
// over corpus texts followed by QA questions/options/rationales.
Vocab build_vocab(const std::vector<Document>& corpus, const std::vector<const std::vector<QAExample>*>& qa_sets);

}  // namespace jrl

#endif  // JRL_TEXT_HPP_
