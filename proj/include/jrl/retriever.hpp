// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0
//
// Late-interaction retriever: one shared encoder produces per-token embedding
// bags for queries and documents; relevance is the sum over query rows of the
// best dot product against any document row.

#ifndef JRL_RETRIEVER_HPP_
#define JRL_RETRIEVER_HPP_

#include <string>
#include <vector>

#include "jrl/nn.hpp"
#include "jrl/tensor.hpp"
#include "jrl/text.hpp"

namespace jrl {

struct EncoderConfig {
  int vocab_size = 0;
  int64_t d_model = 64;
  int n_heads = 4;
  int n_blocks = 2;
  int64_t d_emb = 32;
  int64_t max_positions = 0;   // >= longest input length
  bool normalize_docs = true;  // L2-normalize document rows like query rows
  // When false, [MASK] padding rows are zeroed in the query bag: the bag
  // keeps its fixed N_q+2 rows, a zero row adds the same 0 to every
  // document's score, and only real tokens drive the ranking.
  bool mask_rows_score = true;
};

struct EmbeddingBag {
  Tensor rows;  // [r, d_emb]
  std::string owner_id;
};

class LateInteractionEncoder {
 public:
  LateInteractionEncoder() = default;
  LateInteractionEncoder(EncoderConfig cfg, Rng& rng);

  // Query rows are always L2-normalized. [MASK] padding rows stay in the bag
  // and are zeroed when mask_rows_score is off.
  Tensor encode_query(const std::vector<int>& ids) const;
  // Document rows are normalized (when configured), then punctuation rows are
  // dropped. The [CLS]/[D] rows are kept unconditionally so a bag is never
  // empty.
  Tensor encode_document(const std::vector<int>& ids, const std::vector<bool>& punct_mask) const;

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const EncoderConfig& config() const { return cfg_; }

  // Bumped whenever the optimizer touches the parameters; index staleness is
  // checked against this.
  int64_t revision() const { return revision_; }
  void bump_revision() { ++revision_; }
  void set_revision(int64_t r) { revision_ = r; }

 private:
  Tensor encode(const std::vector<int>& ids) const;  // transformer + projection, no norm

  EncoderConfig cfg_;
  Tensor tok_emb_;  // [V, d_model]
  Tensor pos_emb_;  // [max_positions, d_model]
  std::vector<TransformerBlock> blocks_;
  Linear proj_;  // [d_model, d_emb], bias-free
  std::vector<Tensor> params_;
  int64_t revision_ = 0;

  friend class Checkpoint;
};

// Sum over query rows of the max dot product against document rows.
// Differentiable: gradient flows through the argmax-selected pairs.
Tensor maxsim(const Tensor& query_bag, const Tensor& doc_bag);

// Population z-score; degenerate spread (< 1e-8) maps everything to 0.
std::vector<double> normalize_scores(const std::vector<double>& scores);

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;
};

class DocIndex {
 public:
  DocIndex() = default;

  // Encodes every corpus document without building a tape.
  void build(const LateInteractionEncoder& enc, const Vocab& vocab, const std::vector<Document>& corpus,
             int max_doc_tokens);

  int64_t size() const { return static_cast<int64_t>(entries_.size()); }
  int64_t revision() const { return revision_; }
  int64_t d_emb() const { return d_emb_; }

  // Exhaustive exact top-m, descending score, score ties broken by ascending
  // doc_id. Rejects a query against a stale index.
  std::vector<ScoredDoc> topk(const Tensor& query_bag, int m, int64_t encoder_revision) const;

  // Raw MaxSim of one stored document against a query bag.
  double score_one(const Tensor& query_bag, int64_t entry) const;
  const std::string& doc_id_at(int64_t entry) const { return ids_[static_cast<size_t>(entry)]; }
  int64_t entry_of(const std::string& doc_id) const;  // -1 when absent

  // Checkpoint plumbing.
  struct Entry {
    std::string doc_id;
    int64_t n_rows = 0;
    std::vector<float> rows;
  };
  const std::vector<Entry>& entries() const { return entries_; }
  void restore(std::vector<Entry> entries, int64_t d_emb, int64_t revision);

 private:
  std::vector<Entry> entries_;
  std::vector<std::string> ids_;
  int64_t d_emb_ = 0;
  int64_t revision_ = -1;
};

}  // namespace jrl

#endif  // JRL_RETRIEVER_HPP_
