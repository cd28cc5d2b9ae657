// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0
//
// Decoder-only reader. Attention is either full causal or span-restricted
// (S2): half the heads attend within aligned spans [0,w), [w,2w), ... and the
// other half within spans shifted by w/2, causal within each span. Spans are
// a function of position only, so trailing [PAD] never changes a real row.

#ifndef JRL_READER_HPP_
#define JRL_READER_HPP_

#include <string>
#include <vector>

#include "jrl/nn.hpp"
#include "jrl/tensor.hpp"
#include "jrl/text.hpp"

namespace jrl {

enum class AttentionMode { kFull, kS2 };

struct ReaderConfig {
  int vocab_size = 0;
  int64_t d_model = 128;
  int n_heads = 4;
  int n_blocks = 4;
  int64_t max_seq_len = 512;
  AttentionMode attention = AttentionMode::kS2;
  int64_t group_size = 128;  // w
};

// Masks for a padded sequence of length t with real tokens in [0, valid_len).
// Even heads use aligned spans, odd heads shifted spans; w >= t degenerates
// to full causal attention for every head.
AttentionMasks make_attention_masks(int64_t t, int64_t valid_len, AttentionMode mode, int64_t w,
                                    int n_heads);

class ReaderModel {
 public:
  ReaderModel() = default;
  ReaderModel(ReaderConfig cfg, Rng& rng);

  // Final-layer-norm hidden states over the (internally padded) sequence.
  Tensor hidden_states(const std::vector<int>& ids) const;
  // Vocabulary logits for the selected hidden rows only.
  Tensor logits_for_rows(const Tensor& hidden, const std::vector<int>& rows) const;

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  const ReaderConfig& config() const { return cfg_; }
  Linear& head() { return head_; }

 private:
  ReaderConfig cfg_;
  Tensor tok_emb_;
  Tensor pos_emb_;
  std::vector<TransformerBlock> blocks_;
  Tensor lnf_g_, lnf_b_;
  Linear head_;
  std::vector<Tensor> params_;

  friend class Checkpoint;
};

struct PromptAssembly {
  std::vector<int> ids;
  std::vector<int> answer_positions;  // positions whose tokens the loss predicts
  int n_docs_included = 0;
  bool docs_truncated = false;
};

// Layout: [CLS] doc1 [SEP] ... dock [SEP] question [SEP] a ) opt1 b ) opt2 ...
// [SEP] answer-tokens. Documents are truncated tail-first to fit
// max_seq_len; the question and option listing are never truncated (error if
// they alone do not fit). answer_option selects which option text forms the
// answer region; rationale tokens are appended to the region when requested
// and present.
PromptAssembly assemble_prompt_for_option(const Vocab& vocab, const std::vector<std::string>& doc_texts,
                                          const QAExample& q, int answer_option, bool include_rationale,
                                          int64_t max_seq_len);

// Training form: answer region = gold option (+ rationale when present).
PromptAssembly assemble_prompt(const Vocab& vocab, const std::vector<std::string>& doc_texts,
                               const QAExample& q, int64_t max_seq_len);

// Mean next-token cross-entropy over the answer region only.
Tensor answer_loss(const ReaderModel& model, const PromptAssembly& prompt);

// Argmax over options of the length-normalized option log-likelihood,
// ties to the lowest index. Deterministic, no tape.
int predict_option(const ReaderModel& model, const Vocab& vocab, const std::vector<std::string>& doc_texts,
                   const QAExample& q);

// Per-option mean negative log-likelihoods (exposed for tests).
std::vector<double> option_losses(const ReaderModel& model, const Vocab& vocab,
                                  const std::vector<std::string>& doc_texts, const QAExample& q);

}  // namespace jrl

#endif  // JRL_READER_HPP_
