// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#include "jrl/reader.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace jrl {

namespace {

constexpr float kMaskedOut = -1e9f;

std::shared_ptr<std::vector<float>> build_mask(int64_t t, int64_t valid_len,
                                               const std::vector<int64_t>& group) {
  auto m = std::make_shared<std::vector<float>>(static_cast<size_t>(t * t), kMaskedOut);
  for (int64_t p = 0; p < t; ++p) {
    float* row = m->data() + p * t;
    for (int64_t q = 0; q <= p; ++q)
      if (group[static_cast<size_t>(q)] == group[static_cast<size_t>(p)] && q < valid_len) row[q] = 0.0f;
    row[p] = 0.0f;  // self-attention always allowed, keeps pad rows finite
  }
  return m;
}

}  // namespace

AttentionMasks make_attention_masks(int64_t t, int64_t valid_len, AttentionMode mode, int64_t w,
                                    int n_heads) {
  if (mode == AttentionMode::kS2 && w < 2)
    throw std::invalid_argument("s2 attention: group size " + std::to_string(w) + " < 2");
  AttentionMasks masks;
  masks.t = t;
  std::vector<int64_t> group(static_cast<size_t>(t), 0);
  if (mode == AttentionMode::kFull || w >= t) {
    auto full = build_mask(t, valid_len, group);  // single span: plain causal
    masks.per_head.assign(static_cast<size_t>(n_heads), full);
    return masks;
  }
  for (int64_t p = 0; p < t; ++p) group[static_cast<size_t>(p)] = p / w;
  auto aligned = build_mask(t, valid_len, group);
  int64_t s = w / 2;
  for (int64_t p = 0; p < t; ++p) group[static_cast<size_t>(p)] = p < s ? 0 : (p - s) / w + 1;
  auto shifted = build_mask(t, valid_len, group);
  masks.per_head.resize(static_cast<size_t>(n_heads));
  for (int h = 0; h < n_heads; ++h)
    masks.per_head[static_cast<size_t>(h)] = (h % 2 == 0) ? aligned : shifted;
  return masks;
}

ReaderModel::ReaderModel(ReaderConfig cfg, Rng& rng) : cfg_(cfg) {
  if (cfg_.vocab_size <= 0) throw std::invalid_argument("reader: vocab_size must be positive");
  if (cfg_.attention == AttentionMode::kS2 && cfg_.group_size < 2)
    throw std::invalid_argument("reader: s2 group size " + std::to_string(cfg_.group_size) + " < 2");
  tok_emb_ = Tensor::randn({cfg_.vocab_size, cfg_.d_model}, rng, 0.02f);
  tok_emb_.set_requires_grad(true).set_name("reader.tok_emb");
  pos_emb_ = Tensor::randn({cfg_.max_seq_len, cfg_.d_model}, rng, 0.02f);
  pos_emb_.set_requires_grad(true).set_name("reader.pos_emb");
  for (int i = 0; i < cfg_.n_blocks; ++i)
    blocks_.emplace_back(cfg_.d_model, cfg_.n_heads, 4 * cfg_.d_model, rng,
                         "reader.block" + std::to_string(i));
  lnf_g_ = layer_norm_params(cfg_.d_model, 1.0f).set_requires_grad(true).set_name("reader.lnf.g");
  lnf_b_ = Tensor::zeros({cfg_.d_model}).set_requires_grad(true).set_name("reader.lnf.b");
  head_ = Linear(cfg_.d_model, cfg_.vocab_size, rng, "reader.head");

  params_.push_back(tok_emb_);
  params_.push_back(pos_emb_);
  for (const auto& b : blocks_) b.collect(params_);
  params_.push_back(lnf_g_);
  params_.push_back(lnf_b_);
  head_.collect(params_);
}

Tensor ReaderModel::hidden_states(const std::vector<int>& ids) const {
  int64_t valid = static_cast<int64_t>(ids.size());
  if (valid == 0) throw std::invalid_argument("reader: empty sequence");
  std::vector<int> padded = ids;
  if (cfg_.attention == AttentionMode::kS2 && valid > cfg_.group_size) {
    int64_t t = ((valid + cfg_.group_size - 1) / cfg_.group_size) * cfg_.group_size;
    padded.resize(static_cast<size_t>(t), kPad);
  }
  int64_t t = static_cast<int64_t>(padded.size());
  if (t > cfg_.max_seq_len)
    throw std::invalid_argument("reader: sequence of " + std::to_string(t) + " exceeds max_seq_len " +
                                std::to_string(cfg_.max_seq_len));
  AttentionMasks masks = make_attention_masks(t, valid, cfg_.attention, cfg_.group_size, cfg_.n_heads);
  std::vector<int> pos(static_cast<size_t>(t));
  for (int64_t i = 0; i < t; ++i) pos[static_cast<size_t>(i)] = static_cast<int>(i);
  Tensor x = add(embed(tok_emb_, padded), embed(pos_emb_, pos));
  for (const auto& b : blocks_) x = b.forward(x, &masks);
  return layer_norm(x, lnf_g_, lnf_b_);
}

Tensor ReaderModel::logits_for_rows(const Tensor& hidden, const std::vector<int>& rows) const {
  return head_.forward(take_rows(hidden, rows));
}

PromptAssembly assemble_prompt_for_option(const Vocab& vocab, const std::vector<std::string>& doc_texts,
                                          const QAExample& q, int answer_option, bool include_rationale,
                                          int64_t max_seq_len) {
  if (answer_option < 0 || answer_option >= static_cast<int>(q.options.size()))
    throw std::invalid_argument("assemble_prompt: option " + std::to_string(answer_option) +
                                " out of range");
  std::vector<int> fixed;  // question + option listing, never truncated
  auto qt = vocab.tokenize(q.question);
  fixed.insert(fixed.end(), qt.begin(), qt.end());
  fixed.push_back(kSep);
  for (size_t o = 0; o < q.options.size(); ++o) {
    std::string label(1, static_cast<char>('a' + o));
    fixed.push_back(vocab.id_of(label));
    fixed.push_back(vocab.id_of(")"));
    auto ot = vocab.tokenize(q.options[o]);
    fixed.insert(fixed.end(), ot.begin(), ot.end());
  }
  fixed.push_back(kSep);

  std::vector<int> answer = vocab.tokenize(q.options[static_cast<size_t>(answer_option)]);
  if (include_rationale && q.rationale) {
    auto rt = vocab.tokenize(*q.rationale);
    answer.insert(answer.end(), rt.begin(), rt.end());
  }
  if (answer.empty()) throw std::invalid_argument("assemble_prompt: empty answer region");

  int64_t fixed_len = 1 + static_cast<int64_t>(fixed.size()) + static_cast<int64_t>(answer.size());
  if (fixed_len > max_seq_len)
    throw std::invalid_argument("assemble_prompt: question and options need " + std::to_string(fixed_len) +
                                " tokens, max_seq_len is " + std::to_string(max_seq_len));

  PromptAssembly out;
  out.ids.push_back(kCls);
  int64_t budget = max_seq_len - fixed_len;  // room for documents (incl. their [SEP]s)
  for (const auto& text : doc_texts) {
    if (budget < 2) {  // no room for even one token plus separator
      out.docs_truncated = true;
      break;
    }
    auto dt = vocab.tokenize(text);
    int64_t take = std::min<int64_t>(static_cast<int64_t>(dt.size()), budget - 1);
    if (take < static_cast<int64_t>(dt.size())) out.docs_truncated = true;
    out.ids.insert(out.ids.end(), dt.begin(), dt.begin() + take);
    out.ids.push_back(kSep);
    budget -= take + 1;
    ++out.n_docs_included;
  }
  // each included doc already ends with its [SEP]; the question follows directly
  out.ids.insert(out.ids.end(), fixed.begin(), fixed.end());
  int start = static_cast<int>(out.ids.size());
  out.ids.insert(out.ids.end(), answer.begin(), answer.end());
  for (size_t i = 0; i < answer.size(); ++i) out.answer_positions.push_back(start + static_cast<int>(i));
  return out;
}

PromptAssembly assemble_prompt(const Vocab& vocab, const std::vector<std::string>& doc_texts,
                               const QAExample& q, int64_t max_seq_len) {
  return assemble_prompt_for_option(vocab, doc_texts, q, q.gold_index, /*include_rationale=*/true,
                                    max_seq_len);
}

Tensor answer_loss(const ReaderModel& model, const PromptAssembly& prompt) {
  if (prompt.answer_positions.empty()) throw std::invalid_argument("answer_loss: empty answer region");
  Tensor hidden = model.hidden_states(prompt.ids);
  std::vector<int> rows;
  std::vector<int> targets;
  for (int p : prompt.answer_positions) {
    if (p <= 0 || p >= static_cast<int>(prompt.ids.size()))
      throw std::invalid_argument("answer_loss: answer position " + std::to_string(p) + " out of range");
    rows.push_back(p - 1);  // logits at p-1 predict token at p
    targets.push_back(prompt.ids[static_cast<size_t>(p)]);
  }
  Tensor logits = model.logits_for_rows(hidden, rows);
  return cross_entropy_rows(logits, targets);
}

std::vector<double> option_losses(const ReaderModel& model, const Vocab& vocab,
                                  const std::vector<std::string>& doc_texts, const QAExample& q) {
  NoGradGuard ng;
  std::vector<double> losses(q.options.size(), 0.0);
  bool all_single = true;
  std::vector<std::vector<int>> opt_tokens(q.options.size());
  for (size_t o = 0; o < q.options.size(); ++o) {
    opt_tokens[o] = vocab.tokenize(q.options[o]);
    if (opt_tokens[o].size() != 1) all_single = false;
  }
  if (all_single) {
    // Shared-prefix evaluation: every option continuation is one token, so a
    // single forward over the prefix scores them all from the same row.
    PromptAssembly base =
        assemble_prompt_for_option(vocab, doc_texts, q, 0, /*include_rationale=*/false,
                                   model.config().max_seq_len);
    std::vector<int> prefix(base.ids.begin(), base.ids.end() - 1);
    Tensor hidden = model.hidden_states(prefix);
    Tensor logits = model.logits_for_rows(hidden, {static_cast<int>(prefix.size()) - 1});
    for (size_t o = 0; o < q.options.size(); ++o) {
      Tensor l = cross_entropy_rows(logits, {opt_tokens[o][0]});
      losses[o] = l.item();
    }
    return losses;
  }
  for (size_t o = 0; o < q.options.size(); ++o) {
    PromptAssembly pa = assemble_prompt_for_option(vocab, doc_texts, q, static_cast<int>(o),
                                                   /*include_rationale=*/false, model.config().max_seq_len);
    losses[o] = answer_loss(model, pa).item();
  }
  return losses;
}

int predict_option(const ReaderModel& model, const Vocab& vocab, const std::vector<std::string>& doc_texts,
                   const QAExample& q) {
  std::vector<double> losses = option_losses(model, vocab, doc_texts, q);
  int best = 0;
  for (size_t o = 1; o < losses.size(); ++o)
    if (losses[o] < losses[best]) best = static_cast<int>(o);
  return best;
}

}  // namespace jrl
