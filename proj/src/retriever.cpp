// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#include "jrl/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace jrl {

LateInteractionEncoder::LateInteractionEncoder(EncoderConfig cfg, Rng& rng) : cfg_(cfg) {
  if (cfg_.vocab_size <= 0) throw std::invalid_argument("encoder: vocab_size must be positive");
  if (cfg_.max_positions <= 0) throw std::invalid_argument("encoder: max_positions must be positive");
  tok_emb_ = Tensor::randn({cfg_.vocab_size, cfg_.d_model}, rng, 0.02f);
  tok_emb_.set_requires_grad(true).set_name("retriever.tok_emb");
  // positions get a quieter init than tokens so MaxSim starts out lexical
  pos_emb_ = Tensor::randn({cfg_.max_positions, cfg_.d_model}, rng, 0.01f);
  pos_emb_.set_requires_grad(true).set_name("retriever.pos_emb");
  for (int i = 0; i < cfg_.n_blocks; ++i)
    blocks_.emplace_back(cfg_.d_model, cfg_.n_heads, 4 * cfg_.d_model,
                         rng, "retriever.block" + std::to_string(i));
  proj_ = Linear(cfg_.d_model, cfg_.d_emb, rng, "retriever.proj", /*bias=*/false);

  params_.push_back(tok_emb_);
  params_.push_back(pos_emb_);
  for (const auto& b : blocks_) b.collect(params_);
  proj_.collect(params_);
}

Tensor LateInteractionEncoder::encode(const std::vector<int>& ids) const {
  int64_t t = static_cast<int64_t>(ids.size());
  if (t == 0) throw std::invalid_argument("encode: empty id sequence");
  if (t > cfg_.max_positions)
    throw std::invalid_argument("encode: sequence of " + std::to_string(t) + " exceeds max_positions " +
                                std::to_string(cfg_.max_positions));
  std::vector<int> pos(static_cast<size_t>(t));
  for (int64_t i = 0; i < t; ++i) pos[static_cast<size_t>(i)] = static_cast<int>(i);
  Tensor x = add(embed(tok_emb_, ids), embed(pos_emb_, pos));
  for (const auto& b : blocks_) x = b.forward(x, nullptr);
  return proj_.forward(x);
}

Tensor LateInteractionEncoder::encode_query(const std::vector<int>& ids) const {
  Tensor rows = l2_normalize_rows(encode(ids));
  if (!cfg_.mask_rows_score) {
    std::vector<float> keep(static_cast<size_t>(rows.numel()), 1.0f);
    int64_t d = rows.dim(1);
    for (size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == kMask)
        std::fill_n(keep.begin() + static_cast<int64_t>(i) * d, d, 0.0f);
    rows = mul(rows, Tensor::from(rows.shape(), std::move(keep)));
  }
  return rows;
}

Tensor LateInteractionEncoder::encode_document(const std::vector<int>& ids,
                                               const std::vector<bool>& punct_mask) const {
  if (ids.size() != punct_mask.size())
    throw std::invalid_argument("encode_document: mask length " + std::to_string(punct_mask.size()) +
                                " vs ids " + std::to_string(ids.size()));
  Tensor raw = encode(ids);
  Tensor rows = cfg_.normalize_docs ? l2_normalize_rows(raw) : raw;
  std::vector<int> keep;
  for (size_t i = 0; i < punct_mask.size(); ++i) {
    if (i < 2 || !punct_mask[i]) keep.push_back(static_cast<int>(i));  // [CLS]/[D] always kept
  }
  if (keep.size() == punct_mask.size()) return rows;
  return take_rows(rows, keep);
}

Tensor maxsim(const Tensor& query_bag, const Tensor& doc_bag) {
  if (query_bag.ndim() != 2 || doc_bag.ndim() != 2 || query_bag.dim(1) != doc_bag.dim(1))
    throw std::invalid_argument("maxsim: bags disagree, " + shape_str(query_bag.shape()) + " vs " +
                                shape_str(doc_bag.shape()));
  return reduce_sum(row_max(matmul(query_bag, transpose(doc_bag))));
}

std::vector<double> normalize_scores(const std::vector<double>& scores) {
  if (scores.size() < 2) throw std::invalid_argument("normalize_scores: need at least 2 scores");
  double mu = 0.0;
  for (double s : scores) mu += s;
  mu /= static_cast<double>(scores.size());
  double var = 0.0;
  for (double s : scores) var += (s - mu) * (s - mu);
  var /= static_cast<double>(scores.size());
  double sd = std::sqrt(var);
  std::vector<double> out(scores.size(), 0.0);
  if (sd < 1e-8) return out;
  for (size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - mu) / sd;
  return out;
}

void DocIndex::build(const LateInteractionEncoder& enc, const Vocab& vocab,
                     const std::vector<Document>& corpus, int max_doc_tokens) {
  NoGradGuard ng;
  entries_.assign(corpus.size(), Entry{});
  ids_.assign(corpus.size(), "");
  d_emb_ = enc.config().d_emb;
  parallel_for(static_cast<int64_t>(corpus.size()), [&](int64_t i) {
    const Document& d = corpus[static_cast<size_t>(i)];
    DocIds di = build_doc_ids(vocab, d, max_doc_tokens);
    Tensor bag = enc.encode_document(di.ids, di.punct_mask);
    Entry& e = entries_[static_cast<size_t>(i)];
    e.doc_id = d.doc_id;
    e.n_rows = bag.dim(0);
    e.rows.assign(bag.data().begin(), bag.data().end());
    ids_[static_cast<size_t>(i)] = d.doc_id;
  });
  revision_ = enc.revision();
}

double DocIndex::score_one(const Tensor& query_bag, int64_t entry) const {
  const Entry& e = entries_[static_cast<size_t>(entry)];
  int64_t qr = query_bag.dim(0), d = query_bag.dim(1);
  const float* q = query_bag.data().data();
  double total = 0.0;
  for (int64_t i = 0; i < qr; ++i) {
    const float* qrow = q + i * d;
    double best = -1e300;
    for (int64_t j = 0; j < e.n_rows; ++j) {
      const float* drow = e.rows.data() + j * d;
      double dot = 0.0;
      for (int64_t c = 0; c < d; ++c) dot += static_cast<double>(qrow[c]) * drow[c];
      best = std::max(best, dot);
    }
    total += best;
  }
  return total;
}

std::vector<ScoredDoc> DocIndex::topk(const Tensor& query_bag, int m, int64_t encoder_revision) const {
  if (revision_ != encoder_revision)
    throw std::runtime_error("DocIndex: stale index (built at revision " + std::to_string(revision_) +
                             ", encoder at " + std::to_string(encoder_revision) + ")");
  if (m > size())
    throw std::invalid_argument("topk: m=" + std::to_string(m) + " exceeds corpus size " +
                                std::to_string(size()));
  if (query_bag.dim(1) != d_emb_)
    throw std::invalid_argument("topk: query d_emb " + std::to_string(query_bag.dim(1)) + " vs index " +
                                std::to_string(d_emb_));
  std::vector<double> scores(entries_.size());
  parallel_for(size(), [&](int64_t i) { scores[static_cast<size_t>(i)] = score_one(query_bag, i); });
  std::vector<int64_t> order(entries_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
  auto cmp = [&](int64_t a, int64_t b) {
    if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)])
      return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
    return ids_[static_cast<size_t>(a)] < ids_[static_cast<size_t>(b)];
  };
  std::partial_sort(order.begin(), order.begin() + m, order.end(), cmp);
  std::vector<ScoredDoc> out;
  out.reserve(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i)
    out.push_back({ids_[static_cast<size_t>(order[static_cast<size_t>(i)])],
                   scores[static_cast<size_t>(order[static_cast<size_t>(i)])]});
  return out;
}

int64_t DocIndex::entry_of(const std::string& doc_id) const {
  for (size_t i = 0; i < ids_.size(); ++i)
    if (ids_[i] == doc_id) return static_cast<int64_t>(i);
  return -1;
}

void DocIndex::restore(std::vector<Entry> entries, int64_t d_emb, int64_t revision) {
  entries_ = std::move(entries);
  ids_.clear();
  for (const auto& e : entries_) ids_.push_back(e.doc_id);
  d_emb_ = d_emb;
  revision_ = revision;
}

}  // namespace jrl
