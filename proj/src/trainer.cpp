// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#include "jrl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "jrl/checkpoint.hpp"

namespace jrl {

std::string regime_name(Regime r) {
  switch (r) {
    case Regime::kJoint: return "joint";
    case Regime::kSeparate: return "separate";
    case Regime::kFrozenRetriever: return "frozen_retriever";
    case Regime::kNoRetrieval: return "no_retrieval";
  }
  return "unknown";
}

Regime parse_regime(const std::string& name) {
  if (name == "joint") return Regime::kJoint;
  if (name == "separate") return Regime::kSeparate;
  if (name == "frozen_retriever") return Regime::kFrozenRetriever;
  if (name == "no_retrieval") return Regime::kNoRetrieval;
  throw std::invalid_argument("unknown regime '" + name + "'");
}

void TrainConfig::validate() const {
  if (k > m) throw std::invalid_argument("config: k=" + std::to_string(k) + " exceeds m=" + std::to_string(m));
  if (m < 2) throw std::invalid_argument("config: m must be >= 2");
  if (k < 0) throw std::invalid_argument("config: k must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
  if (reader_lr <= 0 || retriever_lr <= 0) throw std::invalid_argument("config: learning rates must be positive");
  if (!(clamp_eps > 0 && clamp_eps < 0.5))
    throw std::invalid_argument("config: clamp_eps must lie in (0, 0.5)");
  if (pair_delta < 0) throw std::invalid_argument("config: pair_delta must be >= 0");
  if (tau <= 0) throw std::invalid_argument("config: tau must be positive");
  if (warmup_fraction < 0 || warmup_fraction > 1)
    throw std::invalid_argument("config: warmup_fraction must lie in [0,1]");
  if (!(lr_floor_fraction > 0 && lr_floor_fraction <= 1))
    throw std::invalid_argument("config: lr_floor_fraction must lie in (0,1]");
  if (refresh_every < 0) throw std::invalid_argument("config: refresh_every must be >= 0");
  if (n_q < 1) throw std::invalid_argument("config: n_q must be >= 1");
  if (n_doc_max < 1) throw std::invalid_argument("config: n_doc_max must be >= 1");
  if (retriever_warmup_steps < 0) throw std::invalid_argument("config: retriever_warmup_steps must be >= 0");
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["regime"] = regime_name(cfg.regime);
  j["m"] = cfg.m;
  j["k"] = cfg.k;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["reader_lr"] = cfg.reader_lr;
  j["retriever_lr"] = cfg.retriever_lr;
  j["beta1"] = cfg.beta1;
  j["beta2"] = cfg.beta2;
  j["eps"] = cfg.eps;
  j["weight_decay"] = cfg.weight_decay;
  j["warmup_fraction"] = cfg.warmup_fraction;
  j["lr_floor_fraction"] = cfg.lr_floor_fraction;
  j["tau"] = cfg.tau;
  j["clamp_eps"] = cfg.clamp_eps;
  j["pair_delta"] = cfg.pair_delta;
  j["refresh_every"] = cfg.refresh_every;
  j["seed"] = cfg.seed;
  j["n_q"] = cfg.n_q;
  j["n_doc_max"] = cfg.n_doc_max;
  j["retriever_warmup_steps"] = cfg.retriever_warmup_steps;
  j["retriever_warmup_lr"] = cfg.retriever_warmup_lr;
  j["retriever_warmup_batch"] = cfg.retriever_warmup_batch;
  j["reader"] = {{"d_model", cfg.reader.d_model},
                 {"n_heads", cfg.reader.n_heads},
                 {"n_blocks", cfg.reader.n_blocks},
                 {"max_seq_len", cfg.reader.max_seq_len},
                 {"attention", cfg.reader.attention == AttentionMode::kS2 ? "s2attn" : "full"},
                 {"group_size", cfg.reader.group_size},
                 {"vocab_size", cfg.reader.vocab_size}};
  j["retriever"] = {{"d_model", cfg.retriever.d_model},
                    {"n_heads", cfg.retriever.n_heads},
                    {"n_blocks", cfg.retriever.n_blocks},
                    {"d_emb", cfg.retriever.d_emb},
                    {"normalize_docs", cfg.retriever.normalize_docs},
                    {"mask_rows_score", cfg.retriever.mask_rows_score},
                    {"vocab_size", cfg.retriever.vocab_size},
                    {"max_positions", cfg.retriever.max_positions}};
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  if (j.contains("regime")) cfg.regime = parse_regime(j["regime"].get<std::string>());
  auto opt = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
  };
  opt("m", cfg.m);
  opt("k", cfg.k);
  opt("epochs", cfg.epochs);
  opt("batch_size", cfg.batch_size);
  opt("reader_lr", cfg.reader_lr);
  opt("retriever_lr", cfg.retriever_lr);
  opt("beta1", cfg.beta1);
  opt("beta2", cfg.beta2);
  opt("eps", cfg.eps);
  opt("weight_decay", cfg.weight_decay);
  opt("warmup_fraction", cfg.warmup_fraction);
  opt("lr_floor_fraction", cfg.lr_floor_fraction);
  opt("tau", cfg.tau);
  opt("clamp_eps", cfg.clamp_eps);
  opt("pair_delta", cfg.pair_delta);
  opt("refresh_every", cfg.refresh_every);
  opt("seed", cfg.seed);
  opt("n_q", cfg.n_q);
  opt("n_doc_max", cfg.n_doc_max);
  opt("retriever_warmup_steps", cfg.retriever_warmup_steps);
  opt("retriever_warmup_lr", cfg.retriever_warmup_lr);
  opt("retriever_warmup_batch", cfg.retriever_warmup_batch);
  if (j.contains("reader")) {
    const auto& r = j["reader"];
    if (r.contains("d_model")) cfg.reader.d_model = r["d_model"].get<int64_t>();
    if (r.contains("n_heads")) cfg.reader.n_heads = r["n_heads"].get<int>();
    if (r.contains("n_blocks")) cfg.reader.n_blocks = r["n_blocks"].get<int>();
    if (r.contains("max_seq_len")) cfg.reader.max_seq_len = r["max_seq_len"].get<int64_t>();
    if (r.contains("group_size")) cfg.reader.group_size = r["group_size"].get<int64_t>();
    if (r.contains("vocab_size")) cfg.reader.vocab_size = r["vocab_size"].get<int>();
    if (r.contains("attention"))
      cfg.reader.attention =
          r["attention"].get<std::string>() == "full" ? AttentionMode::kFull : AttentionMode::kS2;
  }
  if (j.contains("retriever")) {
    const auto& r = j["retriever"];
    if (r.contains("d_model")) cfg.retriever.d_model = r["d_model"].get<int64_t>();
    if (r.contains("n_heads")) cfg.retriever.n_heads = r["n_heads"].get<int>();
    if (r.contains("n_blocks")) cfg.retriever.n_blocks = r["n_blocks"].get<int>();
    if (r.contains("d_emb")) cfg.retriever.d_emb = r["d_emb"].get<int64_t>();
    if (r.contains("normalize_docs")) cfg.retriever.normalize_docs = r["normalize_docs"].get<bool>();
    if (r.contains("mask_rows_score")) cfg.retriever.mask_rows_score = r["mask_rows_score"].get<bool>();
    if (r.contains("vocab_size")) cfg.retriever.vocab_size = r["vocab_size"].get<int>();
    if (r.contains("max_positions")) cfg.retriever.max_positions = r["max_positions"].get<int64_t>();
  }
  return cfg;
}

std::vector<int> sample_docs(const CandidateSet& cands, int k, double tau, Rng& rng) {
  int m = static_cast<int>(cands.entries.size());
  if (k > m)
    throw std::invalid_argument("sample_docs: k=" + std::to_string(k) + " exceeds m=" + std::to_string(m));
  if (tau <= 0) throw std::invalid_argument("sample_docs: tau must be positive");
  // softmax(S-hat / tau), numerically stable
  double mx = -1e300;
  for (const auto& c : cands.entries) mx = std::max(mx, c.norm_score / tau);
  std::vector<double> w(static_cast<size_t>(m));
  double total = 0.0;
  for (int i = 0; i < m; ++i) {
    w[static_cast<size_t>(i)] = std::exp(cands.entries[static_cast<size_t>(i)].norm_score / tau - mx);
    total += w[static_cast<size_t>(i)];
  }
  std::vector<int> picked;
  picked.reserve(static_cast<size_t>(k));
  for (int draw = 0; draw < k; ++draw) {
    double u = rng.uniform() * total;
    double run = 0.0;
    int sel = -1;
    for (int i = 0; i < m; ++i) {
      if (w[static_cast<size_t>(i)] == 0.0) continue;
      run += w[static_cast<size_t>(i)];
      if (u < run) {
        sel = i;
        break;
      }
    }
    if (sel < 0) {  // numeric edge: take the last remaining
      for (int i = m - 1; i >= 0; --i)
        if (w[static_cast<size_t>(i)] > 0.0) {
          sel = i;
          break;
        }
    }
    picked.push_back(sel);
    total -= w[static_cast<size_t>(sel)];
    w[static_cast<size_t>(sel)] = 0.0;
  }
  std::sort(picked.begin(), picked.end());  // candidate order == descending raw score
  return picked;
}

std::vector<double> probe_doc_losses(const ReaderModel& model, const Vocab& vocab, const QAExample& q,
                                     const std::vector<std::string>& doc_texts, int64_t max_seq_len) {
  NoGradGuard ng;
  std::vector<double> out;
  out.reserve(doc_texts.size());
  for (const auto& text : doc_texts) {
    PromptAssembly pa = assemble_prompt(vocab, {text}, q, max_seq_len);
    out.push_back(answer_loss(model, pa).item());
  }
  return out;
}

Tensor rank_loss(const std::vector<RankPairInput>& pairs, int n_queries, double clamp_eps,
                 double pair_delta, std::vector<RankPairDiag>* diagnostics) {
  if (n_queries <= 0) throw std::invalid_argument("rank_loss: n_queries must be positive");
  if (diagnostics) diagnostics->clear();
  Tensor acc;
  bool any = false;
  float lo = static_cast<float>(clamp_eps);
  float hi = static_cast<float>(2.0 - clamp_eps);
  for (const auto& p : pairs) {
    RankPairDiag d;
    d.query_index = p.query_index;
    d.j = p.j;
    d.k = p.k;
    d.l_i = p.l_i;
    d.active = std::abs(p.l_i) > pair_delta;
    if (!d.active) {
      if (diagnostics) diagnostics->push_back(d);
      continue;
    }
    Tensor c = sub(sigmoid(p.s_hat_k), sigmoid(p.s_hat_j));
    Tensor arg = p.l_i > 0 ? c : sub(Tensor::scalar(1.0f), c);
    Tensor f = log(clamp(arg, lo, hi));
    d.c_i = c.item();
    d.f_i = f.item();
    if (!std::isfinite(d.f_i))
      throw std::runtime_error("rank_loss: non-finite F for pair (query " + std::to_string(p.query_index) +
                               ", j=" + std::to_string(p.j) + ", k=" + std::to_string(p.k) +
                               ", L_i=" + std::to_string(p.l_i) + ", C_i=" + std::to_string(d.c_i) + ")");
    if (diagnostics) diagnostics->push_back(d);
    acc = any ? add(acc, f) : f;
    any = true;
  }
  if (!any) return Tensor::scalar(0.0f);
  return scale(acc, static_cast<float>(-1.0 / static_cast<double>(n_queries)));
}

Trainer::Trainer(TrainConfig cfg, std::vector<Document> corpus, std::vector<QAExample> train_qa,
                 std::vector<QAExample> dev_qa, PlantedMap train_planted, PlantedMap dev_planted)
    : cfg_(std::move(cfg)),
      corpus_(std::move(corpus)),
      train_qa_(std::move(train_qa)),
      dev_qa_(std::move(dev_qa)),
      train_planted_(std::move(train_planted)),
      dev_planted_(std::move(dev_planted)) {
  cfg_.validate();
  if (uses_retrieval() && static_cast<int64_t>(corpus_.size()) < cfg_.m)
    throw std::invalid_argument("trainer: corpus of " + std::to_string(corpus_.size()) +
                                " docs is smaller than m=" + std::to_string(cfg_.m));

  vocab_ = build_vocab(corpus_, {&train_qa_, &dev_qa_});
  for (char c = 'a'; c <= 'z'; ++c) vocab_.add(std::string(1, c));  // option labels
  vocab_.add(")");

  cfg_.reader.vocab_size = vocab_.size();
  cfg_.retriever.vocab_size = vocab_.size();
  cfg_.retriever.max_positions = std::max<int64_t>(cfg_.n_q + 2, cfg_.n_doc_max + 2);

  Rng reader_rng = Rng::stream(cfg_.seed, "init/reader");
  Rng retr_rng = Rng::stream(cfg_.seed, "init/retriever");
  reader_ = ReaderModel(cfg_.reader, reader_rng);
  encoder_ = LateInteractionEncoder(cfg_.retriever, retr_rng);
  reader_opt_ = AdamW("reader", reader_.parameters());
  retriever_opt_ = AdamW("retriever", encoder_.parameters());

  int64_t steps_per_epoch =
      train_qa_.empty() ? 0
                        : (static_cast<int64_t>(train_qa_.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
  total_steps_ = steps_per_epoch * cfg_.epochs;
  int64_t horizon = std::max<int64_t>(total_steps_, 1);
  reader_sched_ = {cfg_.reader_lr, cfg_.warmup_fraction, cfg_.lr_floor_fraction, horizon};
  retriever_sched_ = {cfg_.retriever_lr, cfg_.warmup_fraction, cfg_.lr_floor_fraction, horizon};

  rng_sample_ = Rng::stream(cfg_.seed, "train/sample");
  rng_shuffle_ = Rng::stream(cfg_.seed, "train/shuffle");
  rng_warmup_ = Rng::stream(cfg_.seed, "train/warmup");
}

bool Trainer::reader_phase(int epoch) const {
  switch (cfg_.regime) {
    case Regime::kJoint:
    case Regime::kFrozenRetriever:
    case Regime::kNoRetrieval:
      return true;
    case Regime::kSeparate:
      return epoch % 2 == 0;
  }
  return true;
}

bool Trainer::retriever_phase(int epoch) const {
  switch (cfg_.regime) {
    case Regime::kJoint:
      return true;
    case Regime::kSeparate:
      return epoch % 2 == 1;
    case Regime::kFrozenRetriever:
    case Regime::kNoRetrieval:
      return false;
  }
  return false;
}

void Trainer::warmup_retriever() {
  if (warmed_up_) return;
  warmed_up_ = true;
  if (!uses_retrieval() || !retriever_trainable()) return;
  if (cfg_.retriever_warmup_steps <= 0) return;
  int batch = std::min<int>(cfg_.retriever_warmup_batch, static_cast<int>(corpus_.size()));
  if (batch < 2) return;
  // Document frequency per word. Pseudo-queries draw only words that occur in
  // at least two documents: a word unique to its document would identify it
  // outright and nothing transferable would be learned, whereas repeated
  // words force the encoder to rank by keyword combinations, which is the
  // shape of a real query.
  std::unordered_map<std::string, int> df;
  for (const auto& doc : corpus_) {
    std::unordered_set<std::string> uniq;
    for (const auto& w : split_words(doc.text))
      if (!is_punct_token(w)) uniq.insert(w);
    for (const auto& w : uniq) ++df[w];
  }
  AdamW warm_opt("retriever_warmup", encoder_.parameters());
  AdamWParams hp{cfg_.retriever_warmup_lr, cfg_.beta1, cfg_.beta2, cfg_.eps, cfg_.weight_decay};
  for (int step = 0; step < cfg_.retriever_warmup_steps; ++step) {
    std::unordered_set<int64_t> chosen;
    std::vector<int64_t> docs;
    while (static_cast<int>(docs.size()) < batch) {
      int64_t d = static_cast<int64_t>(rng_warmup_.uniform_int(corpus_.size()));
      if (chosen.insert(d).second) docs.push_back(d);
    }
    std::vector<Tensor> doc_bags, query_bags;
    for (int64_t d : docs) {
      const Document& doc = corpus_[static_cast<size_t>(d)];
      DocIds di = build_doc_ids(vocab_, doc, cfg_.n_doc_max);
      doc_bags.push_back(encoder_.encode_document(di.ids, di.punct_mask));
      std::vector<std::string> keep;
      for (const auto& w : split_words(doc.text))
        if (!is_punct_token(w) && df[w] >= 2) keep.push_back(w);
      if (keep.empty())
        for (const auto& w : split_words(doc.text))
          if (!is_punct_token(w)) keep.push_back(w);
      int take = 2 + static_cast<int>(rng_warmup_.uniform_int(3));  // 2..4 words
      std::string pseudo;
      std::unordered_set<std::string> used;
      for (int w = 0; w < take && !keep.empty(); ++w) {
        const std::string& pick = keep[rng_warmup_.uniform_int(keep.size())];
        if (!used.insert(pick).second) continue;
        if (!pseudo.empty()) pseudo += " ";
        pseudo += pick;
      }
      if (pseudo.empty()) pseudo = keep.empty() ? doc.text : keep[0];
      query_bags.push_back(encoder_.encode_query(build_query_ids(vocab_, pseudo, cfg_.n_q)));
    }
    std::vector<Tensor> losses;
    for (int i = 0; i < batch; ++i) {
      std::vector<Tensor> row;
      for (int j = 0; j < batch; ++j) row.push_back(maxsim(query_bags[static_cast<size_t>(i)],
                                                           doc_bags[static_cast<size_t>(j)]));
      losses.push_back(cross_entropy(concat_scalars(row), i));
    }
    Tensor loss = losses[0];
    for (size_t i = 1; i < losses.size(); ++i) loss = add(loss, losses[i]);
    loss = scale(loss, 1.0f / static_cast<float>(batch));
    if (!std::isfinite(loss.item()))
      throw std::runtime_error("warmup: non-finite loss at warmup step " + std::to_string(step));
    for (auto& p : encoder_.parameters()) p.zero_grad();
    backward(loss);
    warm_opt.step(encoder_.parameters(), hp);
    encoder_.bump_revision();
  }
}

void Trainer::ensure_index_fresh() {
  if (!uses_retrieval()) return;
  if (index_.revision() == encoder_.revision()) return;
  index_.build(encoder_, vocab_, corpus_, cfg_.n_doc_max);
  bag_cache_.clear();
  bag_cache_revision_ = index_.revision();
}

void Trainer::maybe_refresh() {
  if (!uses_retrieval()) return;
  if (index_.revision() < 0) {
    ensure_index_fresh();
    return;
  }
  if (!retriever_trainable() || cfg_.refresh_every <= 0) return;
  if (step_ % cfg_.refresh_every == 0) ensure_index_fresh();
}

CandidateSet& Trainer::candidates_for(int query_index) {
  if (index_.revision() < 0) ensure_index_fresh();
  CandidateSet& cs = cand_cache_[query_index];
  if (cs.index_revision == index_.revision()) return cs;
  const QAExample& ex = train_qa_[static_cast<size_t>(query_index)];
  NoGradGuard ng;
  Tensor q_bag = encoder_.encode_query(build_query_ids(vocab_, ex.question, cfg_.n_q));
  std::vector<ScoredDoc> top = index_.topk(q_bag, cfg_.m, index_.revision());
  cs.query_index = query_index;
  cs.entries.clear();
  std::vector<double> raw;
  raw.reserve(top.size());
  for (const auto& sd : top) {
    Candidate c;
    c.doc_id = sd.doc_id;
    c.corpus_pos = index_.entry_of(sd.doc_id);
    c.raw_score = sd.score;
    cs.entries.push_back(std::move(c));
    raw.push_back(sd.score);
  }
  std::vector<double> norm = normalize_scores(raw);
  for (size_t i = 0; i < norm.size(); ++i) cs.entries[i].norm_score = norm[i];
  cs.extracted_at_step = step_;
  cs.index_revision = index_.revision();
  return cs;
}

Tensor Trainer::index_bag_tensor(int64_t corpus_pos) {
  if (bag_cache_revision_ != index_.revision()) {
    bag_cache_.clear();
    bag_cache_revision_ = index_.revision();
  }
  if (bag_cache_.empty()) bag_cache_.resize(corpus_.size());
  Tensor& slot = bag_cache_[static_cast<size_t>(corpus_pos)];
  if (!slot.defined()) {
    const auto& e = index_.entries()[static_cast<size_t>(corpus_pos)];
    slot = Tensor::from({e.n_rows, index_.d_emb()}, e.rows);
  }
  return slot;
}

StepMetrics Trainer::train_step(const std::vector<int>& batch_queries) {
  if (batch_queries.empty()) throw std::invalid_argument("train_step: empty batch");
  int epoch = cfg_.epochs == 0 ? 0 : next_epoch_;
  bool do_reader = reader_phase(epoch);
  bool do_retr = retriever_phase(epoch) && uses_retrieval();

  StepMetrics sm;
  sm.step = step_;
  sm.epoch = epoch;
  sm.lr_reader = lr_at(reader_sched_, std::min(step_, reader_sched_.total_steps));
  sm.lr_retriever = lr_at(retriever_sched_, std::min(step_, retriever_sched_.total_steps));

  if (do_reader)
    for (auto& p : reader_.parameters()) p.zero_grad();
  if (do_retr)
    for (auto& p : encoder_.parameters()) p.zero_grad();

  std::vector<Tensor> task_losses;
  std::vector<RankPairInput> pair_inputs;
  std::map<std::pair<int, int64_t>, double> probe_cache;  // (query, corpus_pos) within this step

  for (int qi : batch_queries) {
    const QAExample& ex = train_qa_[static_cast<size_t>(qi)];
    std::vector<std::string> doc_texts;
    std::vector<int> sampled;
    CandidateSet* cs = nullptr;
    if (uses_retrieval() && cfg_.k > 0) {
      cs = &candidates_for(qi);
      sampled = sample_docs(*cs, cfg_.k, cfg_.tau, rng_sample_);
      for (int pos : sampled)
        doc_texts.push_back(
            corpus_[static_cast<size_t>(cs->entries[static_cast<size_t>(pos)].corpus_pos)].text);
    }

    if (do_reader) {
      PromptAssembly pa = assemble_prompt(vocab_, doc_texts, ex, reader_.config().max_seq_len);
      task_losses.push_back(answer_loss(reader_, pa));
    }

    if (do_retr && cs != nullptr && sampled.size() >= 2) {
      // Probe the sampled documents with the current reader, no tape.
      std::vector<double> probes(sampled.size());
      for (size_t s = 0; s < sampled.size(); ++s) {
        const Candidate& c = cs->entries[static_cast<size_t>(sampled[s])];
        auto key = std::make_pair(qi, c.corpus_pos);
        auto it = probe_cache.find(key);
        if (it == probe_cache.end()) {
          double l = probe_doc_losses(reader_, vocab_, ex,
                                      {corpus_[static_cast<size_t>(c.corpus_pos)].text},
                                      reader_.config().max_seq_len)[0];
          it = probe_cache.emplace(key, l).first;
        }
        probes[s] = it->second;
        cs->entries[static_cast<size_t>(sampled[s])].probe_loss = it->second;
      }

      // Live normalized scores: query side re-encoded on the tape, document
      // bags read from the refreshed index.
      Tensor q_bag = encoder_.encode_query(build_query_ids(vocab_, ex.question, cfg_.n_q));
      std::vector<Tensor> scores;
      scores.reserve(cs->entries.size());
      for (const auto& c : cs->entries) scores.push_back(maxsim(q_bag, index_bag_tensor(c.corpus_pos)));
      Tensor shat = zscore(concat_scalars(scores));

      // All unordered pairs among the sampled documents. Orientation: k is
      // the retriever-preferred (higher raw score) document of the pair.
      for (size_t a = 0; a < sampled.size(); ++a) {
        for (size_t b = a + 1; b < sampled.size(); ++b) {
          RankPairInput in;
          in.query_index = qi;
          in.k = sampled[a];  // higher S
          in.j = sampled[b];
          in.l_i = probes[b] - probes[a];  // L-hat(d_j) - L-hat(d_k)
          in.s_hat_k = element(shat, in.k);
          in.s_hat_j = element(shat, in.j);
          pair_inputs.push_back(std::move(in));
        }
      }
    }
  }

  if (do_reader && !task_losses.empty()) {
    Tensor l_task = task_losses[0];
    for (size_t i = 1; i < task_losses.size(); ++i) l_task = add(l_task, task_losses[i]);
    l_task = scale(l_task, 1.0f / static_cast<float>(task_losses.size()));
    sm.l_task = l_task.item();
    sm.has_task = true;
    if (!std::isfinite(sm.l_task))
      throw std::runtime_error("train_step: non-finite task loss at step " + std::to_string(step_));
    backward(l_task);
  }

  if (do_retr) {
    std::vector<RankPairDiag> diags;
    Tensor l_rank = rank_loss(pair_inputs, static_cast<int>(batch_queries.size()), cfg_.clamp_eps,
                              cfg_.pair_delta, &diags);
    sm.l_rank = l_rank.item();
    sm.has_rank = true;
    for (const auto& d : diags) sm.active_pairs += d.active ? 1 : 0;
    if (!std::isfinite(sm.l_rank))
      throw std::runtime_error("train_step: non-finite rank loss at step " + std::to_string(step_));
    if (l_rank.requires_grad()) backward(l_rank);
  }

  AdamWParams reader_hp{sm.lr_reader, cfg_.beta1, cfg_.beta2, cfg_.eps, cfg_.weight_decay};
  AdamWParams retr_hp{sm.lr_retriever, cfg_.beta1, cfg_.beta2, cfg_.eps, cfg_.weight_decay};
  if (do_reader) reader_opt_.step(reader_.parameters(), reader_hp);
  if (do_retr) {
    retriever_opt_.step(encoder_.parameters(), retr_hp);
    encoder_.bump_revision();
  }
  return sm;
}

Trainer::EpochEval Trainer::evaluate_dev() {
  EpochEval ev;
  int k = uses_retrieval() ? cfg_.k : 0;
  if (k > 0) ensure_index_fresh();
  ev.dev_accuracy = accuracy(reader_, vocab_, encoder_, index_, corpus_, dev_qa_, k, cfg_.n_q);
  if (k > 0 && dev_planted_.size() == dev_qa_.size())
    ev.hit_at_k = hit_at_k(encoder_, index_, vocab_, dev_qa_, dev_planted_, k, cfg_.n_q);
  return ev;
}

namespace {

std::string step_line(const StepMetrics& sm, Regime regime) {
  nlohmann::json j;
  j["step"] = sm.step;
  j["epoch"] = sm.epoch;
  j["regime"] = regime_name(regime);
  if (sm.has_task)
    j["l_task"] = sm.l_task;
  else
    j["l_task"] = nullptr;
  if (sm.has_rank)
    j["l_rank"] = sm.l_rank;
  else
    j["l_rank"] = nullptr;
  j["lr_reader"] = sm.lr_reader;
  j["lr_retriever"] = sm.lr_retriever;
  j["active_pairs"] = sm.active_pairs;
  return j.dump();
}

std::string epoch_line(int64_t step, int epoch, Regime regime, const Trainer::EpochEval& ev) {
  nlohmann::json j;
  j["step"] = step;
  j["epoch"] = epoch;
  j["regime"] = regime_name(regime);
  j["epoch_end"] = true;
  j["dev_accuracy"] = ev.dev_accuracy;
  if (ev.hit_at_k >= 0) j["hit_at_k"] = ev.hit_at_k;
  return j.dump();
}

}  // namespace

RunResult Trainer::run(const RunHooks& hooks) {
  RunResult res;
  try {
    warmup_retriever();
    ensure_index_fresh();
    for (int epoch = next_epoch_; epoch < cfg_.epochs; ++epoch) {
      std::vector<int> order(train_qa_.size());
      for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng_shuffle_.uniform_int(i)]);
      for (size_t b = 0; b < order.size(); b += static_cast<size_t>(cfg_.batch_size)) {
        std::vector<int> batch(order.begin() + static_cast<int64_t>(b),
                               order.begin() +
                                   static_cast<int64_t>(std::min(order.size(),
                                                                 b + static_cast<size_t>(cfg_.batch_size))));
        maybe_refresh();
        StepMetrics sm = train_step(batch);
        if (hooks.log_line) hooks.log_line(step_line(sm, cfg_.regime));
        ++step_;
      }
      next_epoch_ = epoch + 1;
      EpochEval ev = evaluate_dev();
      if (hooks.log_line) hooks.log_line(epoch_line(step_, epoch, cfg_.regime, ev));
      bool is_best = ev.dev_accuracy > best_dev_;
      if (is_best) {
        best_dev_ = ev.dev_accuracy;
        best_epoch_ = epoch;
      }
      res.final_dev_accuracy = ev.dev_accuracy;
      res.final_hit_at_k = ev.hit_at_k;
      if (hooks.save_checkpoint) hooks.save_checkpoint(is_best);
      if (hooks.should_stop && hooks.should_stop(epoch)) break;
    }
    res.completed = true;
    res.best_dev_accuracy = best_dev_;
    res.best_epoch = best_epoch_;
  } catch (const std::exception& e) {
    res.abort_reason = e.what();
  }
  return res;
}

}  // namespace jrl
