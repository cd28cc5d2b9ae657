// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0
//
// Joint retriever-reader training loop. Each step samples documents from the
// query's pre-extracted candidate set, trains the reader on the aggregated
// prompt, probes per-document answer losses, and trains the retriever with a
// pairwise rank loss over live recomputed normalized scores.

#ifndef JRL_TRAINER_HPP_
#define JRL_TRAINER_HPP_

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "jrl/eval.hpp"
#include "jrl/optim.hpp"
#include "jrl/reader.hpp"
#include "jrl/retriever.hpp"
#include "jrl/synthetic.hpp"
#include "jrl/tensor.hpp"
#include "jrl/text.hpp"

namespace jrl {

enum class Regime { kJoint, kSeparate, kFrozenRetriever, kNoRetrieval };

std::string regime_name(Regime r);
Regime parse_regime(const std::string& name);

struct TrainConfig {
  Regime regime = Regime::kJoint;
  int m = 30;
  int k = 7;
  int epochs = 5;
  int batch_size = 2;
  double reader_lr = 1e-5;
  double retriever_lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-5;
  double weight_decay = 0.1;
  double warmup_fraction = 0.1;
  double lr_floor_fraction = 0.1;
  double tau = 1.0;          // sampling temperature
  double clamp_eps = 1e-6;   // epsilon inside the rank-loss logs
  double pair_delta = 1e-6;  // |L_i| activity gate
  int refresh_every = 50;    // 0 = extract candidates once, never refresh
  uint64_t seed = 0;
  int n_q = 32;
  int n_doc_max = 64;
  // Identity-pair contrastive warmup bringing the from-scratch encoder to a
  // usable starting point before the joint loop (the reference setup starts
  // from trained retriever weights).
  int retriever_warmup_steps = 300;
  double retriever_warmup_lr = 1e-3;
  int retriever_warmup_batch = 8;

  ReaderConfig reader;        // vocab_size filled at setup
  EncoderConfig retriever;    // vocab_size / max_positions filled at setup

  void validate() const;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct Candidate {
  std::string doc_id;
  int64_t corpus_pos = -1;  // position in the corpus / index
  double raw_score = 0.0;   // S
  double norm_score = 0.0;  // S-hat
  std::optional<double> probe_loss;
};

struct CandidateSet {
  int query_index = -1;
  std::vector<Candidate> entries;  // descending S, ties by ascending doc_id
  int64_t extracted_at_step = -1;
  int64_t index_revision = -1;
};

// Sequential weighted sampling without replacement, weights softmax(S-hat /
// tau). Returns candidate positions ordered by descending raw score.
std::vector<int> sample_docs(const CandidateSet& cands, int k, double tau, Rng& rng);

// Answer loss of one single-document prompt per doc, no tape.
std::vector<double> probe_doc_losses(const ReaderModel& model, const Vocab& vocab, const QAExample& q,
                                     const std::vector<std::string>& doc_texts, int64_t max_seq_len);

struct RankPairInput {
  Tensor s_hat_j;  // scalar, on the retriever tape
  Tensor s_hat_k;
  double l_i = 0.0;  // probe-loss difference, constant
  int query_index = -1;
  int j = -1;  // candidate positions, for diagnostics
  int k = -1;
};

struct RankPairDiag {
  int query_index = -1;
  int j = -1;
  int k = -1;
  double l_i = 0.0;
  double c_i = 0.0;
  double f_i = 0.0;
  bool active = false;
};

// L_rank = -(1/M) sum over active pairs of F_i with
//   C_i = sigmoid(S-hat_k) - sigmoid(S-hat_j)
//   F_i = log clamp(C_i)        when L_i > 0
//       = log clamp(1 - C_i)    otherwise
// clamp keeps the log argument inside [eps, 2-eps]; pairs with |L_i| <= delta
// contribute nothing. M is the number of queries in the batch. Differentiable
// w.r.t. the S-hat tensors only.
Tensor rank_loss(const std::vector<RankPairInput>& pairs, int n_queries, double clamp_eps,
                 double pair_delta, std::vector<RankPairDiag>* diagnostics = nullptr);

struct StepMetrics {
  int64_t step = 0;
  int epoch = 0;
  bool has_task = false;
  bool has_rank = false;
  double l_task = 0.0;
  double l_rank = 0.0;
  double lr_reader = 0.0;
  double lr_retriever = 0.0;
  int active_pairs = 0;
};

struct RunResult {
  bool completed = false;
  std::string abort_reason;
  double best_dev_accuracy = -1.0;
  int best_epoch = -1;
  double final_dev_accuracy = -1.0;
  double final_hit_at_k = -1.0;
};

struct RunHooks {
  std::function<void(const std::string&)> log_line;   // one serialized record
  std::function<void(bool is_best)> save_checkpoint;  // epoch end
  // Return true to stop cleanly after this epoch; the checkpoint hook has
  // already run, so the run can be resumed later.
  std::function<bool(int epoch_done)> should_stop;
};

class Checkpoint;

class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<Document> corpus, std::vector<QAExample> train_qa,
          std::vector<QAExample> dev_qa, PlantedMap train_planted, PlantedMap dev_planted);

  const TrainConfig& config() const { return cfg_; }
  ReaderModel& reader() { return reader_; }
  LateInteractionEncoder& encoder() { return encoder_; }
  const Vocab& vocab() const { return vocab_; }
  DocIndex& index() { return index_; }
  AdamW& reader_opt() { return reader_opt_; }
  AdamW& retriever_opt() { return retriever_opt_; }
  const std::vector<Document>& corpus() const { return corpus_; }
  const std::vector<QAExample>& train_qa() const { return train_qa_; }
  const std::vector<QAExample>& dev_qa() const { return dev_qa_; }
  int64_t global_step() const { return step_; }
  int next_epoch() const { return next_epoch_; }
  int64_t total_steps() const { return total_steps_; }

  // Identity-pair warmup for the retriever encoder (runs once, before step 0).
  void warmup_retriever();

  // Rebuilds the doc index when the encoder moved past its revision.
  void ensure_index_fresh();

  // Candidate set for a train query at the current index revision (lazy
  // re-extraction after each refresh).
  CandidateSet& candidates_for(int query_index);

  StepMetrics train_step(const std::vector<int>& batch_queries);

  struct EpochEval {
    double dev_accuracy = 0.0;
    double hit_at_k = -1.0;  // -1 when retrieval is off
  };
  EpochEval evaluate_dev();

  RunResult run(const RunHooks& hooks);

  // Checkpoint plumbing.
  void serialize_state(Checkpoint& ckpt) const;
  void restore_state(const Checkpoint& ckpt);

 private:
  bool reader_phase(int epoch) const;
  bool retriever_phase(int epoch) const;
  bool uses_retrieval() const { return cfg_.regime != Regime::kNoRetrieval; }
  bool retriever_trainable() const {
    return cfg_.regime == Regime::kJoint || cfg_.regime == Regime::kSeparate;
  }
  void maybe_refresh();
  Tensor index_bag_tensor(int64_t corpus_pos);

  TrainConfig cfg_;
  std::vector<Document> corpus_;
  std::vector<QAExample> train_qa_;
  std::vector<QAExample> dev_qa_;
  PlantedMap train_planted_;
  PlantedMap dev_planted_;

  Vocab vocab_;
  ReaderModel reader_;
  LateInteractionEncoder encoder_;
  DocIndex index_;
  AdamW reader_opt_;
  AdamW retriever_opt_;
  LrSchedule reader_sched_;
  LrSchedule retriever_sched_;

  Rng rng_sample_;
  Rng rng_shuffle_;
  Rng rng_warmup_;

  std::map<int, CandidateSet> cand_cache_;
  std::vector<Tensor> bag_cache_;  // per corpus position, invalidated on rebuild
  int64_t bag_cache_revision_ = -2;

  int64_t step_ = 0;
  int next_epoch_ = 0;
  int64_t total_steps_ = 0;
  double best_dev_ = -1.0;
  int best_epoch_ = -1;
  bool warmed_up_ = false;
};

}  // namespace jrl

#endif  // JRL_TRAINER_HPP_
