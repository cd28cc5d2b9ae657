// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "jrl/checkpoint.hpp"
#include "jrl/trainer.hpp"
#include "test_util.hpp"

using jrl::Candidate;
using jrl::CandidateSet;
using jrl::RankPairInput;
using jrl::Regime;
using jrl::Tensor;
using jrl::TrainConfig;
using jrl::Trainer;

namespace {

TrainConfig tiny_train_config(uint64_t seed, Regime regime = Regime::kJoint) {
  TrainConfig cfg;
  cfg.regime = regime;
  cfg.m = 10;
  cfg.k = 3;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.reader_lr = 1e-3;
  cfg.retriever_lr = 1e-3;
  cfg.retriever_warmup_steps = 5;
  cfg.refresh_every = 10;
  cfg.seed = seed;
  cfg.n_q = 8;
  cfg.n_doc_max = 32;
  cfg.reader.d_model = 16;
  cfg.reader.n_heads = 2;
  cfg.reader.n_blocks = 1;
  cfg.reader.max_seq_len = 128;
  cfg.reader.attention = jrl::AttentionMode::kFull;
  cfg.retriever.d_model = 16;
  cfg.retriever.n_heads = 2;
  cfg.retriever.n_blocks = 1;
  cfg.retriever.d_emb = 8;
  return cfg;
}

jrl::GeneratedTask tiny_task(uint64_t seed = 17) {
  jrl::TaskSpec spec;
  spec.n_entities = 8;
  spec.n_properties = 2;
  spec.n_distractor_docs = 16;
  spec.seed = seed;
  spec.vocab_size = 400;
  return jrl::generate(spec);
}

Trainer make_trainer(const TrainConfig& cfg, const jrl::GeneratedTask& task) {
  return Trainer(cfg, task.corpus, task.train_qa, task.dev_qa, task.train_planted, task.dev_planted);
}

CandidateSet fake_candidates(const std::vector<double>& raw) {
  CandidateSet cs;
  cs.query_index = 0;
  std::vector<double> norm = jrl::normalize_scores(raw);
  for (size_t i = 0; i < raw.size(); ++i) {
    Candidate c;
    c.doc_id = "d" + std::to_string(i);
    c.corpus_pos = static_cast<int64_t>(i);
    c.raw_score = raw[i];
    c.norm_score = norm[i];
    cs.entries.push_back(c);
  }
  return cs;
}

uint64_t params_checksum(const std::vector<Tensor>& params) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& p : params) h = jrl::fnv1a64(p.data().data(), p.data().size() * sizeof(float), h);
  return h;
}

// Mirrors the rank-loss arithmetic with plain loops and the same float
// rounding points, no autodiff.
double rank_loss_scalar_oracle(const std::vector<std::tuple<float, float, double>>& pairs, int m,
                               double eps, double delta) {
  float lo = static_cast<float>(eps);
  float hi = static_cast<float>(2.0 - eps);
  float acc = 0.0f;
  bool any = false;
  for (const auto& [sj, sk, li] : pairs) {
    if (std::abs(li) <= delta) continue;
    float sig_j = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(sj))));
    float sig_k = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(sk))));
    float c = sig_k - sig_j;
    float arg = li > 0 ? c : 1.0f - c;
    float clamped = std::min(hi, std::max(lo, arg));
    float f = static_cast<float>(std::log(static_cast<double>(clamped)));
    acc = any ? acc + f : f;
    any = true;
  }
  if (!any) return 0.0;
  return acc * static_cast<float>(-1.0 / static_cast<double>(m));
}

}  // namespace

TEST_CASE("sample_docs selects everything when k equals m") {
  CandidateSet cs = fake_candidates({9.0, 7.0, 5.0, 3.0});
  jrl::Rng rng(1);
  auto picked = jrl::sample_docs(cs, 4, 1.0, rng);
  CHECK(picked == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("sample_docs is deterministic in the rng state") {
  CandidateSet cs = fake_candidates({5.0, 4.0, 3.0, 2.0, 1.0});
  jrl::Rng a(7), b(7);
  for (int i = 0; i < 10; ++i) CHECK(jrl::sample_docs(cs, 2, 1.0, a) == jrl::sample_docs(cs, 2, 1.0, b));
}

TEST_CASE("sample_docs returns candidates in descending raw-score order") {
  CandidateSet cs = fake_candidates({5.0, 4.0, 3.0, 2.0, 1.0, 0.5, 0.25, 0.1});
  jrl::Rng rng(9);
  for (int i = 0; i < 50; ++i) {
    auto picked = jrl::sample_docs(cs, 4, 1.0, rng);
    for (size_t j = 1; j < picked.size(); ++j) {
      CHECK(picked[j - 1] < picked[j]);
      CHECK(cs.entries[static_cast<size_t>(picked[j - 1])].raw_score >=
            cs.entries[static_cast<size_t>(picked[j])].raw_score);
    }
  }
}

TEST_CASE("uniform scores sample uniformly (chi-square over 10000 draws)") {
  CandidateSet cs = fake_candidates({2.0, 2.0, 2.0, 2.0});
  jrl::Rng rng(123);
  std::vector<int> counts(4, 0);
  constexpr int kDraws = 10000;
  for (int i = 0; i < kDraws; ++i) ++counts[static_cast<size_t>(jrl::sample_docs(cs, 1, 1.0, rng)[0])];
  // expected 2500 each; 3 sigma of Binomial(10000, 1/4) is ~130
  for (int c : counts) CHECK(std::abs(c - 2500) < 130);
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - 2500.0) * (c - 2500.0) / 2500.0;
  CHECK(chi2 < 16.27);  // chi-square_{3, 0.999}
}

TEST_CASE("higher scores are sampled more often") {
  CandidateSet cs = fake_candidates({3.0, 0.0, 0.0, 0.0});
  jrl::Rng rng(5);
  int first = 0;
  for (int i = 0; i < 2000; ++i) first += jrl::sample_docs(cs, 1, 1.0, rng)[0] == 0 ? 1 : 0;
  CHECK(first > 1200);  // z-scored gap ~1.7 sigma implies a clear majority
}

TEST_CASE("rank_loss reproduces the two hand-computed cases") {
  SUBCASE("winning pair, L_i positive") {
    RankPairInput p;
    p.s_hat_j = Tensor::scalar(0.0f);
    p.s_hat_k = Tensor::scalar(2.0f);
    p.l_i = 1.0;  // L-hat(d_j)=2, L-hat(d_k)=1
    double l = jrl::rank_loss({p}, 1, 1e-6, 1e-6).item();
    CHECK(l == doctest::Approx(0.96549).epsilon(1e-4));
  }
  SUBCASE("losing pair, L_i negative, loss can be negative") {
    RankPairInput p;
    p.s_hat_j = Tensor::scalar(0.0f);
    p.s_hat_k = Tensor::scalar(-2.0f);
    p.l_i = -1.0;  // L-hat(d_j)=1, L-hat(d_k)=2
    double l = jrl::rank_loss({p}, 1, 1e-6, 1e-6).item();
    CHECK(l == doctest::Approx(-0.32268).epsilon(1e-4));
  }
}

TEST_CASE("inactive pairs contribute nothing") {
  std::vector<RankPairInput> pairs;
  for (int i = 0; i < 5; ++i) {
    RankPairInput p;
    p.s_hat_j = Tensor::scalar(static_cast<float>(i) - 2.0f);
    p.s_hat_k = Tensor::scalar(2.0f - static_cast<float>(i));
    p.l_i = 0.0;
    pairs.push_back(p);
  }
  std::vector<jrl::RankPairDiag> diag;
  CHECK(jrl::rank_loss(pairs, 3, 1e-6, 1e-6, &diag).item() == 0.0f);
  for (const auto& d : diag) CHECK_FALSE(d.active);
}

TEST_CASE("rank_loss equals the scalar-loop oracle on 100 random pair sets") {
  jrl::Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform_int(20));
    int m = 1 + static_cast<int>(rng.uniform_int(4));
    std::vector<RankPairInput> pairs;
    std::vector<std::tuple<float, float, double>> raw;
    for (int i = 0; i < n; ++i) {
      float sj = static_cast<float>(rng.normal() * 1.5);
      float sk = static_cast<float>(rng.normal() * 1.5);
      double li = rng.uniform() < 0.2 ? 0.0 : rng.normal();
      RankPairInput p;
      p.s_hat_j = Tensor::scalar(sj);
      p.s_hat_k = Tensor::scalar(sk);
      p.l_i = li;
      pairs.push_back(p);
      raw.emplace_back(sj, sk, li);
    }
    double lib = jrl::rank_loss(pairs, m, 1e-6, 1e-6).item();
    double oracle = rank_loss_scalar_oracle(raw, m, 1e-6, 1e-6);
    CHECK(std::abs(lib - oracle) < 1e-10);
  }
}

TEST_CASE("probe-loss antisymmetry of L_i") {
  jrl::Rng rng(33);
  for (int i = 0; i < 50; ++i) {
    double a = rng.normal() * 3.0, b = rng.normal() * 3.0;
    double l_jk = a - b;
    double l_kj = b - a;
    CHECK(l_jk == -l_kj);  // exact in IEEE double
  }
}

TEST_CASE("active winning pairs push the better document's score up") {
  // L_i > 0 means d_k is better; loss must fall as S-hat_k rises.
  Tensor sj = Tensor::scalar(0.3f).set_requires_grad(true);
  Tensor sk = Tensor::scalar(0.9f).set_requires_grad(true);
  RankPairInput p;
  p.s_hat_j = sj;
  p.s_hat_k = sk;
  p.l_i = 0.7;
  Tensor loss = jrl::rank_loss({p}, 1, 1e-6, 1e-6);
  jrl::backward(loss);
  CHECK(sk.grad()[0] < 0.0f);
  CHECK(sj.grad()[0] > 0.0f);
}

TEST_CASE("probe losses are pure and empty lists stay empty") {
  jrl::GeneratedTask task = tiny_task();
  TrainConfig cfg = tiny_train_config(3);
  Trainer t = make_trainer(cfg, task);
  const jrl::QAExample& q = task.train_qa[0];
  std::string doc = task.corpus[5].text;
  auto a = jrl::probe_doc_losses(t.reader(), t.vocab(), q, {doc, doc}, 128);
  REQUIRE(a.size() == 2);
  CHECK(a[0] == a[1]);
  CHECK(jrl::probe_doc_losses(t.reader(), t.vocab(), q, {}, 128).empty());
}

TEST_CASE("shifting all raw scores leaves sampling and the rank pairs unchanged") {
  std::vector<double> raw = {4.0, 3.1, 2.9, 1.5, 0.7, -0.4};
  CandidateSet base = fake_candidates(raw);
  std::vector<double> shifted_raw;
  for (double s : raw) shifted_raw.push_back(s + 37.5);
  CandidateSet shifted = fake_candidates(shifted_raw);
  for (size_t i = 0; i < raw.size(); ++i)
    CHECK(base.entries[i].norm_score == doctest::Approx(shifted.entries[i].norm_score).epsilon(1e-9));
  for (uint64_t seed = 0; seed < 10; ++seed) {
    jrl::Rng a(seed), b(seed);
    CHECK(jrl::sample_docs(base, 3, 1.0, a) == jrl::sample_docs(shifted, 3, 1.0, b));
  }
  // C_i and F_i depend on scores only through the z-scores
  for (size_t j = 0; j < raw.size(); ++j) {
    for (size_t k = j + 1; k < raw.size(); ++k) {
      RankPairInput p1, p2;
      p1.s_hat_j = Tensor::scalar(static_cast<float>(base.entries[j].norm_score));
      p1.s_hat_k = Tensor::scalar(static_cast<float>(base.entries[k].norm_score));
      p1.l_i = 0.5;
      p2.s_hat_j = Tensor::scalar(static_cast<float>(shifted.entries[j].norm_score));
      p2.s_hat_k = Tensor::scalar(static_cast<float>(shifted.entries[k].norm_score));
      p2.l_i = 0.5;
      CHECK(jrl::rank_loss({p1}, 1, 1e-6, 1e-6).item() ==
            doctest::Approx(jrl::rank_loss({p2}, 1, 1e-6, 1e-6).item()).epsilon(1e-6));
    }
  }
}

TEST_CASE("gradient isolation between the two losses") {
  jrl::GeneratedTask task = tiny_task();
  TrainConfig cfg = tiny_train_config(11);
  Trainer t = make_trainer(cfg, task);
  t.ensure_index_fresh();
  const jrl::QAExample& q = task.train_qa[0];
  CandidateSet& cs = t.candidates_for(0);

  SUBCASE("task loss reaches no retriever parameter") {
    for (auto& p : t.reader().parameters()) p.zero_grad();
    for (auto& p : t.encoder().parameters()) p.zero_grad();
    jrl::PromptAssembly pa =
        jrl::assemble_prompt(t.vocab(), {task.corpus[0].text, task.corpus[1].text}, q, 128);
    jrl::backward(jrl::answer_loss(t.reader(), pa));
    bool reader_touched = false;
    for (auto& p : t.reader().parameters())
      for (float g : p.grad()) reader_touched = reader_touched || g != 0.0f;
    CHECK(reader_touched);
    for (auto& p : t.encoder().parameters())
      for (float g : p.grad()) CHECK(g == 0.0f);
  }

  SUBCASE("rank loss reaches no reader parameter") {
    for (auto& p : t.reader().parameters()) p.zero_grad();
    for (auto& p : t.encoder().parameters()) p.zero_grad();
    // live query encoding against index bags, as in the training step
    Tensor q_bag = t.encoder().encode_query(jrl::build_query_ids(t.vocab(), q.question, cfg.n_q));
    std::vector<Tensor> scores;
    for (const auto& c : cs.entries) {
      const auto& e = t.index().entries()[static_cast<size_t>(c.corpus_pos)];
      scores.push_back(jrl::maxsim(q_bag, Tensor::from({e.n_rows, t.index().d_emb()}, e.rows)));
    }
    Tensor shat = jrl::zscore(jrl::concat_scalars(scores));
    std::vector<RankPairInput> pairs;
    for (int a = 0; a < 3; ++a) {
      for (int b = a + 1; b < 3; ++b) {
        RankPairInput p;
        p.s_hat_k = jrl::element(shat, a);
        p.s_hat_j = jrl::element(shat, b);
        p.l_i = 0.5 * (a + 1);
        pairs.push_back(p);
      }
    }
    Tensor loss = jrl::rank_loss(pairs, 1, 1e-6, 1e-6);
    REQUIRE(loss.requires_grad());
    jrl::backward(loss);
    bool encoder_touched = false;
    for (auto& p : t.encoder().parameters())
      for (float g : p.grad()) encoder_touched = encoder_touched || g != 0.0f;
    CHECK(encoder_touched);
    for (auto& p : t.reader().parameters())
      for (float g : p.grad()) CHECK(g == 0.0f);
  }
}

TEST_CASE("rank loss gradient matches finite differences through the pipeline") {
  // Live query encoding against three constant document bags (the training
  // step reads bags from the index as constants in exactly this way). The
  // bags are built with well-separated rows so the MaxSim argmax has a solid
  // margin at each probe point.
  jrl::Vocab vocab;
  vocab.add_text("what is the alpha of eta ? beta gamma delta");
  jrl::EncoderConfig ecfg;
  ecfg.vocab_size = vocab.size();
  ecfg.d_model = 16;
  ecfg.n_heads = 2;
  ecfg.n_blocks = 1;
  ecfg.d_emb = 8;
  ecfg.max_positions = 24;
  auto q_ids = jrl::build_query_ids(vocab, "what is the alpha of eta ?", 8);
  std::vector<double> probes = {1.4, 0.6, 2.2};

  std::vector<Tensor> bags;
  for (int d = 0; d < 3; ++d) {
    std::vector<float> rows(2 * 8, 0.0f);
    rows[static_cast<size_t>(d)] = 1.0f;            // e_d
    rows[8 + static_cast<size_t>(d) + 4] = 0.55f;   // 0.55 e_{d+4}
    bags.push_back(Tensor::from({2, 8}, rows));
  }

  // A probe point is only valid for central differences when no pair sits on
  // a clamp knee: saturated pairs contribute log(eps) plateaus whose cliffs
  // break the quotient, and near-zero gaps blow the log gradient up beyond
  // float32 resolution. Screen seeds for comfortably separated scores.
  int accepted = 0;
  for (uint64_t seed = 0; seed < 64 && accepted < 4; ++seed) {
    jrl::Rng init(55 + seed);
    jrl::LateInteractionEncoder enc(ecfg, init);
    {
      jrl::NoGradGuard ng;
      Tensor q_bag = enc.encode_query(q_ids);
      std::vector<double> s;
      double min_margin = 1e9;
      for (int d = 0; d < 3; ++d) {
        s.push_back(jrl::maxsim(q_bag, bags[static_cast<size_t>(d)]).item());
        // per-row argmax margin: best dot minus second-best dot
        Tensor dots = jrl::matmul(q_bag, jrl::transpose(bags[static_cast<size_t>(d)]));
        for (int64_t r = 0; r < dots.dim(0); ++r) {
          double best = -1e300, second = -1e300;
          for (int64_t c = 0; c < dots.dim(1); ++c) {
            double v = dots.at(r, c);
            if (v > best) {
              second = best;
              best = v;
            } else if (v > second) {
              second = v;
            }
          }
          min_margin = std::min(min_margin, best - second);
        }
      }
      std::vector<double> z = jrl::normalize_scores(s);
      double min_gap = 1e9;
      for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b) min_gap = std::min(min_gap, std::abs(z[static_cast<size_t>(a)] -
                                                                             z[static_cast<size_t>(b)]));
      if (min_gap < 0.4 || min_margin < 0.05) continue;
    }
    ++accepted;
    auto path = [&] {
      Tensor q_bag = enc.encode_query(q_ids);
      std::vector<Tensor> scores;
      for (int d = 0; d < 3; ++d) scores.push_back(jrl::maxsim(q_bag, bags[static_cast<size_t>(d)]));
      Tensor shat = jrl::zscore(jrl::concat_scalars(scores));
      std::vector<RankPairInput> pairs;
      for (int a = 0; a < 3; ++a) {
        for (int b = a + 1; b < 3; ++b) {
          RankPairInput p;
          p.s_hat_k = jrl::element(shat, a);
          p.s_hat_j = jrl::element(shat, b);
          p.l_i = probes[static_cast<size_t>(b)] - probes[static_cast<size_t>(a)];
          pairs.push_back(p);
        }
      }
      return jrl::rank_loss(pairs, 1, 1e-6, 1e-6);
    };
    std::vector<Tensor> proj_only;
    for (auto& p : enc.parameters())
      if (p.name() == "retriever.proj.w") proj_only.push_back(p);
    REQUIRE(proj_only.size() == 1);
    // Two probe scales: quantization noise dominates at small h, truncation
    // at large h, and which regime wins depends on the seed. A wrong
    // gradient disagrees at every scale, so the best agreement is compared.
    auto fd_err = [&](const std::vector<Tensor>& leaves, int checks) {
      jrl::Rng r1(56 + seed), r2(56 + seed);
      double a = jrl_test::max_fd_rel_error(path, leaves, r1, 1e-3, checks, /*richardson=*/true);
      double b = jrl_test::max_fd_rel_error(path, leaves, r2, 4e-3, checks, /*richardson=*/true);
      return std::min(a, b);
    };
    double err = fd_err(proj_only, -1);
    CHECK_MESSAGE(err < 1e-3, "seed ", seed, " rank-loss fd err vs projection weight ", err);
    double err_all = fd_err(enc.parameters(), 4);
    CHECK_MESSAGE(err_all < 1e-3, "seed ", seed, " rank-loss fd err vs all encoder params ", err_all);
  }
  CHECK(accepted == 4);
}

TEST_CASE("frozen retriever regime never touches retriever parameters") {
  jrl::GeneratedTask task = tiny_task();
  TrainConfig cfg = tiny_train_config(21, Regime::kFrozenRetriever);
  Trainer t = make_trainer(cfg, task);
  t.warmup_retriever();  // no-op in this regime
  t.ensure_index_fresh();
  uint64_t before = params_checksum(t.encoder().parameters());
  uint64_t reader_before = params_checksum(t.reader().parameters());
  for (int step = 0; step < 5; ++step) t.train_step({0, 1});
  CHECK(params_checksum(t.encoder().parameters()) == before);
  CHECK(params_checksum(t.reader().parameters()) != reader_before);
}

TEST_CASE("joint regime updates both parameter sets in one step") {
  jrl::GeneratedTask task = tiny_task();
  TrainConfig cfg = tiny_train_config(22, Regime::kJoint);
  cfg.retriever_warmup_steps = 0;
  Trainer t = make_trainer(cfg, task);
  t.ensure_index_fresh();
  uint64_t enc_before = params_checksum(t.encoder().parameters());
  uint64_t reader_before = params_checksum(t.reader().parameters());
  t.train_step({0, 1});
  CHECK(params_checksum(t.encoder().parameters()) != enc_before);
  CHECK(params_checksum(t.reader().parameters()) != reader_before);
}

TEST_CASE("separate regime alternates phases by epoch") {
  jrl::GeneratedTask task = tiny_task();
  TrainConfig cfg = tiny_train_config(23, Regime::kSeparate);
  cfg.epochs = 2;
  cfg.retriever_warmup_steps = 0;
  Trainer t = make_trainer(cfg, task);
  std::vector<std::string> lines;
  jrl::RunHooks hooks;
  hooks.log_line = [&](const std::string& l) { lines.push_back(l); };
  jrl::RunResult res = t.run(hooks);
  REQUIRE(res.completed);
  bool saw_reader_phase = false, saw_retr_phase = false;
  for (const auto& l : lines) {
    auto j = nlohmann::json::parse(l);
    if (j.contains("epoch_end")) continue;
    if (j["epoch"] == 0) {
      CHECK_FALSE(j["l_task"].is_null());
      CHECK(j["l_rank"].is_null());
      saw_reader_phase = true;
    } else {
      CHECK(j["l_task"].is_null());
      CHECK_FALSE(j["l_rank"].is_null());
      saw_retr_phase = true;
    }
  }
  CHECK(saw_reader_phase);
  CHECK(saw_retr_phase);
}

TEST_CASE("no-retrieval regime runs with k forced to zero") {
  jrl::GeneratedTask task = tiny_task();
  TrainConfig cfg = tiny_train_config(24, Regime::kNoRetrieval);
  cfg.k = 0;
  Trainer t = make_trainer(cfg, task);
  jrl::RunHooks hooks;
  jrl::RunResult res = t.run(hooks);
  REQUIRE(res.completed);
  CHECK(res.final_dev_accuracy >= 0.0);
  CHECK(res.final_hit_at_k == -1.0);
}

TEST_CASE("zero epochs returns immediately with an empty log") {
  jrl::GeneratedTask task = tiny_task();
  TrainConfig cfg = tiny_train_config(25);
  cfg.epochs = 0;
  Trainer t = make_trainer(cfg, task);
  std::vector<std::string> lines;
  jrl::RunHooks hooks;
  hooks.log_line = [&](const std::string& l) { lines.push_back(l); };
  jrl::RunResult res = t.run(hooks);
  CHECK(res.completed);
  CHECK(lines.empty());
  CHECK(t.global_step() == 0);
}

TEST_CASE("identical seeds produce identical metric logs") {
  jrl::GeneratedTask task = tiny_task();
  TrainConfig cfg = tiny_train_config(26);
  std::vector<std::string> a, b;
  {
    Trainer t = make_trainer(cfg, task);
    jrl::RunHooks hooks;
    hooks.log_line = [&](const std::string& l) { a.push_back(l); };
    REQUIRE(t.run(hooks).completed);
  }
  {
    Trainer t = make_trainer(cfg, task);
    jrl::RunHooks hooks;
    hooks.log_line = [&](const std::string& l) { b.push_back(l); };
    REQUIRE(t.run(hooks).completed);
  }
  CHECK(a == b);
}

TEST_CASE("a resumed run continues the original log exactly") {
  jrl::GeneratedTask task = tiny_task();
  TrainConfig cfg = tiny_train_config(27);
  cfg.epochs = 2;

  std::vector<std::string> uninterrupted;
  {
    Trainer t = make_trainer(cfg, task);
    jrl::RunHooks hooks;
    hooks.log_line = [&](const std::string& l) { uninterrupted.push_back(l); };
    REQUIRE(t.run(hooks).completed);
  }

  std::vector<std::string> stitched;
  jrl::Checkpoint snapshot;
  {
    Trainer t = make_trainer(cfg, task);
    jrl::RunHooks hooks;
    hooks.log_line = [&](const std::string& l) { stitched.push_back(l); };
    hooks.save_checkpoint = [&](bool) {
      snapshot = jrl::Checkpoint();
      t.serialize_state(snapshot);
    };
    hooks.should_stop = [](int epoch_done) { return epoch_done == 0; };
    t.run(hooks);
  }
  {
    Trainer t = make_trainer(cfg, task);
    t.restore_state(snapshot);
    CHECK(t.next_epoch() == 1);
    jrl::RunHooks hooks;
    hooks.log_line = [&](const std::string& l) { stitched.push_back(l); };
    REQUIRE(t.run(hooks).completed);
  }
  CHECK(uninterrupted == stitched);
}

TEST_CASE("config validation rejects bad values") {
  TrainConfig cfg = tiny_train_config(1);
  cfg.k = cfg.m + 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_train_config(1);
  cfg.clamp_eps = 0.7;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_train_config(1);
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_train_config(1);
  cfg.reader_lr = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("train config json round-trip") {
  TrainConfig cfg = tiny_train_config(39, Regime::kSeparate);
  cfg.reader.attention = jrl::AttentionMode::kS2;
  cfg.reader.group_size = 32;
  nlohmann::json j = jrl::train_config_to_json(cfg);
  TrainConfig back = jrl::train_config_from_json(j);
  CHECK(jrl::train_config_to_json(back) == j);
  CHECK(back.regime == Regime::kSeparate);
  CHECK(back.reader.group_size == 32);
}
