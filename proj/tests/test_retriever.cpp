// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "jrl/retriever.hpp"
#include "jrl/synthetic.hpp"
#include "test_util.hpp"

using jrl::DocIndex;
using jrl::EncoderConfig;
using jrl::LateInteractionEncoder;
using jrl::Tensor;
using jrl::Vocab;

namespace {

// Independent double-loop reference for the late-interaction score.
double maxsim_oracle(const Tensor& q, const Tensor& d) {
  double total = 0.0;
  for (int64_t i = 0; i < q.dim(0); ++i) {
    double best = -1e300;
    for (int64_t j = 0; j < d.dim(0); ++j) {
      double dot = 0.0;
      for (int64_t c = 0; c < q.dim(1); ++c) dot += static_cast<double>(q.at(i, c)) * d.at(j, c);
      best = std::max(best, dot);
    }
    total += best;
  }
  return total;
}

EncoderConfig small_encoder_config(int vocab_size) {
  EncoderConfig cfg;
  cfg.vocab_size = vocab_size;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.n_blocks = 1;
  cfg.d_emb = 8;
  cfg.max_positions = 16;
  return cfg;
}

}  // namespace

TEST_CASE("maxsim hand cases") {
  Tensor q1 = Tensor::from({1, 2}, {1.0f, 0.0f});
  Tensor d1 = Tensor::from({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  CHECK(jrl::maxsim(q1, d1).item() == doctest::Approx(1.0));

  Tensor q2 = Tensor::from({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f});
  Tensor d2 = Tensor::from({1, 2}, {0.0f, 1.0f});
  CHECK(jrl::maxsim(q2, d2).item() == doctest::Approx(1.0));  // 0 + 1

  CHECK_THROWS_AS(jrl::maxsim(q1, Tensor::zeros({2, 3})), std::invalid_argument);
}

TEST_CASE("maxsim equals the double-loop oracle on random bags") {
  jrl::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor q = Tensor::randn({4, 8}, rng);
    Tensor d = Tensor::randn({6, 8}, rng);
    CHECK(jrl::maxsim(q, d).item() == doctest::Approx(maxsim_oracle(q, d)).epsilon(1e-6));
  }
}

TEST_CASE("maxsim invariants") {
  jrl::Rng rng(6);
  Tensor q = jrl::l2_normalize_rows(Tensor::randn({5, 8}, rng));
  Tensor d = jrl::l2_normalize_rows(Tensor::randn({7, 8}, rng));

  SUBCASE("bounded by query row count for unit-norm bags") {
    CHECK(jrl::maxsim(q, d).item() <= 5.0 + 1e-6);
  }
  SUBCASE("invariant to permuting rows of either bag") {
    double base = jrl::maxsim(q, d).item();
    std::vector<int> qperm = {4, 0, 3, 1, 2};
    std::vector<int> dperm = {6, 5, 4, 3, 2, 1, 0};
    CHECK(jrl::maxsim(jrl::take_rows(q, qperm), d).item() == doctest::Approx(base).epsilon(1e-7));
    CHECK(jrl::maxsim(q, jrl::take_rows(d, dperm)).item() == doctest::Approx(base).epsilon(1e-7));
  }
  SUBCASE("adding a document row never decreases the score") {
    double base = jrl::maxsim(q, d).item();
    for (int trial = 0; trial < 10; ++trial) {
      Tensor extra = jrl::l2_normalize_rows(Tensor::randn({1, 8}, rng));
      std::vector<float> grown(d.data().begin(), d.data().end());
      grown.insert(grown.end(), extra.data().begin(), extra.data().end());
      Tensor d2 = Tensor::from({8, 8}, grown);
      CHECK(jrl::maxsim(q, d2).item() >= base - 1e-6);
    }
  }
}

TEST_CASE("normalize_scores is a population z-score") {
  SUBCASE("degenerate variance maps to zeros") {
    auto z = jrl::normalize_scores({5.0, 5.0, 5.0});
    for (double v : z) CHECK(v == 0.0);
  }
  SUBCASE("hand case [2,4,6]") {
    // mean 4, population std sqrt(8/3)
    auto z = jrl::normalize_scores({2.0, 4.0, 6.0});
    CHECK(z[0] == doctest::Approx(-1.224745).epsilon(1e-6));
    CHECK(z[1] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(z[2] == doctest::Approx(1.224745).epsilon(1e-6));
  }
  SUBCASE("argsort is preserved") {
    jrl::Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> s;
      for (int i = 0; i < 12; ++i) s.push_back(rng.normal() * 10.0 + 3.0);
      auto z = jrl::normalize_scores(s);
      for (size_t a = 0; a < s.size(); ++a)
        for (size_t b = 0; b < s.size(); ++b)
          if (s[a] < s[b]) CHECK(z[a] < z[b]);
    }
  }
}

TEST_CASE("encoder output contracts") {
  Vocab v;
  v.add_text("alpha beta gamma delta . epsilon");
  jrl::Rng init(42);
  LateInteractionEncoder enc(small_encoder_config(v.size()), init);

  SUBCASE("query rows are unit norm and [MASK] rows stay") {
    auto ids = jrl::build_query_ids(v, "alpha beta", 6);
    Tensor bag = enc.encode_query(ids);
    REQUIRE(bag.dim(0) == 8);
    for (int64_t i = 0; i < bag.dim(0); ++i) {
      double n = 0.0;
      for (int64_t c = 0; c < bag.dim(1); ++c) n += static_cast<double>(bag.at(i, c)) * bag.at(i, c);
      CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  SUBCASE("document punctuation rows are dropped") {
    jrl::Document d{"d0", "alpha .", ""};
    auto di = jrl::build_doc_ids(v, d);
    Tensor bag = enc.encode_document(di.ids, di.punct_mask);
    CHECK(bag.dim(0) == 3);  // [CLS][D] alpha, "." filtered
  }
  SUBCASE("all-punctuation document keeps [CLS] and [D]") {
    jrl::Document d{"d1", ". . .", ""};
    auto di = jrl::build_doc_ids(v, d);
    Tensor bag = enc.encode_document(di.ids, di.punct_mask);
    CHECK(bag.dim(0) == 2);
  }
  SUBCASE("queries and documents share one parameter set") {
    const auto& params = enc.parameters();
    auto ids1 = jrl::build_query_ids(v, "alpha", 4);
    auto ids2 = jrl::build_query_ids(v, "beta gamma", 4);
    Tensor q1 = enc.encode_query(ids1);
    Tensor q2 = enc.encode_query(ids2);
    // same underlying parameter nodes serve every encoding
    CHECK(&enc.parameters() == &params);
    CHECK(enc.parameters()[0].raw() == params[0].raw());
    CHECK(q1.dim(1) == q2.dim(1));
  }
}

TEST_CASE("maxsim gradient through the encoder matches finite differences") {
  Vocab v;
  v.add_text("alpha beta gamma delta epsilon zeta");
  jrl::Rng init(99);
  LateInteractionEncoder enc(small_encoder_config(v.size()), init);
  auto q_ids = jrl::build_query_ids(v, "alpha beta", 4);
  jrl::Document d1{"d1", "alpha gamma delta", ""};
  jrl::Document d2{"d2", "epsilon zeta", ""};
  auto di1 = jrl::build_doc_ids(v, d1);
  auto di2 = jrl::build_doc_ids(v, d2);

  auto path = [&] {
    Tensor q = enc.encode_query(q_ids);
    Tensor s1 = jrl::maxsim(q, enc.encode_document(di1.ids, di1.punct_mask));
    Tensor s2 = jrl::maxsim(q, enc.encode_document(di2.ids, di2.punct_mask));
    return jrl::concat_scalars({s1, s2});
  };
  // h small enough that the argmax selection cannot flip inside +-h
  jrl::Rng rng(100);
  double err = jrl_test::max_fd_rel_error(path, enc.parameters(), rng, 1e-3, 6);
  CHECK_MESSAGE(err < 1e-3, "maxsim path fd err ", err);
}

TEST_CASE("topk equals a full-sort oracle and rejects bad calls") {
  jrl::TaskSpec spec;
  spec.n_entities = 5;
  spec.n_properties = 2;
  spec.n_distractor_docs = 10;
  spec.seed = 21;
  spec.vocab_size = 400;
  jrl::GeneratedTask task = jrl::generate(spec);
  Vocab v = jrl::build_vocab(task.corpus, {&task.train_qa});
  jrl::Rng init(5);
  EncoderConfig cfg = small_encoder_config(v.size());
  cfg.max_positions = 40;
  LateInteractionEncoder enc(cfg, init);
  DocIndex index;
  index.build(enc, v, task.corpus, 32);

  jrl::NoGradGuard ng;
  Tensor q = enc.encode_query(jrl::build_query_ids(v, task.train_qa[0].question, 8));

  SUBCASE("oracle equivalence at several m") {
    // full sort with the same tie rule
    std::vector<std::pair<double, std::string>> all;
    for (int64_t i = 0; i < index.size(); ++i)
      all.emplace_back(index.score_one(q, i), index.doc_id_at(i));
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int m : {1, 3, static_cast<int>(index.size())}) {
      auto top = index.topk(q, m, enc.revision());
      REQUIRE(static_cast<int>(top.size()) == m);
      for (int i = 0; i < m; ++i) {
        CHECK(top[static_cast<size_t>(i)].doc_id == all[static_cast<size_t>(i)].second);
        CHECK(top[static_cast<size_t>(i)].score ==
              doctest::Approx(all[static_cast<size_t>(i)].first).epsilon(1e-12));
      }
    }
  }
  SUBCASE("m larger than the corpus is an error") {
    CHECK_THROWS_AS(index.topk(q, static_cast<int>(index.size()) + 1, enc.revision()),
                    std::invalid_argument);
  }
  SUBCASE("stale index lookups are rejected") {
    CHECK_THROWS_WITH_AS(index.topk(q, 3, enc.revision() + 1), doctest::Contains("stale index"),
                         std::runtime_error);
  }
}

TEST_CASE("bitwise score ties break by ascending doc id") {
  // identical documents -> identical scores for any query
  std::vector<jrl::Document> docs = {{"db", "alpha beta", ""}, {"da", "alpha beta", ""},
                                     {"dc", "alpha beta", ""}};
  Vocab v;
  for (const auto& d : docs) v.add_text(d.text);
  jrl::Rng init(77);
  EncoderConfig cfg = small_encoder_config(v.size());
  LateInteractionEncoder enc(cfg, init);
  DocIndex index;
  index.build(enc, v, docs, 8);
  jrl::NoGradGuard ng;
  Tensor q = enc.encode_query(jrl::build_query_ids(v, "alpha beta", 4));
  auto top = index.topk(q, 3, enc.revision());
  CHECK(top[0].score == top[1].score);
  CHECK(top[1].score == top[2].score);
  CHECK(top[0].doc_id == "da");
  CHECK(top[1].doc_id == "db");
  CHECK(top[2].doc_id == "dc");
}
