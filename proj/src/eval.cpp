// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#include "jrl/eval.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace jrl {

namespace {

std::vector<std::string> normalize_tokens(const std::string& text) {
  std::vector<std::string> toks = split_words(text);
  for (auto& t : toks)
    for (auto& c : t) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return toks;
}

std::vector<std::string> top_doc_texts(const LateInteractionEncoder& encoder, const DocIndex& index,
                                       const Vocab& vocab,
                                       const std::unordered_map<std::string, const Document*>& by_id,
                                       const std::string& question, int k, int n_q) {
  NoGradGuard ng;
  Tensor q_bag = encoder.encode_query(build_query_ids(vocab, question, n_q));
  std::vector<ScoredDoc> top = index.topk(q_bag, k, encoder.revision());
  std::vector<std::string> texts;
  texts.reserve(top.size());
  for (const auto& sd : top) {
    auto it = by_id.find(sd.doc_id);
    if (it == by_id.end()) throw std::runtime_error("eval: doc '" + sd.doc_id + "' missing from corpus");
    texts.push_back(it->second->text);
  }
  return texts;
}

}  // namespace

void ConceptLexicon::add(const std::string& surface, const std::string& concept_id) {
  std::vector<std::string> toks = normalize_tokens(surface);
  if (toks.empty()) throw std::invalid_argument("ConceptLexicon: empty surface form");
  max_len_ = std::max(max_len_, toks.size());
  surfaces_[toks] = concept_id;
}

ConceptLexicon ConceptLexicon::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ConceptLexicon: cannot open " + path);
  ConceptLexicon lex;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("surface") || !j.contains("concept_id"))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed lexicon record");
    lex.add(j["surface"].get<std::string>(), j["concept_id"].get<std::string>());
  }
  return lex;
}

std::set<std::string> ConceptLexicon::match(const std::string& text) const {
  std::set<std::string> found;
  std::vector<std::string> toks = normalize_tokens(text);
  size_t i = 0;
  while (i < toks.size()) {
    size_t best = 0;
    const std::string* best_id = nullptr;
    size_t limit = std::min(max_len_, toks.size() - i);
    std::vector<std::string> probe;
    for (size_t len = 1; len <= limit; ++len) {
      probe.push_back(toks[i + len - 1]);
      auto it = surfaces_.find(probe);
      if (it != surfaces_.end()) {
        best = len;
        best_id = &it->second;
      }
    }
    if (best_id != nullptr) {
      found.insert(*best_id);
      i += best;  // non-overlapping
    } else {
      ++i;
    }
  }
  return found;
}

ConceptScore concept_f1(const std::string& ref_text, const std::string& gen_text,
                        const ConceptLexicon& lexicon) {
  std::set<std::string> ref = lexicon.match(ref_text);
  std::set<std::string> gen = lexicon.match(gen_text);
  size_t inter = 0;
  for (const auto& c : ref) inter += gen.count(c);
  ConceptScore s;
  s.recall = ref.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(ref.size());
  s.precision = gen.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(gen.size());
  s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

double accuracy(const ReaderModel& reader, const Vocab& vocab, const LateInteractionEncoder& encoder,
                const DocIndex& index, const std::vector<Document>& corpus,
                const std::vector<QAExample>& qa, int k, int n_q, std::vector<EvalRecord>* records) {
  if (qa.empty()) throw std::invalid_argument("accuracy: empty qa set");
  std::unordered_map<std::string, const Document*> by_id;
  for (const auto& d : corpus) by_id[d.doc_id] = &d;
  int64_t correct = 0;
  if (records) records->clear();
  for (size_t i = 0; i < qa.size(); ++i) {
    std::vector<std::string> docs;
    if (k > 0) docs = top_doc_texts(encoder, index, vocab, by_id, qa[i].question, k, n_q);
    int pred = predict_option(reader, vocab, docs, qa[i]);
    bool ok = pred == qa[i].gold_index;
    correct += ok ? 1 : 0;
    if (records) records->push_back({static_cast<int>(i), pred, qa[i].gold_index, ok});
  }
  return static_cast<double>(correct) / static_cast<double>(qa.size());
}

double hit_at_k(const LateInteractionEncoder& encoder, const DocIndex& index, const Vocab& vocab,
                const std::vector<QAExample>& qa, const PlantedMap& planted, int k, int n_q) {
  if (qa.empty()) throw std::invalid_argument("hit_at_k: empty qa set");
  std::unordered_map<int, const std::string*> by_index;
  for (const auto& [idx, doc_id] : planted) by_index[idx] = &doc_id;
  for (size_t i = 0; i < qa.size(); ++i)
    if (!by_index.count(static_cast<int>(i)))
      throw std::invalid_argument("hit_at_k: planted map misses question " + std::to_string(i));
  NoGradGuard ng;
  int64_t hits = 0;
  for (size_t i = 0; i < qa.size(); ++i) {
    Tensor q_bag = encoder.encode_query(build_query_ids(vocab, qa[i].question, n_q));
    std::vector<ScoredDoc> top = index.topk(q_bag, k, encoder.revision());
    const std::string& want = *by_index[static_cast<int>(i)];
    for (const auto& sd : top)
      if (sd.doc_id == want) {
        ++hits;
        break;
      }
  }
  return static_cast<double>(hits) / static_cast<double>(qa.size());
}

std::vector<SweepRow> doc_count_sweep(const ReaderModel& reader, const Vocab& vocab,
                                      const LateInteractionEncoder& encoder, const DocIndex& index,
                                      const std::vector<Document>& corpus,
                                      const std::vector<QAExample>& qa,
                                      const std::vector<int>& k_values, int n_q) {
  std::vector<int> ks = k_values;
  std::sort(ks.begin(), ks.end());
  std::vector<SweepRow> rows;
  for (int k : ks) {
    if (k > index.size()) {
      std::cerr << "doc_count_sweep: skipping k=" << k << " (corpus has " << index.size() << " docs)\n";
      continue;
    }
    rows.push_back({k, accuracy(reader, vocab, encoder, index, corpus, qa, k, n_q)});
  }
  return rows;
}

}  // namespace jrl
