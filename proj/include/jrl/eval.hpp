// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#ifndef JRL_EVAL_HPP_
#define JRL_EVAL_HPP_

#include <map>
#include <set>
#include <string>
#include <vector>

#include "jrl/reader.hpp"
#include "jrl/retriever.hpp"
#include "jrl/synthetic.hpp"
#include "jrl/text.hpp"

namespace jrl {

// Surface-form -> concept-id map. Lookup is case-insensitive after whitespace
// normalization; matching over a text is a longest-match greedy
// left-to-right scan over normalized tokens (multi-word surfaces allowed).
class ConceptLexicon {
 public:
  void add(const std::string& surface, const std::string& concept_id);
  static ConceptLexicon load(const std::string& path);  // jsonl {surface, concept_id}
  size_t size() const { return surfaces_.size(); }

  std::set<std::string> match(const std::string& text) const;

 private:
  // token sequence -> concept id
  std::map<std::vector<std::string>, std::string> surfaces_;
  size_t max_len_ = 0;
};

struct ConceptScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Appendix-style entity overlap: R = |ref∩gen|/|ref|, P = |ref∩gen|/|gen|,
// F1 harmonic mean, empty sets give 0 for the corresponding metric.
ConceptScore concept_f1(const std::string& ref_text, const std::string& gen_text,
                        const ConceptLexicon& lexicon);

struct EvalRecord {
  int index = 0;
  int predicted = 0;
  int gold = 0;
  bool correct = false;
};

// Deterministic top-k retrieval (no sampling) + option prediction.
// k = 0 evaluates without retrieval. Raises on an empty qa set.
double accuracy(const ReaderModel& reader, const Vocab& vocab, const LateInteractionEncoder& encoder,
                const DocIndex& index, const std::vector<Document>& corpus,
                const std::vector<QAExample>& qa, int k, int n_q,
                std::vector<EvalRecord>* records = nullptr);

// Fraction of questions whose planted doc id appears in deterministic top-k.
// The planted map must cover every question index.
double hit_at_k(const LateInteractionEncoder& encoder, const DocIndex& index, const Vocab& vocab,
                const std::vector<QAExample>& qa, const PlantedMap& planted, int k, int n_q);

struct SweepRow {
  int k = 0;
  double accuracy = 0.0;
};

// One deterministic evaluation per k, ascending; k beyond the corpus size is
// skipped with a warning on stderr.
std::vector<SweepRow> doc_count_sweep(const ReaderModel& reader, const Vocab& vocab,
                                      const LateInteractionEncoder& encoder, const DocIndex& index,
                                      const std::vector<Document>& corpus,
                                      const std::vector<QAExample>& qa,
                                      const std::vector<int>& k_values, int n_q);

}  // namespace jrl

#endif  // JRL_EVAL_HPP_
