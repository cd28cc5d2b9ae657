// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0
//
// Planted-knowledge QA generator. Every (entity, property) fact is stated by
// exactly one corpus document; the fact's value token appears nowhere else,
// so hit@k against the planted map is an exact oracle for retrieval
// usefulness.

#ifndef JRL_SYNTHETIC_HPP_
#define JRL_SYNTHETIC_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "jrl/text.hpp"

namespace jrl {

struct TaskSpec {
  int n_entities = 200;
  int n_properties = 4;
  int n_distractor_docs = 400;
  int options_per_question = 4;
  int vocab_size = 1200;  // budget of distinct generated word tokens
  uint64_t seed = 0;
  bool with_rationale = false;
};

// One planted-map row: question index within its QA file -> planted doc id.
using PlantedMap = std::vector<std::pair<int, std::string>>;

struct GeneratedTask {
  std::vector<Document> corpus;
  std::vector<QAExample> train_qa;
  std::vector<QAExample> dev_qa;
  PlantedMap train_planted;
  PlantedMap dev_planted;
};

// Deterministic in the spec seed; same spec -> byte-identical files.
// Raises std::invalid_argument when the spec cannot produce distinct options
// or the vocabulary budget is too small.
GeneratedTask generate(const TaskSpec& spec);

void save_planted(const std::string& path, const PlantedMap& map);
PlantedMap load_planted(const std::string& path);

}  // namespace jrl

#endif  // JRL_SYNTHETIC_HPP_
