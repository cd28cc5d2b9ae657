// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0
//
// Single-file checkpoint container: fixed binary header (magic, version,
// metadata JSON, tensor directory with name/shape/offset) followed by
// little-endian float32 payloads. A 64-bit FNV-1a digest of the payload is
// stored in the header and verified on load.

#ifndef JRL_CHECKPOINT_HPP_
#define JRL_CHECKPOINT_HPP_

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "jrl/tensor.hpp"
#include "jrl/trainer.hpp"

namespace jrl {

class Checkpoint {
 public:
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;  // fixed order

  void add(const std::string& name, const Tensor& t) { tensors.emplace_back(name, t); }
  const Tensor* find(const std::string& name) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  uint64_t payload_digest() const;
};

uint64_t file_digest(const std::string& path);

// Model-only view of a checkpoint, enough to evaluate.
struct LoadedBundle {
  TrainConfig cfg;
  Vocab vocab;
  ReaderModel reader;
  LateInteractionEncoder encoder;
  DocIndex index;
};

LoadedBundle load_bundle(const Checkpoint& ckpt);

// Writes the model-only sections (config, vocab, parameters, index); the
// trainer adds optimizer and rng state on top of this for resumable runs.
void serialize_models(Checkpoint& ckpt, const TrainConfig& cfg, const Vocab& vocab,
                      const ReaderModel& reader, const LateInteractionEncoder& encoder,
                      const DocIndex& index);

}  // namespace jrl

#endif  // JRL_CHECKPOINT_HPP_
