// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#include "jrl/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace jrl {

namespace {

constexpr char kMagic[8] = {'J', 'R', 'L', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& out, const std::string& s) {
  write_pod<uint32_t>(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  uint32_t n = read_pod<uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

uint64_t Checkpoint::payload_digest() const {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [name, t] : tensors)
    h = fnv1a64(t.data().data(), t.data().size() * sizeof(float), h);
  return h;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(out, kVersion);
  write_string(out, meta.dump());
  write_pod<uint64_t>(out, tensors.size());
  uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    write_string(out, name);
    write_pod<uint32_t>(out, static_cast<uint32_t>(t.ndim()));
    for (int64_t d : t.shape()) write_pod<uint64_t>(out, static_cast<uint64_t>(d));
    write_pod<uint64_t>(out, offset);
    offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
  }
  write_pod<uint64_t>(out, offset);            // payload length
  write_pod<uint64_t>(out, payload_digest());  // payload digest
  for (const auto& [name, t] : tensors)
    out.write(reinterpret_cast<const char*>(t.data().data()),
              static_cast<std::streamsize>(t.data().size() * sizeof(float)));
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: " + path + " is not a checkpoint container");
  uint32_t version = read_pod<uint32_t>(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.meta = nlohmann::json::parse(read_string(in), nullptr, false);
  if (ckpt.meta.is_discarded()) throw std::runtime_error("checkpoint: corrupt metadata in " + path);
  uint64_t n_tensors = read_pod<uint64_t>(in);
  struct Dir {
    std::string name;
    std::vector<int64_t> shape;
    uint64_t offset;
  };
  std::vector<Dir> dir;
  dir.reserve(n_tensors);
  for (uint64_t i = 0; i < n_tensors; ++i) {
    Dir d;
    d.name = read_string(in);
    uint32_t ndim = read_pod<uint32_t>(in);
    for (uint32_t k = 0; k < ndim; ++k) d.shape.push_back(static_cast<int64_t>(read_pod<uint64_t>(in)));
    d.offset = read_pod<uint64_t>(in);
    dir.push_back(std::move(d));
  }
  uint64_t payload_len = read_pod<uint64_t>(in);
  uint64_t digest = read_pod<uint64_t>(in);
  std::vector<char> payload(payload_len);
  in.read(payload.data(), static_cast<std::streamsize>(payload_len));
  if (!in) throw std::runtime_error("checkpoint: truncated payload in " + path);
  uint64_t actual = fnv1a64(payload.data(), payload.size());
  if (actual != digest)
    throw std::runtime_error("checkpoint: digest mismatch in " + path + " (file corrupt)");
  for (const auto& d : dir) {
    int64_t numel = 1;
    for (int64_t s : d.shape) numel *= s;
    std::vector<float> data(static_cast<size_t>(numel));
    if (d.offset + data.size() * sizeof(float) > payload_len)
      throw std::runtime_error("checkpoint: tensor '" + d.name + "' overruns payload");
    std::memcpy(data.data(), payload.data() + d.offset, data.size() * sizeof(float));
    ckpt.add(d.name, Tensor::from(d.shape, std::move(data)));
  }
  return ckpt;
}

uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_digest: cannot open " + path);
  uint64_t h = 0xcbf29ce484222325ull;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    std::streamsize got = in.gcount();
    if (got > 0) h = fnv1a64(buf, static_cast<size_t>(got), h);
  }
  return h;
}

namespace {

Tensor vec_tensor(const std::vector<float>& v) {
  return Tensor::from({static_cast<int64_t>(v.size())}, v);
}

void copy_into(const Checkpoint& ckpt, const std::string& name, Tensor& dst) {
  const Tensor* src = ckpt.find(name);
  if (!src) throw std::runtime_error("checkpoint: missing tensor '" + name + "'");
  if (src->shape() != dst.shape())
    throw std::runtime_error("checkpoint: tensor '" + name + "' has shape " + shape_str(src->shape()) +
                             ", expected " + shape_str(dst.shape()));
  std::copy(src->data().begin(), src->data().end(), dst.data().begin());
}

void serialize_index(Checkpoint& ckpt, const DocIndex& index) {
  nlohmann::json idx;
  idx["revision"] = index.revision();
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& e : index.entries()) ids.push_back(e.doc_id);
  idx["doc_ids"] = ids;
  idx["d_emb"] = index.d_emb();
  ckpt.meta["index"] = idx;
  char buf[16];
  for (size_t i = 0; i < index.entries().size(); ++i) {
    const auto& e = index.entries()[i];
    std::snprintf(buf, sizeof(buf), "%08zu", i);
    ckpt.add(std::string("index:") + buf,
             Tensor::from({e.n_rows, index.d_emb()}, e.rows));
  }
}

void restore_index(const Checkpoint& ckpt, DocIndex& index) {
  if (!ckpt.meta.contains("index")) return;
  const auto& idx = ckpt.meta["index"];
  int64_t d_emb = idx["d_emb"].get<int64_t>();
  std::vector<DocIndex::Entry> entries;
  char buf[16];
  size_t i = 0;
  for (const auto& id : idx["doc_ids"]) {
    std::snprintf(buf, sizeof(buf), "%08zu", i);
    const Tensor* t = ckpt.find(std::string("index:") + buf);
    if (!t) throw std::runtime_error("checkpoint: missing index entry " + std::to_string(i));
    DocIndex::Entry e;
    e.doc_id = id.get<std::string>();
    e.n_rows = t->dim(0);
    e.rows.assign(t->data().begin(), t->data().end());
    entries.push_back(std::move(e));
    ++i;
  }
  index.restore(std::move(entries), d_emb, idx["revision"].get<int64_t>());
}

}  // namespace

void serialize_models(Checkpoint& ckpt, const TrainConfig& cfg, const Vocab& vocab,
                      const ReaderModel& reader, const LateInteractionEncoder& encoder,
                      const DocIndex& index) {
  ckpt.meta["format"] = "jrl";
  ckpt.meta["config"] = train_config_to_json(cfg);
  ckpt.meta["vocab"] = vocab.tokens();
  ckpt.meta["encoder_revision"] = encoder.revision();
  for (const auto& p : reader.parameters()) ckpt.add("param:" + p.name(), p);
  for (const auto& p : encoder.parameters()) ckpt.add("param:" + p.name(), p);
  serialize_index(ckpt, index);
}

void Trainer::serialize_state(Checkpoint& ckpt) const {
  ckpt.meta["format"] = "jrl";
  ckpt.meta["config"] = train_config_to_json(cfg_);
  ckpt.meta["vocab"] = vocab_.tokens();
  ckpt.meta["step"] = step_;
  ckpt.meta["next_epoch"] = next_epoch_;
  ckpt.meta["total_steps"] = total_steps_;
  ckpt.meta["best_dev"] = best_dev_;
  ckpt.meta["best_epoch"] = best_epoch_;
  ckpt.meta["warmed_up"] = warmed_up_;
  ckpt.meta["encoder_revision"] = encoder_.revision();
  ckpt.meta["rng"] = {{"sample", rng_sample_.serialize()},
                      {"shuffle", rng_shuffle_.serialize()},
                      {"warmup", rng_warmup_.serialize()}};
  ckpt.meta["opt"] = {{"reader_steps", reader_opt_.step_count()},
                      {"retriever_steps", retriever_opt_.step_count()}};
  for (const auto& p : reader_.parameters()) ckpt.add("param:" + p.name(), p);
  for (const auto& p : encoder_.parameters()) ckpt.add("param:" + p.name(), p);
  const auto& rp = reader_.parameters();
  for (size_t i = 0; i < rp.size(); ++i) {
    ckpt.add("adam_m:" + rp[i].name(), vec_tensor(reader_opt_.moments_m()[i]));
    ckpt.add("adam_v:" + rp[i].name(), vec_tensor(reader_opt_.moments_v()[i]));
  }
  const auto& ep = encoder_.parameters();
  for (size_t i = 0; i < ep.size(); ++i) {
    ckpt.add("adam_m:" + ep[i].name(), vec_tensor(retriever_opt_.moments_m()[i]));
    ckpt.add("adam_v:" + ep[i].name(), vec_tensor(retriever_opt_.moments_v()[i]));
  }
  serialize_index(ckpt, index_);
}

void Trainer::restore_state(const Checkpoint& ckpt) {
  Vocab stored = Vocab::from_tokens(ckpt.meta["vocab"].get<std::vector<std::string>>());
  if (stored.size() != vocab_.size())
    throw std::runtime_error("checkpoint: vocab size " + std::to_string(stored.size()) +
                             " does not match data-derived vocab " + std::to_string(vocab_.size()));
  vocab_ = std::move(stored);
  for (auto& p : reader_.parameters()) copy_into(ckpt, "param:" + p.name(), p);
  for (auto& p : encoder_.parameters()) copy_into(ckpt, "param:" + p.name(), p);
  auto restore_moments = [&](AdamW& opt, const std::vector<Tensor>& params) {
    for (size_t i = 0; i < params.size(); ++i) {
      const Tensor* m = ckpt.find("adam_m:" + params[i].name());
      const Tensor* v = ckpt.find("adam_v:" + params[i].name());
      if (!m || !v) throw std::runtime_error("checkpoint: missing optimizer state for " + params[i].name());
      opt.moments_m()[i].assign(m->data().begin(), m->data().end());
      opt.moments_v()[i].assign(v->data().begin(), v->data().end());
    }
  };
  restore_moments(reader_opt_, reader_.parameters());
  restore_moments(retriever_opt_, encoder_.parameters());
  reader_opt_.set_step_count(ckpt.meta["opt"]["reader_steps"].get<int64_t>());
  retriever_opt_.set_step_count(ckpt.meta["opt"]["retriever_steps"].get<int64_t>());
  step_ = ckpt.meta["step"].get<int64_t>();
  next_epoch_ = ckpt.meta["next_epoch"].get<int>();
  best_dev_ = ckpt.meta["best_dev"].get<double>();
  best_epoch_ = ckpt.meta["best_epoch"].get<int>();
  warmed_up_ = ckpt.meta["warmed_up"].get<bool>();
  encoder_.set_revision(ckpt.meta["encoder_revision"].get<int64_t>());
  rng_sample_.deserialize(ckpt.meta["rng"]["sample"].get<std::string>());
  rng_shuffle_.deserialize(ckpt.meta["rng"]["shuffle"].get<std::string>());
  rng_warmup_.deserialize(ckpt.meta["rng"]["warmup"].get<std::string>());
  restore_index(ckpt, index_);
  cand_cache_.clear();
  bag_cache_.clear();
  bag_cache_revision_ = -2;
}

LoadedBundle load_bundle(const Checkpoint& ckpt) {
  LoadedBundle b;
  b.cfg = train_config_from_json(ckpt.meta["config"]);
  b.vocab = Vocab::from_tokens(ckpt.meta["vocab"].get<std::vector<std::string>>());
  Rng dummy(0);
  b.reader = ReaderModel(b.cfg.reader, dummy);
  b.encoder = LateInteractionEncoder(b.cfg.retriever, dummy);
  for (auto& p : b.reader.parameters()) copy_into(ckpt, "param:" + p.name(), p);
  for (auto& p : b.encoder.parameters()) copy_into(ckpt, "param:" + p.name(), p);
  b.encoder.set_revision(ckpt.meta["encoder_revision"].get<int64_t>());
  restore_index(ckpt, b.index);
  return b;
}

}  // namespace jrl
