// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: task generation, indexing, training, evaluation,
// document-count sweeps, checkpoint inspection.

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "jrl/checkpoint.hpp"
#include "jrl/common.hpp"
#include "jrl/eval.hpp"
#include "jrl/synthetic.hpp"
#include "jrl/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string digest8(const json& j) {
  uint64_t h = jrl::fnv1a64(j.dump());
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf).substr(0, 8);
}

fs::path make_run_dir(const fs::path& out, const json& cfg, uint64_t seed) {
  fs::path dir = out / (digest8(cfg) + "-s" + std::to_string(seed));
  fs::create_directories(dir);
  return dir;
}

// One run per run directory; the lock is released when the guard dies.
class RunLock {
 public:
  explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw std::runtime_error("run directory " + dir.string() +
                               " is locked by another run (remove .lock if stale)");
  }
  ~RunLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      std::error_code ec;
      fs::remove(path_, ec);
    }
  }

 private:
  fs::path path_;
  int fd_ = -1;
};

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::runtime_error("malformed JSON in " + path);
  return j;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

struct DataPaths {
  std::string corpus, train_qa, dev_qa, train_planted, dev_planted;
};

DataPaths data_paths_from(const json& cfg) {
  DataPaths d;
  if (!cfg.contains("data")) return d;
  const json& j = cfg["data"];
  if (j.contains("corpus")) d.corpus = j["corpus"].get<std::string>();
  if (j.contains("train_qa")) d.train_qa = j["train_qa"].get<std::string>();
  if (j.contains("dev_qa")) d.dev_qa = j["dev_qa"].get<std::string>();
  if (j.contains("train_planted")) d.train_planted = j["train_planted"].get<std::string>();
  if (j.contains("dev_planted")) d.dev_planted = j["dev_planted"].get<std::string>();
  return d;
}

int cmd_gen_task(const jrl::TaskSpec& spec, const std::string& out_dir) {
  json cfg;
  cfg["cmd"] = "gen-task";
  cfg["entities"] = spec.n_entities;
  cfg["properties"] = spec.n_properties;
  cfg["distractors"] = spec.n_distractor_docs;
  cfg["options"] = spec.options_per_question;
  cfg["vocab"] = spec.vocab_size;
  cfg["rationale"] = spec.with_rationale;
  cfg["seed"] = spec.seed;
  fs::path dir = make_run_dir(out_dir, cfg, spec.seed);
  RunLock lock(dir);
  jrl::GeneratedTask task = jrl::generate(spec);
  jrl::save_corpus((dir / "corpus.jsonl").string(), task.corpus);
  jrl::save_qa((dir / "train_qa.jsonl").string(), task.train_qa);
  jrl::save_qa((dir / "dev_qa.jsonl").string(), task.dev_qa);
  jrl::save_planted((dir / "train_planted.jsonl").string(), task.train_planted);
  jrl::save_planted((dir / "dev_planted.jsonl").string(), task.dev_planted);
  write_text(dir / "config.json", cfg.dump(2) + "\n");
  std::cout << dir.string() << "\n";
  return 0;
}

jrl::TrainConfig effective_train_config(const json& file_cfg) {
  jrl::TrainConfig cfg = jrl::train_config_from_json(file_cfg);
  cfg.validate();
  return cfg;
}

int cmd_index(const std::string& corpus_path, const std::string& checkpoint_path, const json& file_cfg,
              uint64_t seed, const std::string& out_dir) {
  std::vector<jrl::Document> corpus = jrl::load_corpus(corpus_path);
  json cfg_echo;
  cfg_echo["cmd"] = "index";
  cfg_echo["corpus"] = corpus_path;
  cfg_echo["checkpoint"] = checkpoint_path;
  cfg_echo["seed"] = seed;
  fs::path dir = make_run_dir(out_dir, cfg_echo, seed);
  RunLock lock(dir);

  if (!checkpoint_path.empty()) {
    jrl::LoadedBundle b = jrl::load_bundle(jrl::Checkpoint::load(checkpoint_path));
    jrl::DocIndex index;
    index.build(b.encoder, b.vocab, corpus, b.cfg.n_doc_max);
    jrl::Checkpoint out;
    jrl::serialize_models(out, b.cfg, b.vocab, b.reader, b.encoder, index);
    out.save((dir / "index.jrl").string());
  } else {
    jrl::TrainConfig cfg = effective_train_config(file_cfg);
    cfg.seed = seed;
    jrl::Vocab vocab = jrl::build_vocab(corpus, {});
    for (char c = 'a'; c <= 'z'; ++c) vocab.add(std::string(1, c));
    vocab.add(")");
    cfg.reader.vocab_size = vocab.size();
    cfg.retriever.vocab_size = vocab.size();
    cfg.retriever.max_positions = std::max<int64_t>(cfg.n_q + 2, cfg.n_doc_max + 2);
    jrl::Rng reader_rng = jrl::Rng::stream(seed, "init/reader");
    jrl::Rng retr_rng = jrl::Rng::stream(seed, "init/retriever");
    jrl::ReaderModel reader(cfg.reader, reader_rng);
    jrl::LateInteractionEncoder encoder(cfg.retriever, retr_rng);
    jrl::DocIndex index;
    index.build(encoder, vocab, corpus, cfg.n_doc_max);
    jrl::Checkpoint out;
    jrl::serialize_models(out, cfg, vocab, reader, encoder, index);
    out.save((dir / "index.jrl").string());
  }
  std::cout << (dir / "index.jrl").string() << "\n";
  return 0;
}

int cmd_train(json file_cfg, const DataPaths& flags_data, const std::string& resume_dir,
              const std::string& out_dir) {
  DataPaths data = data_paths_from(file_cfg);
  if (!flags_data.corpus.empty()) data.corpus = flags_data.corpus;
  if (!flags_data.train_qa.empty()) data.train_qa = flags_data.train_qa;
  if (!flags_data.dev_qa.empty()) data.dev_qa = flags_data.dev_qa;
  if (!flags_data.train_planted.empty()) data.train_planted = flags_data.train_planted;
  if (!flags_data.dev_planted.empty()) data.dev_planted = flags_data.dev_planted;
  if (data.corpus.empty() || data.train_qa.empty() || data.dev_qa.empty())
    throw std::runtime_error("train: corpus, train_qa and dev_qa paths are required");

  jrl::TrainConfig cfg = effective_train_config(file_cfg);
  json effective = jrl::train_config_to_json(cfg);
  effective["data"] = {{"corpus", data.corpus},
                       {"train_qa", data.train_qa},
                       {"dev_qa", data.dev_qa},
                       {"train_planted", data.train_planted},
                       {"dev_planted", data.dev_planted}};

  fs::path dir;
  if (!resume_dir.empty()) {
    dir = resume_dir;
    if (!fs::exists(dir / "checkpoint_last.jrl"))
      throw std::runtime_error("train: no checkpoint_last.jrl under " + dir.string());
  } else {
    dir = make_run_dir(out_dir, effective, cfg.seed);
  }
  RunLock lock(dir);

  std::vector<jrl::Document> corpus = jrl::load_corpus(data.corpus);
  std::vector<jrl::QAExample> train_qa = jrl::load_qa(data.train_qa);
  std::vector<jrl::QAExample> dev_qa = jrl::load_qa(data.dev_qa);
  jrl::PlantedMap train_planted, dev_planted;
  if (!data.train_planted.empty()) train_planted = jrl::load_planted(data.train_planted);
  if (!data.dev_planted.empty()) dev_planted = jrl::load_planted(data.dev_planted);

  jrl::Trainer trainer(cfg, std::move(corpus), std::move(train_qa), std::move(dev_qa),
                       std::move(train_planted), std::move(dev_planted));

  std::ofstream metrics;
  if (!resume_dir.empty()) {
    jrl::Checkpoint ckpt = jrl::Checkpoint::load((dir / "checkpoint_last.jrl").string());
    trainer.restore_state(ckpt);
    metrics.open(dir / "metrics.jsonl", std::ios::app);
  } else {
    write_text(dir / "config.json", effective.dump(2) + "\n");
    metrics.open(dir / "metrics.jsonl", std::ios::trunc);
  }
  if (!metrics) throw std::runtime_error("train: cannot open metrics log under " + dir.string());

  jrl::RunHooks hooks;
  hooks.log_line = [&](const std::string& line) { metrics << line << "\n" << std::flush; };
  hooks.save_checkpoint = [&](bool is_best) {
    jrl::Checkpoint ckpt;
    trainer.serialize_state(ckpt);
    ckpt.save((dir / "checkpoint_last.jrl").string());
    if (is_best) ckpt.save((dir / "checkpoint_best.jrl").string());
  };

  jrl::RunResult res = trainer.run(hooks);
  if (trainer.config().epochs == 0) hooks.save_checkpoint(false);  // initialized checkpoint
  if (!res.completed) {
    std::cerr << "train: aborted: " << res.abort_reason
              << " (last-good checkpoint: " << (dir / "checkpoint_last.jrl").string() << ")\n";
    return 1;
  }
  json summary;
  summary["run_dir"] = dir.string();
  summary["best_dev_accuracy"] = res.best_dev_accuracy;
  summary["best_epoch"] = res.best_epoch;
  summary["final_dev_accuracy"] = res.final_dev_accuracy;
  if (res.final_hit_at_k >= 0) summary["final_hit_at_k"] = res.final_hit_at_k;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& qa_path, const std::string& corpus_path,
             const std::string& planted_path, int k, const std::string& out_dir) {
  jrl::LoadedBundle b = jrl::load_bundle(jrl::Checkpoint::load(checkpoint_path));
  std::vector<jrl::QAExample> qa = jrl::load_qa(qa_path);
  std::vector<jrl::Document> corpus;
  if (k > 0) {
    if (corpus_path.empty()) throw std::runtime_error("eval: --corpus is required when k > 0");
    corpus = jrl::load_corpus(corpus_path);
  }
  json cfg;
  cfg["cmd"] = "eval";
  cfg["checkpoint"] = checkpoint_path;
  cfg["qa"] = qa_path;
  cfg["corpus"] = corpus_path;
  cfg["planted"] = planted_path;
  cfg["k"] = k;
  fs::path dir = make_run_dir(out_dir, cfg, 0);
  RunLock lock(dir);

  std::vector<jrl::EvalRecord> records;
  double acc = jrl::accuracy(b.reader, b.vocab, b.encoder, b.index, corpus, qa, k, b.cfg.n_q, &records);
  json report;
  report["accuracy"] = acc;
  report["k"] = k;
  report["config_fingerprint"] = digest8(cfg);
  report["n_questions"] = qa.size();
  if (!planted_path.empty() && k > 0) {
    jrl::PlantedMap planted = jrl::load_planted(planted_path);
    report["hit_at_k"] = jrl::hit_at_k(b.encoder, b.index, b.vocab, qa, planted, k, b.cfg.n_q);
  }
  json per = json::array();
  for (const auto& r : records)
    per.push_back({{"index", r.index}, {"predicted", r.predicted}, {"gold", r.gold}, {"correct", r.correct}});
  report["per_question"] = per;
  write_text(dir / "report.json", report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const std::string& checkpoint_path, const std::string& qa_path, const std::string& corpus_path,
              const std::vector<int>& k_values, const std::string& out_dir) {
  jrl::LoadedBundle b = jrl::load_bundle(jrl::Checkpoint::load(checkpoint_path));
  std::vector<jrl::QAExample> qa = jrl::load_qa(qa_path);
  std::vector<jrl::Document> corpus = jrl::load_corpus(corpus_path);
  json cfg;
  cfg["cmd"] = "sweep-docs";
  cfg["checkpoint"] = checkpoint_path;
  cfg["qa"] = qa_path;
  cfg["k_values"] = k_values;
  fs::path dir = make_run_dir(out_dir, cfg, 0);
  RunLock lock(dir);
  std::vector<jrl::SweepRow> rows =
      jrl::doc_count_sweep(b.reader, b.vocab, b.encoder, b.index, corpus, qa, k_values, b.cfg.n_q);
  std::ostringstream csv;
  csv << "k,accuracy\n";
  for (const auto& r : rows) {
    json acc = r.accuracy;  // shortest round-trip formatting
    csv << r.k << "," << acc.dump() << "\n";
  }
  write_text(dir / "sweep.csv", csv.str());
  std::cout << csv.str();
  return 0;
}

int cmd_inspect(const std::string& checkpoint_path) {
  jrl::Checkpoint ckpt = jrl::Checkpoint::load(checkpoint_path);
  int64_t total = 0;
  for (const auto& [name, t] : ckpt.tensors) total += t.numel();
  std::cout << "checkpoint: " << checkpoint_path << "\n";
  std::cout << "tensors: " << ckpt.tensors.size() << " (" << total << " values)\n";
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(ckpt.payload_digest()));
  std::cout << "payload_digest: " << buf << "\n";
  if (ckpt.meta.contains("step")) std::cout << "step: " << ckpt.meta["step"] << "\n";
  if (ckpt.meta.contains("next_epoch")) std::cout << "next_epoch: " << ckpt.meta["next_epoch"] << "\n";
  if (ckpt.meta.contains("config")) std::cout << "config: " << ckpt.meta["config"].dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint retriever-reader training laboratory"};
  app.require_subcommand(1);

  // gen-task
  auto* gen = app.add_subcommand("gen-task", "generate a planted-knowledge task");
  jrl::TaskSpec spec;
  std::string gen_out = "runs";
  gen->add_option("--entities", spec.n_entities);
  gen->add_option("--properties", spec.n_properties);
  gen->add_option("--distractors", spec.n_distractor_docs);
  gen->add_option("--options", spec.options_per_question);
  gen->add_option("--vocab", spec.vocab_size);
  gen->add_option("--seed", spec.seed);
  gen->add_flag("--rationale", spec.with_rationale);
  gen->add_option("--out", gen_out);

  // index
  auto* idx = app.add_subcommand("index", "encode a corpus into a document index");
  std::string idx_corpus, idx_ckpt, idx_config, idx_out = "runs";
  uint64_t idx_seed = 0;
  idx->add_option("--corpus", idx_corpus)->required();
  idx->add_option("--checkpoint", idx_ckpt);
  idx->add_option("--config", idx_config);
  idx->add_option("--seed", idx_seed);
  idx->add_option("--out", idx_out);

  // train
  auto* tr = app.add_subcommand("train", "run a training regime");
  std::string tr_config, tr_resume, tr_out = "runs", tr_regime;
  DataPaths tr_data;
  uint64_t tr_seed = 0;
  int tr_k = -1, tr_m = -1, tr_epochs = -1;
  tr->add_option("--config", tr_config);
  tr->add_option("--seed", tr_seed);
  tr->add_option("--regime", tr_regime);
  tr->add_option("--k", tr_k);
  tr->add_option("--m", tr_m);
  tr->add_option("--epochs", tr_epochs);
  tr->add_option("--resume", tr_resume);
  tr->add_option("--out", tr_out);
  tr->add_option("--corpus", tr_data.corpus);
  tr->add_option("--train-qa", tr_data.train_qa);
  tr->add_option("--dev-qa", tr_data.dev_qa);
  tr->add_option("--train-planted", tr_data.train_planted);
  tr->add_option("--dev-planted", tr_data.dev_planted);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a QA set");
  std::string ev_ckpt, ev_qa, ev_corpus, ev_planted, ev_out = "runs";
  int ev_k = 7;
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--qa", ev_qa)->required();
  ev->add_option("--corpus", ev_corpus);
  ev->add_option("--planted", ev_planted);
  ev->add_option("--k", ev_k);
  ev->add_option("--out", ev_out);

  // sweep-docs
  auto* sw = app.add_subcommand("sweep-docs", "accuracy as a function of retrieved document count");
  std::string sw_ckpt, sw_qa, sw_corpus, sw_out = "runs";
  std::vector<int> sw_ks = {1, 2, 3, 5, 7, 10};
  sw->add_option("--checkpoint", sw_ckpt)->required();
  sw->add_option("--qa", sw_qa)->required();
  sw->add_option("--corpus", sw_corpus)->required();
  sw->add_option("--k-values", sw_ks)->delimiter(',');
  sw->add_option("--out", sw_out);

  // inspect
  auto* insp = app.add_subcommand("inspect", "print checkpoint header and digest");
  std::string insp_ckpt;
  insp->add_option("--checkpoint", insp_ckpt)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;  // usage error
  }

  try {
    if (gen->parsed()) return cmd_gen_task(spec, gen_out);
    if (idx->parsed())
      return cmd_index(idx_corpus, idx_ckpt, idx_config.empty() ? json::object() : load_json_file(idx_config),
                       idx_seed, idx_out);
    if (tr->parsed()) {
      json file_cfg = tr_config.empty() ? json::object() : load_json_file(tr_config);
      if (tr->count("--seed")) file_cfg["seed"] = tr_seed;
      if (tr->count("--regime")) file_cfg["regime"] = tr_regime;
      if (tr->count("--k")) file_cfg["k"] = tr_k;
      if (tr->count("--m")) file_cfg["m"] = tr_m;
      if (tr->count("--epochs")) file_cfg["epochs"] = tr_epochs;
      return cmd_train(std::move(file_cfg), tr_data, tr_resume, tr_out);
    }
    if (ev->parsed()) return cmd_eval(ev_ckpt, ev_qa, ev_corpus, ev_planted, ev_k, ev_out);
    if (sw->parsed()) return cmd_sweep(sw_ckpt, sw_qa, sw_corpus, sw_ks, sw_out);
    if (insp->parsed()) return cmd_inspect(insp_ckpt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
