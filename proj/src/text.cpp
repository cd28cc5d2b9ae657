// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#include "jrl/text.hpp"

#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace jrl {

namespace {

const char* kSpecialNames[kNumSpecialTokens] = {"[PAD]", "[CLS]", "[Q]", "[D]", "[MASK]", "[SEP]", "[UNK]"};

bool is_punct_char(char c) {
  switch (c) {
    case '.':
    case ',':
    case ';':
    case ':':
    case '!':
    case '?':
    case '(':
    case ')':
    case '"':
    case '\'':
      return true;
    default:
      return false;
  }
}

}  // namespace

bool is_punct_token(const std::string& tok) { return tok.size() == 1 && is_punct_char(tok[0]); }

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  size_t i = 0, n = text.size();
  while (i < n) {
    while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i >= n) break;
    size_t j = i;
    while (j < n && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    // chunk [i,j): peel punctuation off both ends
    size_t b = i, e = j;
    size_t lead = b;
    while (lead < e && is_punct_char(text[lead])) ++lead;
    size_t trail = e;
    while (trail > lead && is_punct_char(text[trail - 1])) --trail;
    for (size_t p = b; p < lead; ++p) out.emplace_back(1, text[p]);
    if (trail > lead) out.emplace_back(text.substr(lead, trail - lead));
    for (size_t p = trail; p < e; ++p) out.emplace_back(1, text[p]);
    i = j;
  }
  return out;
}

Vocab::Vocab() {
  for (int i = 0; i < kNumSpecialTokens; ++i) {
    tokens_.emplace_back(kSpecialNames[i]);
    map_[kSpecialNames[i]] = i;
  }
}

int Vocab::add(const std::string& word) {
  auto it = map_.find(word);
  if (it != map_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(word);
  map_[word] = id;
  return id;
}

void Vocab::add_text(const std::string& text) {
  for (const auto& w : split_words(text)) add(w);
}

int Vocab::id_of(const std::string& word) const {
  auto it = map_.find(word);
  return it == map_.end() ? kUnk : it->second;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("Vocab::token_of: id " + std::to_string(id));
  return tokens_[static_cast<size_t>(id)];
}

std::vector<int> Vocab::tokenize(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id_of(w));
  return ids;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (int i = 0; i < kNumSpecialTokens; ++i) {
    if (static_cast<size_t>(i) >= tokens.size() || tokens[static_cast<size_t>(i)] != kSpecialNames[i])
      throw std::runtime_error("Vocab::from_tokens: reserved token table corrupted");
  }
  for (size_t i = kNumSpecialTokens; i < tokens.size(); ++i) v.add(tokens[i]);
  return v;
}

std::vector<int> build_query_ids(const Vocab& vocab, const std::string& question, int n_q) {
  if (n_q < 1) throw std::invalid_argument("build_query_ids: n_q must be >= 1");
  std::vector<int> ids;
  ids.reserve(static_cast<size_t>(n_q) + 2);
  ids.push_back(kCls);
  ids.push_back(kQuery);
  std::vector<int> toks = vocab.tokenize(question);
  for (size_t i = 0; i < toks.size() && static_cast<int>(i) < n_q; ++i) ids.push_back(toks[i]);
  while (ids.size() < static_cast<size_t>(n_q) + 2) ids.push_back(kMask);
  return ids;
}

DocIds build_doc_ids(const Vocab& vocab, const Document& doc, int max_tokens) {
  if (doc.text.empty()) throw std::invalid_argument("build_doc_ids: empty text for doc '" + doc.doc_id + "'");
  DocIds out;
  out.ids = {kCls, kDoc};
  out.punct_mask = {false, false};
  std::vector<std::string> words = split_words(doc.text);
  for (size_t i = 0; i < words.size(); ++i) {
    if (max_tokens > 0 && static_cast<int>(i) >= max_tokens) break;
    out.ids.push_back(vocab.id_of(words[i]));
    out.punct_mask.push_back(is_punct_token(words[i]));
  }
  return out;
}

namespace {

nlohmann::json parse_line(const std::string& line, const std::string& path, size_t lineno) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded())
    throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed record");
  return j;
}

}  // namespace

std::vector<Document> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_corpus: cannot open " + path);
  std::vector<Document> docs;
  std::unordered_set<std::string> seen;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = parse_line(line, path, lineno);
    if (!j.contains("doc_id") || !j.contains("text") || !j["doc_id"].is_string() || !j["text"].is_string())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing doc_id/text");
    Document d;
    d.doc_id = j["doc_id"].get<std::string>();
    d.text = j["text"].get<std::string>();
    d.source_tag = j.value("source", "");
    if (d.text.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": empty text");
    if (!seen.insert(d.doc_id).second)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": duplicate doc_id '" + d.doc_id + "'");
    docs.push_back(std::move(d));
  }
  return docs;
}

std::vector<QAExample> load_qa(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_qa: cannot open " + path);
  std::vector<QAExample> qa;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = parse_line(line, path, lineno);
    if (!j.contains("question") || !j.contains("options") || !j.contains("gold_index"))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": missing question/options/gold_index");
    QAExample ex;
    ex.question = j["question"].get<std::string>();
    if (!j["options"].is_array() || j["options"].size() < 2)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": need at least 2 options");
    for (const auto& o : j["options"]) ex.options.push_back(o.get<std::string>());
    ex.gold_index = j["gold_index"].get<int>();
    if (ex.gold_index < 0 || ex.gold_index >= static_cast<int>(ex.options.size()))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": gold_index " +
                               std::to_string(ex.gold_index) + " outside options [0," +
                               std::to_string(ex.options.size()) + ")");
    if (j.contains("rationale") && !j["rationale"].is_null())
      ex.rationale = j["rationale"].get<std::string>();
    if (j.contains("gold_concepts") && !j["gold_concepts"].is_null()) {
      std::set<std::string> cs;
      for (const auto& c : j["gold_concepts"]) cs.insert(c.get<std::string>());
      ex.gold_concepts = std::move(cs);
    }
    qa.push_back(std::move(ex));
  }
  return qa;
}

void save_corpus(const std::string& path, const std::vector<Document>& docs) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_corpus: cannot open " + path);
  for (const auto& d : docs) {
    nlohmann::json j;
    j["doc_id"] = d.doc_id;
    j["text"] = d.text;
    j["source"] = d.source_tag;
    out << j.dump() << "\n";
  }
}

void save_qa(const std::string& path, const std::vector<QAExample>& qa) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_qa: cannot open " + path);
  for (const auto& ex : qa) {
    nlohmann::json j;
    j["question"] = ex.question;
    j["options"] = ex.options;
    j["gold_index"] = ex.gold_index;
    if (ex.rationale) j["rationale"] = *ex.rationale;
    if (ex.gold_concepts) j["gold_concepts"] = *ex.gold_concepts;
    out << j.dump() << "\n";
  }
}

Vocab build_vocab(const std::vector<Document>& corpus,
                  const std::vector<const std::vector<QAExample>*>& qa_sets) {
  Vocab v;
  for (const auto& d : corpus) v.add_text(d.text);
  for (const auto* qa : qa_sets) {
    for (const auto& ex : *qa) {
      v.add_text(ex.question);
      for (const auto& o : ex.options) v.add_text(o);
      if (ex.rationale) v.add_text(*ex.rationale);
    }
  }
  return v;
}

}  // namespace jrl
