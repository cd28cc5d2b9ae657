// Copyright (c) 2026 the jrl authors
// SPDX-License-Identifier: Apache-2.0

#include "jrl/synthetic.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "jrl/common.hpp"

namespace jrl {

namespace {

// Fact statements. Every template mentions "the", "is" and "of" so the
// planted document always shares exactly one more question token (entity and
// property both) than any other document; {E} {P} {V} {F} are entity,
// property, value and a filler word.
const char* kFactTemplates[] = {
    "according to the archive of {F} , the {P} of {E} is {V} .",
    "the survey of {F} records {E} as having a {P} that is {V} .",
    "it is said in the circles of {F} that {E} carries a {P} of {V} .",
    "scholars of {F} agree that the {P} belonging to {E} is {V} .",
    "the chronicle of {F} states that {E} shows a {P} that is {V} .",
    "one entry of the ledger of {F} claims the {P} for {E} is {V} .",
};

// Distractors mention fillers and at most an entity, never a property or a
// value, so their question-token overlap stays strictly below a planted doc's.
const char* kDistractorTemplates[] = {
    "travelers of {F} often describe {G} as the quiet place where {H} is found .",
    "{E} is remembered in the stories of {F} alongside {G} .",
    "the market of {F} is busy when {G} arrives with {H} .",
    "little is written of {F} beyond the tale of {G} and {H} .",
    "{E} appears in the songs of {F} long before {G} is named .",
    "the road of {F} winds past {G} where {H} is kept .",
};

// English glue used by the templates and questions; generated words must not
// collide with these.
const char* kGlueWords[] = {
    "according", "to",      "the",    "archive",   "of",     "survey",  "records", "as",
    "having",    "a",       "that",   "it",        "said",   "in",      "circles", "carries",
    "scholars",  "agree",   "belonging", "chronicle", "states", "shows", "one",    "entry",
    "ledger",    "claims",  "for",    "travelers", "often",  "describe", "quiet",  "place",
    "where",     "found",   "remembered", "stories", "alongside", "market", "busy", "arrives",
    "with",      "little",  "written", "beyond",   "tale",   "and",     "appears", "songs",
    "long",      "before",  "named",  "road",      "winds",  "past",    "kept",    "what",
    "is",        "answer",
};

std::string expand(std::string tpl, const std::vector<std::pair<std::string, std::string>>& subs) {
  for (const auto& [key, val] : subs) {
    std::string pat = "{" + key + "}";
    size_t pos;
    while ((pos = tpl.find(pat)) != std::string::npos) tpl.replace(pos, pat.size(), val);
  }
  return tpl;
}

// Pronounceable CVCV.. word of the requested syllable count.
std::string make_word(Rng& rng, int syllables) {
  static const char* kC = "bcdfghjklmnprstvz";
  static const char* kV = "aeiou";
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += kC[rng.uniform_int(17)];
    w += kV[rng.uniform_int(5)];
  }
  return w;
}

std::vector<std::string> make_words(Rng& rng, int count, int syllables,
                                    std::unordered_set<std::string>& used) {
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(count));
  int attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++attempts > count * 200)
      throw std::invalid_argument("generate: word space exhausted, lower the counts");
    std::string w = make_word(rng, syllables);
    if (!used.insert(w).second) continue;
    out.push_back(std::move(w));
  }
  return out;
}

}  // namespace

GeneratedTask generate(const TaskSpec& spec) {
  if (spec.n_entities < 1 || spec.n_properties < 1)
    throw std::invalid_argument("generate: need at least one entity and property");
  if (spec.options_per_question < 2)
    throw std::invalid_argument("generate: options_per_question must be >= 2");
  if (spec.n_distractor_docs < 0) throw std::invalid_argument("generate: negative distractor count");

  int n_facts = spec.n_entities * spec.n_properties;
  int n_decoys = std::max(16, 4 * spec.options_per_question);
  int n_fillers = 120;
  int needed = spec.n_entities + spec.n_properties + n_facts + n_decoys + n_fillers;
  if (needed > spec.vocab_size)
    throw std::invalid_argument("generate: spec too small: needs " + std::to_string(needed) +
                                " generated words, vocab_size is " + std::to_string(spec.vocab_size));

  std::unordered_set<std::string> used;
  for (const char* w : kGlueWords) used.insert(w);

  Rng words_rng = Rng::stream(spec.seed, "task/words");
  std::vector<std::string> entities = make_words(words_rng, spec.n_entities, 3, used);
  std::vector<std::string> properties = make_words(words_rng, spec.n_properties, 2, used);
  std::vector<std::string> values = make_words(words_rng, n_facts, 3, used);
  std::vector<std::string> decoys = make_words(words_rng, n_decoys, 3, used);
  std::vector<std::string> fillers = make_words(words_rng, n_fillers, 2, used);

  Rng doc_rng = Rng::stream(spec.seed, "task/docs");
  struct Fact {
    int entity, property;
    std::string value;
    std::string text;
  };
  std::vector<Fact> facts;
  facts.reserve(static_cast<size_t>(n_facts));
  for (int e = 0; e < spec.n_entities; ++e) {
    for (int p = 0; p < spec.n_properties; ++p) {
      Fact f;
      f.entity = e;
      f.property = p;
      f.value = values[static_cast<size_t>(e * spec.n_properties + p)];
      const char* tpl = kFactTemplates[doc_rng.uniform_int(std::size(kFactTemplates))];
      f.text = expand(tpl, {{"E", entities[static_cast<size_t>(e)]},
                            {"P", properties[static_cast<size_t>(p)]},
                            {"V", f.value},
                            {"F", fillers[doc_rng.uniform_int(fillers.size())]}});
      facts.push_back(std::move(f));
    }
  }

  std::vector<std::string> distractor_texts;
  distractor_texts.reserve(static_cast<size_t>(spec.n_distractor_docs));
  for (int i = 0; i < spec.n_distractor_docs; ++i) {
    const char* tpl = kDistractorTemplates[doc_rng.uniform_int(std::size(kDistractorTemplates))];
    distractor_texts.push_back(
        expand(tpl, {{"E", entities[doc_rng.uniform_int(entities.size())]},
                     {"F", fillers[doc_rng.uniform_int(fillers.size())]},
                     {"G", fillers[doc_rng.uniform_int(fillers.size())]},
                     {"H", fillers[doc_rng.uniform_int(fillers.size())]}}));
  }

  // Interleave facts and distractors in one shuffled corpus; ids follow file
  // order so the planted doc is not positionally marked.
  GeneratedTask out;
  std::vector<int> order(static_cast<size_t>(n_facts + spec.n_distractor_docs));
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng shuffle_rng = Rng::stream(spec.seed, "task/corpus_order");
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);

  int width = 1;
  for (size_t n = order.size(); n >= 10; n /= 10) ++width;
  std::vector<std::string> fact_doc_id(static_cast<size_t>(n_facts));
  for (size_t pos = 0; pos < order.size(); ++pos) {
    std::ostringstream id;
    id << "d";
    std::string num = std::to_string(pos);
    id << std::string(static_cast<size_t>(width) - num.size(), '0') << num;
    Document d;
    d.doc_id = id.str();
    int src = order[pos];
    if (src < n_facts) {
      d.text = facts[static_cast<size_t>(src)].text;
      d.source_tag = "fact";
      fact_doc_id[static_cast<size_t>(src)] = d.doc_id;
    } else {
      d.text = distractor_texts[static_cast<size_t>(src - n_facts)];
      d.source_tag = "distractor";
    }
    out.corpus.push_back(std::move(d));
  }

  // Questions, one per fact. Wrong options come from the decoy pool so no
  // other corpus document can reveal or contradict them.
  Rng q_rng = Rng::stream(spec.seed, "task/questions");
  std::vector<QAExample> all_qa(static_cast<size_t>(n_facts));
  std::vector<std::string> planted(static_cast<size_t>(n_facts));
  for (int f = 0; f < n_facts; ++f) {
    const Fact& fact = facts[static_cast<size_t>(f)];
    QAExample& ex = all_qa[static_cast<size_t>(f)];
    ex.question = "what is the " + properties[static_cast<size_t>(fact.property)] + " of " +
                  entities[static_cast<size_t>(fact.entity)] + " ?";
    std::vector<std::string> opts = {fact.value};
    std::unordered_set<size_t> taken;
    while (static_cast<int>(opts.size()) < spec.options_per_question) {
      size_t pick = q_rng.uniform_int(decoys.size());
      if (!taken.insert(pick).second) continue;
      opts.push_back(decoys[pick]);
    }
    int gold = static_cast<int>(q_rng.uniform_int(static_cast<uint64_t>(spec.options_per_question)));
    std::swap(opts[0], opts[static_cast<size_t>(gold)]);
    ex.options = std::move(opts);
    ex.gold_index = gold;
    if (spec.with_rationale)
      ex.rationale = "the " + properties[static_cast<size_t>(fact.property)] + " of " +
                     entities[static_cast<size_t>(fact.entity)] + " is " + fact.value;
    planted[static_cast<size_t>(f)] = fact_doc_id[static_cast<size_t>(f)];
  }

  // 80/20 split by question; entities are shared across splits, facts are not.
  std::vector<int> qorder(static_cast<size_t>(n_facts));
  for (size_t i = 0; i < qorder.size(); ++i) qorder[i] = static_cast<int>(i);
  Rng split_rng = Rng::stream(spec.seed, "task/split");
  for (size_t i = qorder.size(); i > 1; --i)
    std::swap(qorder[i - 1], qorder[split_rng.uniform_int(i)]);
  int n_train = n_facts == 1 ? 1 : (n_facts * 8) / 10;
  for (int i = 0; i < n_facts; ++i) {
    int f = qorder[static_cast<size_t>(i)];
    if (i < n_train) {
      out.train_planted.emplace_back(static_cast<int>(out.train_qa.size()), planted[static_cast<size_t>(f)]);
      out.train_qa.push_back(all_qa[static_cast<size_t>(f)]);
    } else {
      out.dev_planted.emplace_back(static_cast<int>(out.dev_qa.size()), planted[static_cast<size_t>(f)]);
      out.dev_qa.push_back(all_qa[static_cast<size_t>(f)]);
    }
  }
  return out;
}

void save_planted(const std::string& path, const PlantedMap& map) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_planted: cannot open " + path);
  for (const auto& [idx, doc_id] : map) {
    nlohmann::json j;
    j["question_index"] = idx;
    j["doc_id"] = doc_id;
    out << j.dump() << "\n";
  }
}

PlantedMap load_planted(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_planted: cannot open " + path);
  PlantedMap map;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("question_index") || !j.contains("doc_id"))
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed planted-map record");
    map.emplace_back(j["question_index"].get<int>(), j["doc_id"].get<std::string>());
  }
  return map;
}

}  // namespace jrl
