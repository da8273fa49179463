#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mgtd/error.hpp"
#include "mgtd/rng.hpp"
#include "mgtd/tokenize.hpp"

namespace mgtd::corpus {

enum class Label { Human, Machine };

inline const char* label_name(Label l) {
  return l == Label::Human ? "human" : "machine";
}

inline Label parse_label(const std::string& s) {
  std::string f = tok::fold_case(s);
  if (f == "human") return Label::Human;
  if (f == "machine") return Label::Machine;
  throw DataError("unknown label: \"" + s + "\" (expected \"human\" or \"machine\")");
}

struct LabeledText {
  std::string id;
  std::string text;
  Label label = Label::Human;
  std::optional<std::string> domain;
  std::optional<std::string> generator;
};

inline bool whitespace_only(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

inline nlohmann::json to_json(const LabeledText& r) {
  nlohmann::json j{{"id", r.id}, {"text", r.text}, {"label", label_name(r.label)}};
  if (r.domain) j["domain"] = *r.domain;
  if (r.generator) j["generator"] = *r.generator;
  return j;
}

inline LabeledText from_json(const nlohmann::json& j) {
  LabeledText r;
  r.id = j.at("id").get<std::string>();
  r.text = j.at("text").get<std::string>();
  r.label = parse_label(j.at("label").get<std::string>());
  if (j.contains("domain")) r.domain = j.at("domain").get<std::string>();
  if (j.contains("generator")) r.generator = j.at("generator").get<std::string>();
  return r;
}

/// Reads records from a JSONL file. Each line must be a JSON object with at
/// least "text" and "label"; "id", "domain" and "generator" are optional.
/// Lines whose only key is "_meta" carry file metadata and are skipped.
/// Missing ids become "<filename>:<line>".
inline std::vector<LabeledText> load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw DataError("cannot open " + path);

  std::string filename = path;
  if (auto pos = filename.find_last_of('/'); pos != std::string::npos) {
    filename = filename.substr(pos + 1);
  }

  std::vector<LabeledText> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (whitespace_only(line)) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
    }
    if (!j.is_object()) {
      throw DataError(path + ":" + std::to_string(lineno) + ": line is not a JSON object");
    }
    if (j.size() == 1 && j.contains("_meta")) continue;
    if (!j.contains("text") || !j.contains("label")) {
      throw DataError(path + ":" + std::to_string(lineno) + ": missing \"text\" or \"label\"");
    }
    LabeledText r;
    try {
      r.text = j.at("text").get<std::string>();
      r.label = parse_label(j.at("label").get<std::string>());
    } catch (const DataError& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad field type: " + e.what());
    }
    if (r.text.empty() || whitespace_only(r.text)) {
      throw DataError(path + ":" + std::to_string(lineno) + ": empty text");
    }
    r.id = j.value("id", filename + ":" + std::to_string(lineno));
    if (j.contains("domain")) r.domain = j.at("domain").get<std::string>();
    if (j.contains("generator")) r.generator = j.at("generator").get<std::string>();
    out.push_back(std::move(r));
  }
  return out;
}

/// Writes records as JSONL. When `meta` is non-null it is emitted first as
/// {"_meta": ...}; load_jsonl skips that line.
inline void save_jsonl(const std::string& path, const std::vector<LabeledText>& records,
                       const nlohmann::json* meta = nullptr) {
  std::ofstream out(path, std::ios::trunc);
  if (!out.is_open()) throw DataError("cannot write " + path);
  if (meta != nullptr) out << nlohmann::json{{"_meta", *meta}}.dump() << "\n";
  for (const auto& r : records) out << to_json(r).dump() << "\n";
}

struct FewShotSplit {
  int shots = 0;
  uint64_t seed = 0;
  std::vector<LabeledText> train;
  std::vector<LabeledText> test;

  bool test_empty() const { return test.empty(); }
};

/// Class-balanced few-shot sampling, deterministic in (corpus order, shots,
/// seed). Odd shot counts give the extra example to the HUMAN class. The test
/// set is the complement by id unless an explicit one is supplied.
inline FewShotSplit sample_few_shot(const std::vector<LabeledText>& corpus, int shots,
                                    uint64_t seed,
                                    const std::vector<LabeledText>* explicit_test = nullptr) {
  if (shots <= 0) throw DataError("sample_few_shot: shots must be positive");
  const int want_human = shots - shots / 2;
  const int want_machine = shots / 2;

  std::vector<size_t> human_idx, machine_idx;
  for (size_t i = 0; i < corpus.size(); ++i) {
    (corpus[i].label == Label::Human ? human_idx : machine_idx).push_back(i);
  }
  auto check = [](size_t have, int want, const char* cls) {
    if (static_cast<int>(have) < want) {
      throw DataError(std::string("sample_few_shot: class ") + cls + " has " +
                      std::to_string(have) + " examples, need " + std::to_string(want));
    }
  };
  check(human_idx.size(), want_human, "human");
  check(machine_idx.size(), want_machine, "machine");

  rng::SplitMix64 g(rng::derive(seed, "few_shot"));
  rng::shuffle(human_idx, g);
  rng::shuffle(machine_idx, g);

  std::vector<size_t> chosen(human_idx.begin(), human_idx.begin() + want_human);
  chosen.insert(chosen.end(), machine_idx.begin(), machine_idx.begin() + want_machine);
  std::sort(chosen.begin(), chosen.end());

  FewShotSplit split;
  split.shots = shots;
  split.seed = seed;
  std::unordered_set<std::string> train_ids;
  for (size_t i : chosen) {
    split.train.push_back(corpus[i]);
    train_ids.insert(corpus[i].id);
  }
  if (explicit_test != nullptr) {
    split.test = *explicit_test;
  } else {
    for (const auto& r : corpus) {
      if (!train_ids.count(r.id)) split.test.push_back(r);
    }
  }
  return split;
}

/// Splits each text into pieces of at most `length_tokens` word tokens.
/// Chunk ids are "<id>#<index>". A trailing piece shorter than half the
/// target length is dropped.
inline std::vector<LabeledText> chunk(const std::vector<LabeledText>& corpus,
                                      int length_tokens) {
  if (length_tokens < 1) throw DataError("chunk: length_tokens must be >= 1");
  std::vector<LabeledText> out;
  for (const auto& r : corpus) {
    tok::TokenizedDoc doc = tok::tokenize_words(r.text);
    const size_t n = doc.words.size();
    size_t index = 0;
    for (size_t start = 0; start < n; start += length_tokens, ++index) {
      size_t stop = std::min(n, start + static_cast<size_t>(length_tokens));
      size_t len = stop - start;
      if (2 * len < static_cast<size_t>(length_tokens)) break;  // drop short tail
      LabeledText piece = r;
      piece.id = r.id + "#" + std::to_string(index);
      piece.text = r.text.substr(doc.words[start].begin,
                                 doc.words[stop - 1].end - doc.words[start].begin);
      out.push_back(std::move(piece));
    }
  }
  return out;
}

/// Keeps records whose tags match the given filters (empty = no constraint).
inline std::vector<LabeledText> filter_tags(const std::vector<LabeledText>& corpus,
                                            const std::string& domain = "",
                                            const std::string& generator = "") {
  std::vector<LabeledText> out;
  for (const auto& r : corpus) {
    if (!domain.empty() && (!r.domain || *r.domain != domain)) continue;
    if (!generator.empty() && (!r.generator || *r.generator != generator)) continue;
    out.push_back(r);
  }
  return out;
}

}  // namespace mgtd::corpus
