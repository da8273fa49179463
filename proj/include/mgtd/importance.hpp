#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mgtd/error.hpp"
#include "mgtd/tokenize.hpp"

namespace mgtd::importance {

/// Per-token importance. Lower raw score = more important. A token is in the
/// important set when its normalized score falls below the threshold alpha;
/// important tokens get weight 1 - normalized score, all others weight 0.
struct ImportanceProfile {
  std::vector<double> raw_scores;
  std::vector<double> norm_scores;
  std::vector<uint8_t> important;  // per-token flag
  std::vector<double> weights;
  double alpha = 0.0;

  size_t size() const { return norm_scores.size(); }
  bool is_important(size_t i) const { return important[i] != 0; }

  std::vector<size_t> important_set() const {
    std::vector<size_t> k;
    for (size_t i = 0; i < important.size(); ++i) {
      if (important[i]) k.push_back(i);
    }
    return k;
  }
};

/// Maps an unbounded non-negative score into [0, 1): s / (1 + s).
/// Strictly increasing, so score ordering is preserved.
inline std::vector<double> normalize_scores(const std::vector<double>& raw) {
  std::vector<double> out(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] < 0.0) throw DataError("normalize_scores: negative score");
    out[i] = raw[i] / (1.0 + raw[i]);
  }
  return out;
}

namespace detail {

struct TermStats {
  int tf = 0;
  int tf_upper = 0;    // uppercase-initial occurrences not at sentence start
  int tf_acronym = 0;  // all-caps occurrences
  std::vector<int> positions;  // 1-based word indices
  std::unordered_set<int> sentences;
  std::unordered_set<std::string> left_terms, right_terms;
  int left_slots = 0, right_slots = 0;
};

inline double median_of(std::vector<int>& v) {
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  if (n % 2 == 1) return static_cast<double>(v[n / 2]);
  return (static_cast<double>(v[n / 2 - 1]) + static_cast<double>(v[n / 2])) / 2.0;
}

}  // namespace detail

/// Statistical keyword scoring over word tokens (casing, position, frequency,
/// context relatedness, sentence dispersion). Lower scores mark more
/// important tokens; identical case-folded surfaces share one score. Context
/// windows stop at sentence edges, padding a virtual boundary marker so every
/// occurrence has both-side context. Docs with fewer than two tokens fall
/// back to a neutral score of 1.0 (normalized 0.5) for every token.
inline std::vector<double> yake_score(const tok::TokenizedDoc& doc, int window = 1) {
  const size_t n = doc.words.size();
  if (n == 0) return {};
  if (window < 1) throw DataError("yake_score: window must be >= 1");
  if (n < 2) return std::vector<double>(n, 1.0);

  std::vector<std::string> folded(n);
  for (size_t i = 0; i < n; ++i) folded[i] = tok::fold_case(doc.words[i].surface);

  // first token index of each sentence, for the casing feature
  std::unordered_map<int, size_t> sentence_head;
  for (size_t i = 0; i < n; ++i) {
    sentence_head.emplace(doc.words[i].sentence_index, i);
  }

  std::unordered_map<std::string, detail::TermStats> stats;
  for (size_t i = 0; i < n; ++i) {
    auto& st = stats[folded[i]];
    st.tf += 1;
    st.positions.push_back(static_cast<int>(i) + 1);
    st.sentences.insert(doc.words[i].sentence_index);
    const std::string& surf = doc.words[i].surface;
    if (tok::is_all_caps(surf)) {
      st.tf_acronym += 1;
    } else if (tok::starts_uppercase(surf) &&
               sentence_head[doc.words[i].sentence_index] != i) {
      st.tf_upper += 1;
    }

    const int sent = doc.words[i].sentence_index;
    bool hit_edge = false;
    for (int k = 1; k <= window; ++k) {
      if (i >= static_cast<size_t>(k) && doc.words[i - k].sentence_index == sent) {
        st.left_terms.insert(folded[i - k]);
        st.left_slots += 1;
      } else {
        hit_edge = true;
        break;
      }
    }
    if (hit_edge) {
      st.left_terms.insert("<s>");
      st.left_slots += 1;
    }
    hit_edge = false;
    for (int k = 1; k <= window; ++k) {
      if (i + k < n && doc.words[i + k].sentence_index == sent) {
        st.right_terms.insert(folded[i + k]);
        st.right_slots += 1;
      } else {
        hit_edge = true;
        break;
      }
    }
    if (hit_edge) {
      st.right_terms.insert("</s>");
      st.right_slots += 1;
    }
  }

  double tf_sum = 0.0, tf_max = 0.0;
  for (const auto& [term, st] : stats) {
    tf_sum += st.tf;
    tf_max = std::max(tf_max, static_cast<double>(st.tf));
  }
  const double tf_mean = tf_sum / static_cast<double>(stats.size());
  double var = 0.0;
  for (const auto& [term, st] : stats) {
    var += (st.tf - tf_mean) * (st.tf - tf_mean);
  }
  const double tf_std = std::sqrt(var / static_cast<double>(stats.size()));

  std::unordered_map<std::string, double> term_score;
  for (auto& [term, st] : stats) {
    const double tf = static_cast<double>(st.tf);
    const double t_case =
        static_cast<double>(std::max(st.tf_upper, st.tf_acronym)) / (1.0 + std::log(tf));
    const double t_pos = std::log(std::log(3.0 + detail::median_of(st.positions)));
    const double t_fnorm = tf / (tf_mean + tf_std);
    const double dl = static_cast<double>(st.left_terms.size()) / st.left_slots;
    const double dr = static_cast<double>(st.right_terms.size()) / st.right_slots;
    const double t_rel = 1.0 + (dl + dr) * (tf / tf_max);
    const double t_sent =
        static_cast<double>(st.sentences.size()) / static_cast<double>(doc.sentence_count);
    term_score[term] =
        (t_rel * t_pos) / (t_case + t_fnorm / t_rel + t_sent / t_rel);
  }

  std::vector<double> out(n);
  for (size_t i = 0; i < n; ++i) out[i] = term_score[folded[i]];
  return out;
}

inline ImportanceProfile profile_from_norm_scores(std::vector<double> norm, double alpha,
                                                  std::vector<double> raw = {}) {
  if (alpha < 0.0 || alpha > 1.0) throw DataError("alpha must be in [0, 1]");
  ImportanceProfile p;
  p.alpha = alpha;
  if (raw.empty()) {
    raw.resize(norm.size());
    for (size_t i = 0; i < norm.size(); ++i) raw[i] = norm[i] / (1.0 - norm[i]);
  }
  p.raw_scores = std::move(raw);
  p.norm_scores = std::move(norm);
  p.important.resize(p.norm_scores.size());
  p.weights.resize(p.norm_scores.size());
  for (size_t i = 0; i < p.norm_scores.size(); ++i) {
    p.important[i] = p.norm_scores[i] < alpha ? 1 : 0;
    p.weights[i] = p.important[i] ? 1.0 - p.norm_scores[i] : 0.0;
  }
  return p;
}

inline ImportanceProfile build_profile(const tok::TokenizedDoc& doc, double alpha,
                                       int window = 1) {
  std::vector<double> raw = yake_score(doc, window);
  std::vector<double> norm = normalize_scores(raw);
  return profile_from_norm_scores(std::move(norm), alpha, std::move(raw));
}

/// Projects word-level weights onto subword spans: a subword inherits the
/// weight and importance flag of the word whose span contains its first byte.
/// Spans outside any word (special tokens, inter-word bytes) get weight 0.
inline std::pair<std::vector<double>, std::vector<uint8_t>> map_to_subwords(
    const ImportanceProfile& profile, const tok::TokenizedDoc& doc,
    const std::vector<std::pair<size_t, size_t>>& subword_spans, size_t text_size) {
  std::vector<double> weights(subword_spans.size(), 0.0);
  std::vector<uint8_t> flags(subword_spans.size(), 0);
  for (size_t s = 0; s < subword_spans.size(); ++s) {
    auto [b, e] = subword_spans[s];
    if (b > e || e > text_size) {
      throw DataError("map_to_subwords: span outside text");
    }
    if (b == e) continue;  // special token
    // locate the word containing byte b
    auto it = std::upper_bound(doc.words.begin(), doc.words.end(), b,
                               [](size_t v, const tok::Word& w) { return v < w.begin; });
    if (it == doc.words.begin()) continue;
    --it;
    if (b >= it->begin && b < it->end) {
      size_t w = static_cast<size_t>(it - doc.words.begin());
      weights[s] = profile.weights[w];
      flags[s] = profile.important[w];
    }
  }
  return {std::move(weights), std::move(flags)};
}

inline nlohmann::json profile_to_json(const ImportanceProfile& p) {
  return nlohmann::json{
      {"scores", p.norm_scores}, {"k", p.important_set()}, {"w", p.weights}};
}

inline ImportanceProfile profile_from_json(const nlohmann::json& j, double alpha) {
  ImportanceProfile p;
  p.alpha = alpha;
  p.norm_scores = j.at("scores").get<std::vector<double>>();
  p.raw_scores.resize(p.norm_scores.size());
  for (size_t i = 0; i < p.norm_scores.size(); ++i) {
    p.raw_scores[i] = p.norm_scores[i] / (1.0 - p.norm_scores[i]);
  }
  p.weights = j.at("w").get<std::vector<double>>();
  p.important.assign(p.norm_scores.size(), 0);
  for (size_t idx : j.at("k").get<std::vector<size_t>>()) p.important.at(idx) = 1;
  return p;
}

}  // namespace mgtd::importance
