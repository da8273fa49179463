#pragma once

#include <algorithm>
#include <future>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgtd/backends.hpp"
#include "mgtd/corpus.hpp"
#include "mgtd/error.hpp"
#include "mgtd/importance.hpp"
#include "mgtd/rng.hpp"
#include "mgtd/tokenize.hpp"

namespace mgtd::perturb {

inline constexpr const char* kMaskPlaceholder = "<mask>";

enum class MaskStrategy { Random, ProbRank, Importance };

inline const char* strategy_name(MaskStrategy s) {
  switch (s) {
    case MaskStrategy::Random: return "random";
    case MaskStrategy::ProbRank: return "prob_rank";
    default: return "importance";
  }
}

inline MaskStrategy parse_strategy(const std::string& s) {
  if (s == "random") return MaskStrategy::Random;
  if (s == "prob_rank") return MaskStrategy::ProbRank;
  if (s == "importance") return MaskStrategy::Importance;
  throw DataError("unknown mask strategy: " + s);
}

/// Word start indexes chosen for masking. With span > 1 each position covers
/// `span` consecutive words (clipped at the document end) under a single
/// placeholder.
struct MaskPlan {
  std::vector<size_t> positions;
  double proportion = 0.0;
  int gap = 0;
  int span = 1;
  MaskStrategy strategy = MaskStrategy::Importance;
};

/// One left-to-right pass over the document. A token starting at position i
/// is masked with probability P (random), P * rank_weight[i] (prob_rank) or
/// P * [no covered token important] (importance). After a mask the next
/// span-1 covered tokens plus `gap` following tokens are skipped.
inline MaskPlan select_mask_positions(const tok::TokenizedDoc& doc,
                                      const importance::ImportanceProfile& profile,
                                      double proportion, int gap, MaskStrategy strategy,
                                      const std::vector<double>* rank_weights,
                                      uint64_t rng_seed, int span = 1) {
  if (proportion < 0.0 || proportion > 1.0) throw DataError("mask proportion must be in [0, 1]");
  if (gap < 0) throw DataError("mask gap must be >= 0");
  if (span < 1) throw DataError("mask span must be >= 1");
  const size_t n = doc.words.size();
  if (strategy == MaskStrategy::Importance && profile.size() != n) {
    throw DataError("profile length does not match document");
  }
  if (strategy == MaskStrategy::ProbRank &&
      (rank_weights == nullptr || rank_weights->size() != n)) {
    throw DataError("prob_rank strategy requires per-token rank weights");
  }

  MaskPlan plan;
  plan.proportion = proportion;
  plan.gap = gap;
  plan.span = span;
  plan.strategy = strategy;

  rng::SplitMix64 g(rng_seed);
  size_t i = 0;
  while (i < n) {
    const size_t span_eff = std::min(static_cast<size_t>(span), n - i);
    double p = proportion;
    if (strategy == MaskStrategy::Importance) {
      for (size_t j = i; j < i + span_eff; ++j) {
        if (profile.is_important(j)) { p = 0.0; break; }
      }
    } else if (strategy == MaskStrategy::ProbRank) {
      p = proportion * (*rank_weights)[i];
    }
    if (g.uniform() < p) {
      plan.positions.push_back(i);
      i += span_eff + static_cast<size_t>(gap);
    } else {
      ++i;
    }
  }
  return plan;
}

struct MaskedVariant {
  corpus::LabeledText record;
  std::vector<std::string> replaced;  // original text chunk under each placeholder
};

/// Replaces each planned word (or word span) with one placeholder token.
/// Every byte outside the replaced spans is preserved exactly.
inline MaskedVariant apply_masks(const corpus::LabeledText& original,
                                 const tok::TokenizedDoc& doc, const MaskPlan& plan) {
  const size_t n = doc.words.size();
  MaskedVariant out;
  out.record = original;
  out.record.id = original.id + "#mask";

  std::string result;
  size_t cursor = 0;
  size_t prev_end_word = 0;
  for (size_t pos : plan.positions) {
    if (pos >= n) throw DataError("mask position out of range");
    if (!out.replaced.empty() && pos < prev_end_word) {
      throw DataError("mask positions overlap");
    }
    const size_t last = std::min(pos + static_cast<size_t>(plan.span), n) - 1;
    const size_t begin = doc.words[pos].begin;
    const size_t end = doc.words[last].end;
    result.append(original.text, cursor, begin - cursor);
    result.append(kMaskPlaceholder);
    out.replaced.push_back(original.text.substr(begin, end - begin));
    cursor = end;
    prev_end_word = last + 1;
  }
  result.append(original.text, cursor, std::string::npos);
  out.record.text = std::move(result);
  return out;
}

struct FillOutcome {
  bool success = false;
  int sentinel_count = 0;
  int extracted_fill_count = 0;
  int retries_used = 0;
};

inline nlohmann::json to_json(const FillOutcome& o) {
  return {{"success", o.success},
          {"sentinels", o.sentinel_count},
          {"extracted", o.extracted_fill_count},
          {"retries", o.retries_used}};
}

inline FillOutcome fill_outcome_from_json(const nlohmann::json& j) {
  FillOutcome o;
  o.success = j.at("success").get<bool>();
  o.sentinel_count = j.at("sentinels").get<int>();
  o.extracted_fill_count = j.at("extracted").get<int>();
  o.retries_used = j.at("retries").get<int>();
  return o;
}

namespace detail {

inline std::vector<size_t> placeholder_offsets(const std::string& text) {
  std::vector<size_t> offsets;
  size_t pos = 0;
  const std::string needle = kMaskPlaceholder;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    offsets.push_back(pos);
    pos += needle.size();
  }
  return offsets;
}

inline std::string splice(const std::string& masked_text, const std::vector<size_t>& offsets,
                          const std::vector<std::string>& pieces) {
  std::string out;
  size_t cursor = 0;
  const size_t ph_len = std::string(kMaskPlaceholder).size();
  for (size_t k = 0; k < offsets.size(); ++k) {
    out.append(masked_text, cursor, offsets[k] - cursor);
    out.append(pieces[k]);
    cursor = offsets[k] + ph_len;
  }
  out.append(masked_text, cursor, std::string::npos);
  return out;
}

}  // namespace detail

/// Converts placeholders to ordered sentinels, asks the backend for fills and
/// splices them back. A response whose fill count differs from the sentinel
/// count is a failure; failures are retried with a fresh seed, and after the
/// retry budget the original tokens are restored at still-unfilled
/// placeholders. `original_chunks` supplies those tokens (from apply_masks).
inline std::pair<corpus::LabeledText, FillOutcome> fill_masks(
    const corpus::LabeledText& masked, const std::vector<std::string>& original_chunks,
    backends::MaskFiller& filler, uint64_t seed, int max_retries = 1) {
  const std::vector<size_t> offsets = detail::placeholder_offsets(masked.text);

  corpus::LabeledText filled = masked;
  std::string base_id = masked.id;
  if (base_id.size() >= 5 && base_id.compare(base_id.size() - 5, 5, "#mask") == 0) {
    base_id.resize(base_id.size() - 5);
  }
  filled.id = base_id + "#fill";

  FillOutcome outcome;
  outcome.sentinel_count = static_cast<int>(offsets.size());
  if (offsets.empty()) {
    outcome.success = true;
    return {std::move(filled), outcome};
  }
  if (original_chunks.size() != offsets.size()) {
    throw DataError("fill_masks: need one original chunk per placeholder");
  }

  std::vector<std::string> sentinels;
  for (size_t k = 0; k < offsets.size(); ++k) sentinels.push_back(backends::sentinel_token(k));
  const std::string request_text = detail::splice(masked.text, offsets, sentinels);

  backends::FillResponse last;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    last = filler.fill(request_text, rng::derive(seed, "fill_attempt", attempt));
    outcome.retries_used = attempt;
    outcome.extracted_fill_count = static_cast<int>(last.fills.size());
    if (last.fills.size() == offsets.size()) {
      outcome.success = true;
      filled.text = detail::splice(masked.text, offsets, last.fills);
      return {std::move(filled), outcome};
    }
  }

  // fallback: use the fills we got, restore originals at the rest
  std::vector<std::string> pieces = original_chunks;
  for (size_t k = 0; k < std::min(last.fills.size(), offsets.size()); ++k) {
    pieces[k] = last.fills[k];
  }
  filled.text = detail::splice(masked.text, offsets, pieces);
  outcome.success = false;
  return {std::move(filled), outcome};
}

struct PerturbationSet {
  std::vector<corpus::LabeledText> originals;
  std::vector<corpus::LabeledText> masked;
  std::vector<corpus::LabeledText> filled;
  std::vector<FillOutcome> fill_outcomes;

  size_t size() const { return originals.size(); }

  /// Training texts: originals + masked + filled, in that order.
  std::vector<corpus::LabeledText> union_set(bool use_masked = true,
                                             bool use_filled = true) const {
    std::vector<corpus::LabeledText> all = originals;
    if (use_masked) all.insert(all.end(), masked.begin(), masked.end());
    if (use_filled) all.insert(all.end(), filled.begin(), filled.end());
    return all;
  }
};

struct PerturbConfig {
  double alpha = 0.4;
  double proportion = 0.10;
  int gap = 2;
  int span = 1;
  int window = 1;
  MaskStrategy strategy = MaskStrategy::Importance;
  uint64_t seed = 0;
  int max_retries = 1;
  int threads = 1;
  std::shared_ptr<backends::MaskFiller> filler;
  std::shared_ptr<backends::CausalScorer> scorer;  // required for prob_rank
};

/// Word-level weights in (0, 1] from causal token ranks: each word gets the
/// mean rank of the scored tokens starting inside it, rescaled by the
/// document maximum.
inline std::vector<double> rescaled_rank_weights(const backends::CausalScore& score,
                                                 const tok::TokenizedDoc& doc) {
  std::vector<double> raw(doc.words.size(), 1.0);
  for (size_t w = 0; w < doc.words.size(); ++w) {
    double sum = 0.0;
    int cnt = 0;
    for (size_t t = 0; t < score.token_spans.size(); ++t) {
      size_t b = score.token_spans[t].first;
      if (b >= doc.words[w].begin && b < doc.words[w].end) {
        sum += score.token_ranks[t];
        ++cnt;
      }
    }
    if (cnt > 0) raw[w] = sum / cnt;
  }
  double mx = *std::max_element(raw.begin(), raw.end());
  if (mx <= 0.0) mx = 1.0;
  for (double& v : raw) v /= mx;
  return raw;
}

/// One masked and one filled variant per original. Deterministic given the
/// config seed and backend responses; fill calls can run on a thread pool,
/// results are joined in input order.
inline PerturbationSet build_perturbation_set(const std::vector<corpus::LabeledText>& originals,
                                              const PerturbConfig& config) {
  if (!config.filler) throw DataError("build_perturbation_set: no filler backend");
  if (config.strategy == MaskStrategy::ProbRank && !config.scorer) {
    throw DataError("build_perturbation_set: prob_rank strategy needs a causal scorer");
  }

  PerturbationSet set;
  set.originals = originals;
  set.masked.resize(originals.size());
  set.filled.resize(originals.size());
  set.fill_outcomes.resize(originals.size());

  std::vector<MaskedVariant> variants(originals.size());
  for (size_t i = 0; i < originals.size(); ++i) {
    tok::TokenizedDoc doc = tok::tokenize_words(originals[i].text);
    importance::ImportanceProfile profile =
        importance::build_profile(doc, config.alpha, config.window);
    std::vector<double> rank_weights;
    if (config.strategy == MaskStrategy::ProbRank) {
      rank_weights = rescaled_rank_weights(config.scorer->score(originals[i].text), doc);
    }
    MaskPlan plan = select_mask_positions(
        doc, profile, config.proportion, config.gap, config.strategy,
        config.strategy == MaskStrategy::ProbRank ? &rank_weights : nullptr,
        rng::derive(config.seed, "plan", i), config.span);
    variants[i] = apply_masks(originals[i], doc, plan);
    set.masked[i] = variants[i].record;
  }

  auto fill_one = [&](size_t i) {
    return fill_masks(variants[i].record, variants[i].replaced, *config.filler,
                      rng::derive(config.seed, "fill", i), config.max_retries);
  };

  const bool parallel = config.threads > 1 && config.filler->supports_concurrent_requests();
  if (parallel) {
    // waves of config.threads fills, joined in input order
    for (size_t start = 0; start < originals.size();
         start += static_cast<size_t>(config.threads)) {
      const size_t stop =
          std::min(originals.size(), start + static_cast<size_t>(config.threads));
      std::vector<std::future<std::pair<corpus::LabeledText, FillOutcome>>> futures;
      for (size_t i = start; i < stop; ++i) {
        futures.push_back(std::async(std::launch::async, fill_one, i));
      }
      for (size_t i = start; i < stop; ++i) {
        auto [rec, outcome] = futures[i - start].get();
        set.filled[i] = std::move(rec);
        set.fill_outcomes[i] = outcome;
      }
    }
  } else {
    for (size_t i = 0; i < originals.size(); ++i) {
      auto [rec, outcome] = fill_one(i);
      set.filled[i] = std::move(rec);
      set.fill_outcomes[i] = outcome;
    }
  }
  return set;
}

}  // namespace mgtd::perturb
