#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgtd/backends.hpp"
#include "mgtd/corpus.hpp"
#include "mgtd/error.hpp"
#include "mgtd/perturb.hpp"
#include "mgtd/rng.hpp"

namespace mgtd::baselines {

/// Rank-bucket counts of realized tokens: ranks in [1,10], (10,100],
/// (100,1000] and above 1000. Bucket edges are inclusive.
struct GltrFeature {
  std::array<long, 4> bucket_counts{0, 0, 0, 0};
  double fraction_top10 = 0.0;
};

inline GltrFeature gltr_feature(const std::string& text, backends::CausalScorer& scorer) {
  backends::CausalScore cs = scorer.score(text);
  if (cs.token_ranks.empty()) throw DataError("gltr_feature: no scored tokens");
  GltrFeature f;
  for (int rank : cs.token_ranks) {
    if (rank <= 10) ++f.bucket_counts[0];
    else if (rank <= 100) ++f.bucket_counts[1];
    else if (rank <= 1000) ++f.bucket_counts[2];
    else ++f.bucket_counts[3];
  }
  f.fraction_top10 =
      static_cast<double>(f.bucket_counts[0]) / static_cast<double>(cs.token_ranks.size());
  return f;
}

/// Score-threshold detector calibrated on training scores. `machine_above`
/// records which side of the threshold is classified as machine.
struct ThresholdDetector {
  double threshold = 0.0;
  bool machine_above = true;
  double train_accuracy = 0.0;

  corpus::Label classify(double score) const {
    const bool above = score > threshold;
    return (above == machine_above) ? corpus::Label::Machine : corpus::Label::Human;
  }
};

/// Exhaustive search over candidate cuts: midpoints between consecutive
/// distinct sorted scores plus one cut below the minimum and one above the
/// maximum (so degenerate score sets fall back to the majority class). Ties
/// resolve toward the lower threshold, then toward machine-above.
inline ThresholdDetector calibrate_threshold(const std::vector<double>& scores,
                                             const std::vector<corpus::Label>& labels) {
  if (scores.size() != labels.size()) throw DataError("calibrate_threshold: size mismatch");
  if (scores.empty()) throw DataError("calibrate_threshold: empty input");
  bool has_h = false, has_m = false;
  for (auto l : labels) (l == corpus::Label::Human ? has_h : has_m) = true;
  if (!has_h || !has_m) throw DataError("calibrate_threshold: both classes required");

  std::vector<double> uniq = scores;
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());

  std::vector<double> candidates;
  candidates.push_back(uniq.front() - 1.0);
  for (size_t i = 0; i + 1 < uniq.size(); ++i) {
    candidates.push_back((uniq[i] + uniq[i + 1]) / 2.0);
  }
  candidates.push_back(uniq.back() + 1.0);

  auto accuracy = [&](double th, bool machine_above) {
    size_t correct = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
      const bool above = scores[i] > th;
      corpus::Label pred =
          (above == machine_above) ? corpus::Label::Machine : corpus::Label::Human;
      if (pred == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
  };

  ThresholdDetector best;
  best.train_accuracy = -1.0;
  for (double th : candidates) {
    for (bool above : {true, false}) {
      const double acc = accuracy(th, above);
      if (acc > best.train_accuracy) {
        best.threshold = th;
        best.machine_above = above;
        best.train_accuracy = acc;
      }
    }
  }
  return best;
}

struct DiscrepancyScore {
  double logp_original = 0.0;
  double mean_logp_perturbed = 0.0;
  double std_logp_perturbed = 0.0;
  double score = 0.0;
};

inline double sequence_logprob(const std::string& text, backends::CausalScorer& scorer) {
  backends::CausalScore cs = scorer.score(text);
  return std::accumulate(cs.token_logprobs.begin(), cs.token_logprobs.end(), 0.0);
}

/// Perturbation discrepancy: k randomly masked-and-refilled copies (default
/// 15% proportion, span 2), scored against the original sequence
/// log-probability. Normalized by the sample standard deviation with a 1e-8
/// floor.
inline DiscrepancyScore detectgpt_score(const std::string& text, int k,
                                        backends::CausalScorer& scorer,
                                        backends::MaskFiller& filler, uint64_t seed,
                                        double proportion = 0.15, int span = 2) {
  if (k < 2) throw DataError("detectgpt_score: k must be >= 2");
  tok::TokenizedDoc doc = tok::tokenize_words(text);
  importance::ImportanceProfile no_profile;  // unused by the random strategy
  corpus::LabeledText original;
  original.id = "detectgpt";
  original.text = text;

  DiscrepancyScore out;
  out.logp_original = sequence_logprob(text, scorer);

  std::vector<double> logps(k, 0.0);
  for (int j = 0; j < k; ++j) {
    perturb::MaskPlan plan = perturb::select_mask_positions(
        doc, no_profile, proportion, /*gap=*/0, perturb::MaskStrategy::Random, nullptr,
        rng::derive(seed, "detectgpt_plan", j), span);
    perturb::MaskedVariant masked = perturb::apply_masks(original, doc, plan);
    auto [filled, outcome] = perturb::fill_masks(masked.record, masked.replaced, filler,
                                                 rng::derive(seed, "detectgpt_fill", j));
    (void)outcome;
    logps[j] = sequence_logprob(filled.text, scorer);
  }

  double mean = std::accumulate(logps.begin(), logps.end(), 0.0) / k;
  double var = 0.0;
  for (double v : logps) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / (k - 1));
  out.mean_logp_perturbed = mean;
  out.std_logp_perturbed = sd;
  out.score = (out.logp_original - mean) / std::max(sd, 1e-8);
  return out;
}

}  // namespace mgtd::baselines
