#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "mgtd/corpus.hpp"
#include "mgtd/error.hpp"
#include "mgtd/perturb.hpp"
#include "mgtd/rng.hpp"
#include "mgtd/tokenize.hpp"

namespace mgtd::analysis {

/// Classifier for evaluation purposes; anything that maps a record to a label.
using Predictor = std::function<corpus::Label(const corpus::LabeledText&)>;

/// Builds a ready predictor for a given seed (retraining or recalibrating as
/// needed); evaluate() calls it once per seed.
using PredictorFactory = std::function<Predictor(uint64_t seed)>;

struct SeedMetrics {
  uint64_t seed = 0;
  double accuracy = 0.0;
  double f1 = 0.0;
};

struct MetricsReport {
  double accuracy = 0.0;      // mean over seeds
  double f1 = 0.0;            // mean over seeds, machine as positive class
  double accuracy_std = 0.0;  // population std over seeds
  double f1_std = 0.0;
  std::vector<SeedMetrics> per_seed;
};

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& s : r.per_seed) {
    per.push_back({{"seed", s.seed}, {"accuracy", s.accuracy}, {"f1", s.f1}});
  }
  return {{"accuracy", r.accuracy},
          {"f1", r.f1},
          {"accuracy_std", r.accuracy_std},
          {"f1_std", r.f1_std},
          {"per_seed", per}};
}

/// Accuracy and binary F1 with MACHINE as the positive class. An all-zero
/// F1 denominator (no machine examples or predictions) counts as 1.0.
inline std::pair<double, double> score_predictions(const std::vector<corpus::Label>& gold,
                                                   const std::vector<corpus::Label>& pred) {
  if (gold.empty() || gold.size() != pred.size()) {
    throw DataError("score_predictions: empty or mismatched inputs");
  }
  long tp = 0, fp = 0, fn = 0, correct = 0;
  for (size_t i = 0; i < gold.size(); ++i) {
    const bool gm = gold[i] == corpus::Label::Machine;
    const bool pm = pred[i] == corpus::Label::Machine;
    if (gold[i] == pred[i]) ++correct;
    if (gm && pm) ++tp;
    if (!gm && pm) ++fp;
    if (gm && !pm) ++fn;
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(gold.size());
  const double denom = static_cast<double>(2 * tp + fp + fn);
  const double f1 = denom == 0.0 ? 1.0 : 2.0 * static_cast<double>(tp) / denom;
  return {acc, f1};
}

/// Mean and population std over per-seed rows.
inline MetricsReport aggregate_seed_metrics(std::vector<SeedMetrics> per_seed) {
  if (per_seed.empty()) throw DataError("aggregate_seed_metrics: no rows");
  MetricsReport report;
  report.per_seed = std::move(per_seed);
  double acc_sum = 0.0, f1_sum = 0.0;
  for (const auto& s : report.per_seed) {
    acc_sum += s.accuracy;
    f1_sum += s.f1;
  }
  const double n = static_cast<double>(report.per_seed.size());
  report.accuracy = acc_sum / n;
  report.f1 = f1_sum / n;
  double acc_var = 0.0, f1_var = 0.0;
  for (const auto& s : report.per_seed) {
    acc_var += (s.accuracy - report.accuracy) * (s.accuracy - report.accuracy);
    f1_var += (s.f1 - report.f1) * (s.f1 - report.f1);
  }
  report.accuracy_std = std::sqrt(acc_var / n);
  report.f1_std = std::sqrt(f1_var / n);
  return report;
}

inline MetricsReport evaluate(const PredictorFactory& make_predictor,
                              const std::vector<corpus::LabeledText>& test,
                              const std::vector<uint64_t>& seeds) {
  if (test.empty()) throw DataError("evaluate: empty test set");
  if (seeds.empty()) throw DataError("evaluate: no seeds");
  std::vector<SeedMetrics> per_seed;
  for (uint64_t seed : seeds) {
    Predictor predict = make_predictor(seed);
    std::vector<corpus::Label> gold, pred;
    gold.reserve(test.size());
    pred.reserve(test.size());
    for (const auto& r : test) {
      gold.push_back(r.label);
      pred.push_back(predict(r));
    }
    auto [acc, f1] = score_predictions(gold, pred);
    per_seed.push_back({seed, acc, f1});
  }
  return aggregate_seed_metrics(std::move(per_seed));
}

enum class RobustnessOp { Delete, Replace, Insert, Repeat };

inline const char* robustness_op_name(RobustnessOp op) {
  switch (op) {
    case RobustnessOp::Delete: return "delete";
    case RobustnessOp::Replace: return "replace";
    case RobustnessOp::Insert: return "insert";
    default: return "repeat";
  }
}

inline RobustnessOp parse_robustness_op(const std::string& s) {
  if (s == "delete") return RobustnessOp::Delete;
  if (s == "replace") return RobustnessOp::Replace;
  if (s == "insert") return RobustnessOp::Insert;
  if (s == "repeat") return RobustnessOp::Repeat;
  throw DataError("unknown robustness op: " + s);
}

struct RobustnessSpec {
  RobustnessOp op = RobustnessOp::Delete;
  double rate = 0.15;
  uint64_t seed = 0;
};

/// Distinct word surfaces of a corpus, sorted for deterministic indexing.
inline std::vector<std::string> build_vocab(const std::vector<corpus::LabeledText>& records) {
  std::unordered_set<std::string> seen;
  for (const auto& r : records) {
    for (const auto& w : tok::tokenize_words(r.text).words) seen.insert(w.surface);
  }
  std::vector<std::string> vocab(seen.begin(), seen.end());
  std::sort(vocab.begin(), vocab.end());
  return vocab;
}

struct RobustnessResult {
  std::vector<corpus::LabeledText> records;
  std::vector<std::string> dropped_ids;  // texts emptied by the perturbation
};

/// Token-level stress perturbation: each word is independently targeted with
/// probability `rate`; the op deletes it, replaces it with a uniform vocab
/// word, inserts a uniform vocab word after it, or repeats it. Texts are
/// rebuilt with single spaces. Emptied texts are dropped and reported.
inline RobustnessResult robustness_perturb(const std::vector<corpus::LabeledText>& test,
                                           const RobustnessSpec& spec,
                                           const std::vector<std::string>& vocab) {
  if (spec.rate < 0.0 || spec.rate > 1.0) throw DataError("robustness rate must be in [0, 1]");
  const bool needs_vocab =
      spec.op == RobustnessOp::Replace || spec.op == RobustnessOp::Insert;
  if (needs_vocab && vocab.empty()) throw DataError("robustness_perturb: empty vocabulary");

  RobustnessResult result;
  for (size_t idx = 0; idx < test.size(); ++idx) {
    const auto& r = test[idx];
    if (spec.rate == 0.0) {
      result.records.push_back(r);
      continue;
    }
    rng::SplitMix64 g(rng::derive(spec.seed, "robust", idx));
    std::vector<std::string> out_words;
    for (const auto& w : tok::tokenize_words(r.text).words) {
      const bool hit = g.uniform() < spec.rate;
      switch (spec.op) {
        case RobustnessOp::Delete:
          if (!hit) out_words.push_back(w.surface);
          break;
        case RobustnessOp::Replace:
          out_words.push_back(hit ? vocab[g.bounded(vocab.size())] : w.surface);
          break;
        case RobustnessOp::Insert:
          out_words.push_back(w.surface);
          if (hit) out_words.push_back(vocab[g.bounded(vocab.size())]);
          break;
        case RobustnessOp::Repeat:
          out_words.push_back(w.surface);
          if (hit) out_words.push_back(w.surface);
          break;
      }
    }
    if (out_words.empty()) {
      result.dropped_ids.push_back(r.id);
      continue;
    }
    corpus::LabeledText p = r;
    p.text.clear();
    for (size_t i = 0; i < out_words.size(); ++i) {
      if (i > 0) p.text += ' ';
      p.text += out_words[i];
    }
    result.records.push_back(std::move(p));
  }
  return result;
}

/// Accuracy delta caused by a perturbation: acc(perturbed) - acc(original).
/// Negative values mean degradation.
inline double affinity(const Predictor& predict,
                       const std::vector<corpus::LabeledText>& original,
                       const std::vector<corpus::LabeledText>& perturbed) {
  auto acc_of = [&](const std::vector<corpus::LabeledText>& set) {
    if (set.empty()) throw DataError("affinity: empty test set");
    std::vector<corpus::Label> gold, pred;
    for (const auto& r : set) {
      gold.push_back(r.label);
      pred.push_back(predict(r));
    }
    return score_predictions(gold, pred).first;
  };
  return acc_of(perturbed) - acc_of(original);
}

/// Percentage of distinct word n-grams over all word n-grams in the corpus.
inline double distinct_n(const std::vector<std::string>& texts, int n) {
  if (n < 1) throw DataError("distinct_n: n must be >= 1");
  std::unordered_set<std::string> seen;
  long total = 0;
  for (const auto& text : texts) {
    if (text.empty()) continue;
    tok::TokenizedDoc doc = tok::tokenize_words(text);
    std::vector<std::string> folded;
    folded.reserve(doc.words.size());
    for (const auto& w : doc.words) folded.push_back(tok::fold_case(w.surface));
    for (size_t i = 0; i + n <= folded.size(); ++i) {
      std::string gram = folded[i];
      for (int k = 1; k < n; ++k) {
        gram += '\x1f';
        gram += folded[i + k];
      }
      seen.insert(std::move(gram));
      ++total;
    }
  }
  if (total == 0) throw DataError("distinct_n: corpus has no n-grams");
  return 100.0 * static_cast<double>(seen.size()) / static_cast<double>(total);
}

/// Share of failed mask-filling outcomes, as a percentage.
inline double failure_ratio(const std::vector<perturb::FillOutcome>& outcomes) {
  if (outcomes.empty()) throw DataError("failure_ratio: no outcomes");
  long failures = 0;
  for (const auto& o : outcomes) {
    if (!o.success) ++failures;
  }
  return 100.0 * static_cast<double>(failures) / static_cast<double>(outcomes.size());
}

}  // namespace mgtd::analysis
