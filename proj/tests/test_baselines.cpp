#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "mgtd/baselines.hpp"
#include "mgtd/backends_fake.hpp"
#include "support/fakes.hpp"

using namespace mgtd;

TEST_CASE("gltr buckets all-rank-one text into the first bucket") {
  testing::ScriptedScorer scorer({}, {}, 1);
  auto f = baselines::gltr_feature("five tokens of text here", scorer);
  CHECK(f.bucket_counts == std::array<long, 4>{5, 0, 0, 0});
  CHECK(f.fraction_top10 == doctest::Approx(1.0));
}

TEST_CASE("gltr bucket edges are inclusive") {
  testing::ScriptedScorer scorer(
      {{"a", 5}, {"b", 50}, {"c", 500}, {"d", 5000}, {"e", 10}, {"f", 100}, {"g", 1000}},
      {});
  auto f = baselines::gltr_feature("a b c d", scorer);
  CHECK(f.bucket_counts == std::array<long, 4>{1, 1, 1, 1});
  CHECK(f.fraction_top10 == doctest::Approx(0.25));

  auto edges = baselines::gltr_feature("e f g", scorer);
  CHECK(edges.bucket_counts == std::array<long, 4>{1, 1, 1, 0});  // 10 | 100 | 1000
}

TEST_CASE("gltr bucket counts always sum to the scored token count") {
  backends::HashScorer scorer(3000);
  for (const char* text : {"one two three", "a much longer sentence with many words",
                           "x"}) {
    auto f = baselines::gltr_feature(text, scorer);
    long total = f.bucket_counts[0] + f.bucket_counts[1] + f.bucket_counts[2] +
                 f.bucket_counts[3];
    CHECK(total ==
          static_cast<long>(tok::tokenize_words(text).words.size()));
  }
}

TEST_CASE("calibration separates perfectly separable scores") {
  std::vector<double> scores{0.1, 0.2, 0.3, 0.8, 0.9, 1.0};
  std::vector<corpus::Label> labels{corpus::Label::Human, corpus::Label::Human,
                                    corpus::Label::Human, corpus::Label::Machine,
                                    corpus::Label::Machine, corpus::Label::Machine};
  auto det = baselines::calibrate_threshold(scores, labels);
  CHECK(det.train_accuracy == doctest::Approx(1.0));
  CHECK(det.machine_above);
  CHECK(det.threshold == doctest::Approx(0.55));
  CHECK(det.classify(0.2) == corpus::Label::Human);
  CHECK(det.classify(0.95) == corpus::Label::Machine);
}

TEST_CASE("identical scores fall back to the majority class") {
  std::vector<double> scores{0.5, 0.5, 0.5, 0.5};
  std::vector<corpus::Label> labels{corpus::Label::Machine, corpus::Label::Machine,
                                    corpus::Label::Machine, corpus::Label::Human};
  auto det = baselines::calibrate_threshold(scores, labels);
  CHECK(det.train_accuracy == doctest::Approx(0.75));
}

TEST_CASE("calibration requires both classes") {
  CHECK_THROWS_AS(baselines::calibrate_threshold(
                      {0.1, 0.2}, {corpus::Label::Human, corpus::Label::Human}),
                  DataError);
}

TEST_CASE("calibration matches exhaustive search on random score sets") {
  rng::SplitMix64 g(808);
  for (int iter = 0; iter < 100; ++iter) {
    const size_t n = 2 + g.bounded(64);
    std::vector<double> scores(n);
    std::vector<corpus::Label> labels(n);
    bool h = false, m = false;
    for (size_t i = 0; i < n; ++i) {
      scores[i] = g.uniform_range(-3.0, 3.0);
      labels[i] = g.bounded(2) ? corpus::Label::Machine : corpus::Label::Human;
      (labels[i] == corpus::Label::Human ? h : m) = true;
    }
    if (!h || !m) continue;

    auto det = baselines::calibrate_threshold(scores, labels);

    // oracle: try every cut between sorted scores plus both outer cuts,
    // both orientations, tracking the best accuracy only
    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> cuts{sorted.front() - 1, sorted.back() + 1};
    for (size_t i = 0; i + 1 < sorted.size(); ++i) {
      cuts.push_back((sorted[i] + sorted[i + 1]) / 2);
    }
    double best = 0.0;
    for (double cut : cuts) {
      for (bool above : {true, false}) {
        size_t ok = 0;
        for (size_t i = 0; i < n; ++i) {
          corpus::Label pred = (scores[i] > cut) == above ? corpus::Label::Machine
                                                          : corpus::Label::Human;
          if (pred == labels[i]) ++ok;
        }
        best = std::max(best, static_cast<double>(ok) / n);
      }
    }
    CHECK(det.train_accuracy == doctest::Approx(best));
  }
}

TEST_CASE("null perturbation gives a zero discrepancy score") {
  // filler echoes sentinel-count fills with the original words restored:
  // easier here to make the scorer blind to content
  testing::SequenceScorer scorer({}, -10.0);  // every text scores -10
  backends::DictionaryFiller filler;
  auto d = baselines::detectgpt_score("same logprob for everything here okay", 5, scorer,
                                      filler, 3);
  CHECK(d.logp_original == doctest::Approx(-10.0));
  CHECK(d.mean_logp_perturbed == doctest::Approx(-10.0));
  CHECK(d.score == doctest::Approx(0.0));
}

TEST_CASE("identical perturbed logprobs hit the epsilon guard") {
  // full-proportion masking with an echo filler makes every perturbed copy
  // the same string, so the sample deviation collapses to zero
  testing::SequenceScorer scorer({{"the original text stays put", -8.0}}, -12.0);
  testing::EchoFiller filler("zzz");
  auto d = baselines::detectgpt_score("the original text stays put", 4, scorer, filler, 7,
                                      1.0, 1);
  CHECK(d.std_logp_perturbed == doctest::Approx(0.0));
  CHECK(std::isfinite(d.score));
  CHECK(d.score == doctest::Approx((-8.0 + 12.0) / 1e-8));
}

TEST_CASE("hand-built three-copy discrepancy") {
  // perturbed copies score -12, -13, -14 in rotation; original scores -10
  struct RotatingScorer : backends::CausalScorer {
    int calls = 0;
    backends::CausalScore score(const std::string& text) override {
      auto doc = tok::tokenize_words(text);
      double total;
      if (text == "orig orig orig") {
        total = -10.0;
      } else {
        total = -12.0 - (calls++ % 3);
      }
      backends::CausalScore cs;
      for (const auto& w : doc.words) {
        cs.token_logprobs.push_back(total / doc.words.size());
        cs.token_ranks.push_back(1);
        cs.token_spans.emplace_back(w.begin, w.end);
      }
      return cs;
    }
  } scorer;
  testing::EchoFiller filler("other");
  auto d = baselines::detectgpt_score("orig orig orig", 3, scorer, filler, 1, 1.0, 1);
  // mean -13, sample std 1 -> score (-10 - (-13)) / 1 = 3
  CHECK(d.mean_logp_perturbed == doctest::Approx(-13.0));
  CHECK(d.std_logp_perturbed == doctest::Approx(1.0));
  CHECK(d.score == doctest::Approx(3.0));
}

TEST_CASE("detectgpt requires k of at least two and is deterministic") {
  testing::SequenceScorer scorer({}, -5.0);
  backends::DictionaryFiller filler;
  CHECK_THROWS_AS(baselines::detectgpt_score("text here", 1, scorer, filler, 0), DataError);
  auto a = baselines::detectgpt_score("several words to perturb here now", 4, scorer,
                                      filler, 11);
  auto b = baselines::detectgpt_score("several words to perturb here now", 4, scorer,
                                      filler, 11);
  CHECK(a.score == b.score);
  CHECK(a.mean_logp_perturbed == b.mean_logp_perturbed);
}
