#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mgtd/analysis.hpp"
#include "support/synthetic.hpp"

using namespace mgtd;

namespace {

std::vector<corpus::LabeledText> balanced_set(int per_class) {
  std::vector<corpus::LabeledText> out;
  for (int i = 0; i < per_class; ++i) {
    out.push_back({"h" + std::to_string(i), "human words here " + std::to_string(i),
                   corpus::Label::Human, {}, {}});
    out.push_back({"m" + std::to_string(i), "machine words here " + std::to_string(i),
                   corpus::Label::Machine, {}, {}});
  }
  return out;
}

}  // namespace

TEST_CASE("constant-machine predictor on a balanced set") {
  auto set = balanced_set(10);
  auto report = analysis::evaluate(
      [](uint64_t) {
        return [](const corpus::LabeledText&) { return corpus::Label::Machine; };
      },
      set, {1});
  CHECK(report.accuracy == doctest::Approx(0.5));
  CHECK(report.f1 == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("perfect predictor scores one on both metrics") {
  auto set = balanced_set(8);
  auto report = analysis::evaluate(
      [](uint64_t) {
        return [](const corpus::LabeledText& r) { return r.label; };
      },
      set, {1, 2, 3});
  CHECK(report.accuracy == doctest::Approx(1.0));
  CHECK(report.f1 == doctest::Approx(1.0));
  CHECK(report.accuracy_std == doctest::Approx(0.0));
  CHECK(report.per_seed.size() == 3);
}

TEST_CASE("metrics equal a confusion-matrix oracle on random predictions") {
  rng::SplitMix64 g(99);
  for (int iter = 0; iter < 300; ++iter) {
    const size_t n = 1 + g.bounded(100);
    std::vector<corpus::Label> gold(n), pred(n);
    for (size_t i = 0; i < n; ++i) {
      gold[i] = g.bounded(2) ? corpus::Label::Machine : corpus::Label::Human;
      pred[i] = g.bounded(2) ? corpus::Label::Machine : corpus::Label::Human;
    }
    auto [acc, f1] = analysis::score_predictions(gold, pred);

    long tp = 0, tn = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < n; ++i) {
      const bool gm = gold[i] == corpus::Label::Machine;
      const bool pm = pred[i] == corpus::Label::Machine;
      if (gm && pm) ++tp;
      if (!gm && !pm) ++tn;
      if (!gm && pm) ++fp;
      if (gm && !pm) ++fn;
    }
    CHECK(acc == doctest::Approx(static_cast<double>(tp + tn) / n));
    const double precision = tp + fp > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double expected_f1 = (tp + fp + fn) == 0
                                   ? 1.0
                                   : (precision + recall > 0
                                          ? 2 * precision * recall / (precision + recall)
                                          : 0.0);
    CHECK(f1 == doctest::Approx(expected_f1));
  }
}

TEST_CASE("evaluate rejects empty inputs") {
  auto always = [](uint64_t) {
    return [](const corpus::LabeledText&) { return corpus::Label::Human; };
  };
  CHECK_THROWS_AS(analysis::evaluate(always, {}, {1}), DataError);
  CHECK_THROWS_AS(analysis::evaluate(always, balanced_set(1), {}), DataError);
}

TEST_CASE("robustness at rate zero is the identity") {
  auto set = balanced_set(5);
  auto vocab = analysis::build_vocab(set);
  for (auto op : {analysis::RobustnessOp::Delete, analysis::RobustnessOp::Replace,
                  analysis::RobustnessOp::Insert, analysis::RobustnessOp::Repeat}) {
    auto result = analysis::robustness_perturb(set, {op, 0.0, 7}, vocab);
    REQUIRE(result.records.size() == set.size());
    for (size_t i = 0; i < set.size(); ++i) CHECK(result.records[i].text == set[i].text);
    CHECK(result.dropped_ids.empty());
  }
}

TEST_CASE("full deletion drops the text with a warning entry") {
  std::vector<corpus::LabeledText> set{{"x", "a b c", corpus::Label::Human, {}, {}}};
  auto result =
      analysis::robustness_perturb(set, {analysis::RobustnessOp::Delete, 1.0, 3}, {});
  CHECK(result.records.empty());
  CHECK(result.dropped_ids == std::vector<std::string>{"x"});
}

TEST_CASE("robustness hit rate follows the binomial expectation") {
  std::string text;
  for (int i = 0; i < 10000; ++i) {
    if (i) text += ' ';
    text += "t" + std::to_string(i);
  }
  std::vector<corpus::LabeledText> set{{"big", text, corpus::Label::Human, {}, {}}};
  auto result =
      analysis::robustness_perturb(set, {analysis::RobustnessOp::Delete, 0.15, 5}, {});
  const size_t kept = tok::tokenize_words(result.records[0].text).words.size();
  const double removed = 10000.0 - static_cast<double>(kept);
  // 3 sigma of Binomial(10000, 0.15): ~107
  CHECK(removed > 1500 - 110);
  CHECK(removed < 1500 + 110);
}

TEST_CASE("replace and insert draw from the supplied vocabulary") {
  std::vector<corpus::LabeledText> set{
      {"x", "orig orig orig orig orig orig orig orig", corpus::Label::Human, {}, {}}};
  std::vector<std::string> vocab{"sub"};
  auto rep =
      analysis::robustness_perturb(set, {analysis::RobustnessOp::Replace, 0.5, 11}, vocab);
  auto doc = tok::tokenize_words(rep.records[0].text);
  bool saw_sub = false;
  for (const auto& w : doc.words) {
    CHECK((w.surface == "orig" || w.surface == "sub"));
    saw_sub |= w.surface == "sub";
  }
  CHECK(saw_sub);
  CHECK(doc.words.size() == 8);

  auto ins =
      analysis::robustness_perturb(set, {analysis::RobustnessOp::Insert, 0.5, 11}, vocab);
  CHECK(tok::tokenize_words(ins.records[0].text).words.size() > 8);

  CHECK_THROWS_AS(
      analysis::robustness_perturb(set, {analysis::RobustnessOp::Replace, 0.5, 1}, {}),
      DataError);
}

TEST_CASE("repeat duplicates targeted words") {
  std::vector<corpus::LabeledText> set{
      {"x", "one two three four five six", corpus::Label::Human, {}, {}}};
  auto result =
      analysis::robustness_perturb(set, {analysis::RobustnessOp::Repeat, 1.0, 2}, {});
  auto words = tok::tokenize_words(result.records[0].text).words;
  REQUIRE(words.size() == 12);
  CHECK(words[0].surface == "one");
  CHECK(words[1].surface == "one");
}

TEST_CASE("affinity is zero against the same set and equals the accuracy delta") {
  auto set = balanced_set(20);
  analysis::Predictor coin = [](const corpus::LabeledText& r) {
    return r.id[0] == 'h' ? corpus::Label::Human : corpus::Label::Machine;
  };
  CHECK(analysis::affinity(coin, set, set) == 0.0);

  // degrade half the machine ids
  auto perturbed = set;
  for (auto& r : perturbed) {
    if (r.id == "m0" || r.id == "m1") r.id = "h_relabeled";
  }
  const double delta = analysis::affinity(coin, set, perturbed);
  CHECK(delta == doctest::Approx(-2.0 / 40.0));
}

TEST_CASE("distinct-n hand counts") {
  CHECK(analysis::distinct_n({"a b", "a b"}, 1) == doctest::Approx(50.0));
  CHECK(analysis::distinct_n({"a b c d"}, 1) == doctest::Approx(100.0));
  CHECK(analysis::distinct_n({"a b", "b c"}, 2) == doctest::Approx(100.0));
  CHECK(analysis::distinct_n({"a b a b"}, 2) == doctest::Approx(2.0 / 3.0 * 100));
  CHECK_THROWS_AS(analysis::distinct_n({"a"}, 2), DataError);
  CHECK_THROWS_AS(analysis::distinct_n({}, 1), DataError);
}

TEST_CASE("distinct-n equals a set-based oracle and ignores corpus order") {
  rng::SplitMix64 g(123);
  std::vector<std::string> texts;
  for (int i = 0; i < 20; ++i) {
    std::string t;
    const int len = 3 + static_cast<int>(g.bounded(10));
    for (int k = 0; k < len; ++k) {
      if (k) t += ' ';
      t += "w" + std::to_string(g.bounded(12));
    }
    texts.push_back(t);
  }
  for (int n : {1, 2, 3}) {
    std::set<std::vector<std::string>> grams;
    long total = 0;
    for (const auto& t : texts) {
      auto words = tok::tokenize_words(t).words;
      for (size_t i = 0; i + n <= words.size(); ++i) {
        std::vector<std::string> gram;
        for (int k = 0; k < n; ++k) gram.push_back(tok::fold_case(words[i + k].surface));
        grams.insert(gram);
        ++total;
      }
    }
    const double expected = 100.0 * static_cast<double>(grams.size()) / total;
    CHECK(analysis::distinct_n(texts, n) == doctest::Approx(expected));
    auto shuffled = texts;
    rng::SplitMix64 g2(5);
    rng::shuffle(shuffled, g2);
    CHECK(analysis::distinct_n(shuffled, n) == doctest::Approx(expected));
  }
}

TEST_CASE("failure ratio percentages") {
  std::vector<perturb::FillOutcome> outcomes(20);
  for (auto& o : outcomes) o.success = true;
  CHECK(analysis::failure_ratio(outcomes) == doctest::Approx(0.0));
  outcomes[7].success = false;
  CHECK(analysis::failure_ratio(outcomes) == doctest::Approx(5.0));
  CHECK_THROWS_AS(analysis::failure_ratio({}), DataError);
}
