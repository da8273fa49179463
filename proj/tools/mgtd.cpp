// mgtd: machine-generated-text detection toolkit CLI.
//
// Subcommands: perturb, train, eval, baseline, analyze, sweep. Options come
// from defaults, then a JSON config file, then command-line flags, in
// increasing precedence. Backend endpoints may also come from the
// environment (MGTD_ENCODER_URL, MGTD_SCORER_URL, MGTD_FILLER_URL).

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "mgtd/analysis.hpp"
#include "mgtd/backends.hpp"
#include "mgtd/backends_fake.hpp"
#include "mgtd/backends_remote.hpp"
#include "mgtd/baselines.hpp"
#include "mgtd/corpus.hpp"
#include "mgtd/error.hpp"
#include "mgtd/importance.hpp"
#include "mgtd/perturb.hpp"
#include "mgtd/rng.hpp"
#include "mgtd/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mgtd;

namespace {

// ---------------------------------------------------------------- config

struct BackendSpec {
  std::string encoder = "tiny";  // tiny | hash | remote
  std::string scorer = "hash";   // hash | uniform | remote
  std::string filler = "dict";   // dict | remote
  int encoder_d = 32;
  int encoder_vocab = 4096;
  size_t max_len = 512;
  int scorer_max_rank = 5000;
  int scorer_vocab = 50000;
  std::string encoder_url;
  std::string scorer_url;
  std::string filler_url;
};

struct AppConfig {
  std::string dataset;
  std::string test_dataset;
  std::string out_dir = "out";
  std::string train_domain, train_generator;  // tag filters on the train corpus
  std::string test_domain, test_generator;    // tag filters on the test side
  int shots = 64;
  std::vector<uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

  trainer::TrainConfig train;

  std::string strategy = "importance";
  int span = 1;
  int max_retries = 1;
  int threads = 1;

  BackendSpec backends;

  std::string baseline_method = "gltr";  // gltr | detectgpt
  int detectgpt_k = 10;

  std::string analyze_what = "diversity";  // diversity | robustness | failure | chunks
  double robustness_rate = 0.15;
  std::vector<int> chunk_lengths{50, 100, 200};
  std::string outcomes_path;
  std::string compare_path;
  bool plot = false;

  std::vector<double> sweep_proportion{0.05, 0.08, 0.10, 0.15, 0.17, 0.20};
  std::vector<int> sweep_gap{0, 1, 2, 3, 4, 5};
  std::vector<double> sweep_alpha;   // empty: hold at train.alpha
  std::vector<double> sweep_lambda;  // empty: hold at train.lambda
};

template <typename T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void apply_config_file(AppConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in.is_open()) throw DataError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("config file " + path + ": " + e.what());
  }
  maybe(j, "dataset", cfg.dataset);
  maybe(j, "test_dataset", cfg.test_dataset);
  maybe(j, "out_dir", cfg.out_dir);
  maybe(j, "shots", cfg.shots);
  maybe(j, "seeds", cfg.seeds);
  if (j.contains("train")) cfg.train = trainer::train_config_from_json(j.at("train"));
  if (j.contains("perturb")) {
    const json& p = j.at("perturb");
    maybe(p, "strategy", cfg.strategy);
    maybe(p, "proportion", cfg.train.mask_proportion);
    maybe(p, "gap", cfg.train.mask_gap);
    maybe(p, "span", cfg.span);
    maybe(p, "alpha", cfg.train.alpha);
    maybe(p, "window", cfg.train.window);
    maybe(p, "max_retries", cfg.max_retries);
    maybe(p, "threads", cfg.threads);
  }
  if (j.contains("backends")) {
    const json& b = j.at("backends");
    maybe(b, "encoder", cfg.backends.encoder);
    maybe(b, "scorer", cfg.backends.scorer);
    maybe(b, "filler", cfg.backends.filler);
    maybe(b, "encoder_d", cfg.backends.encoder_d);
    maybe(b, "encoder_vocab", cfg.backends.encoder_vocab);
    maybe(b, "max_len", cfg.backends.max_len);
    maybe(b, "scorer_max_rank", cfg.backends.scorer_max_rank);
    maybe(b, "scorer_vocab", cfg.backends.scorer_vocab);
    maybe(b, "encoder_url", cfg.backends.encoder_url);
    maybe(b, "scorer_url", cfg.backends.scorer_url);
    maybe(b, "filler_url", cfg.backends.filler_url);
  }
  if (j.contains("baseline")) {
    maybe(j.at("baseline"), "method", cfg.baseline_method);
    maybe(j.at("baseline"), "k", cfg.detectgpt_k);
  }
  if (j.contains("analyze")) {
    const json& a = j.at("analyze");
    maybe(a, "what", cfg.analyze_what);
    maybe(a, "rate", cfg.robustness_rate);
    maybe(a, "chunk_lengths", cfg.chunk_lengths);
    maybe(a, "outcomes", cfg.outcomes_path);
    maybe(a, "compare", cfg.compare_path);
  }
  if (j.contains("sweep")) {
    maybe(j.at("sweep"), "proportion", cfg.sweep_proportion);
    maybe(j.at("sweep"), "gap", cfg.sweep_gap);
    maybe(j.at("sweep"), "alpha", cfg.sweep_alpha);
    maybe(j.at("sweep"), "lambda", cfg.sweep_lambda);
  }
}

// Experiment identity for hashing: dataset contents are mixed in separately,
// so paths and output locations stay out of the hash.
json resolved_config_json(const AppConfig& cfg) {
  return json{
      {"shots", cfg.shots},
      {"seeds", cfg.seeds},
      {"train", trainer::to_json(cfg.train)},
      {"perturb",
       {{"strategy", cfg.strategy},
        {"proportion", cfg.train.mask_proportion},
        {"gap", cfg.train.mask_gap},
        {"span", cfg.span},
        {"alpha", cfg.train.alpha},
        {"window", cfg.train.window},
        {"max_retries", cfg.max_retries}}},
      {"backends",
       {{"encoder", cfg.backends.encoder},
        {"scorer", cfg.backends.scorer},
        {"filler", cfg.backends.filler},
        {"encoder_d", cfg.backends.encoder_d},
        {"encoder_vocab", cfg.backends.encoder_vocab}}},
      {"baseline", {{"method", cfg.baseline_method}, {"k", cfg.detectgpt_k}}},
      {"analyze",
       {{"what", cfg.analyze_what},
        {"rate", cfg.robustness_rate},
        {"chunk_lengths", cfg.chunk_lengths}}},
      {"sweep",
       {{"proportion", cfg.sweep_proportion},
        {"gap", cfg.sweep_gap},
        {"alpha", cfg.sweep_alpha},
        {"lambda", cfg.sweep_lambda}}}};
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

uint64_t hash_file(const std::string& path, uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return rng::hash_bytes(ss.str(), seed);
}

// ---------------------------------------------------------------- backends

std::string env_or(const char* var, const std::string& fallback) {
  const char* v = std::getenv(var);
  return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

std::string require_url(const char* env_var, const std::string& cfg_url,
                        const std::string& which) {
  std::string url = env_or(env_var, cfg_url);
  if (url.empty()) {
    throw BackendError("no endpoint for remote " + which + " backend (set " +
                       env_var + " or backends." + which + "_url)");
  }
  return url;
}

struct BackendSet {
  std::function<std::shared_ptr<backends::TrainableEncoder>(uint64_t)> make_trainable;
  std::shared_ptr<backends::Encoder> encoder;
  std::shared_ptr<backends::CausalScorer> scorer;
  std::shared_ptr<backends::MaskFiller> filler;
};

BackendSet make_backends(const AppConfig& cfg) {
  BackendSet set;
  const BackendSpec& b = cfg.backends;

  if (b.encoder == "tiny") {
    set.make_trainable = [b](uint64_t seed) {
      return std::make_shared<backends::TinyTrainableEncoder>(
          b.encoder_d, b.encoder_vocab, rng::derive(seed, "encoder_init"), b.max_len);
    };
    set.encoder = set.make_trainable(0);
  } else if (b.encoder == "hash") {
    set.encoder = std::make_shared<backends::HashEncoder>(b.encoder_d, b.max_len);
  } else if (b.encoder == "remote") {
    set.encoder = std::make_shared<backends::RemoteEncoder>(
        require_url("MGTD_ENCODER_URL", b.encoder_url, "encoder"));
  } else {
    throw DataError("unknown encoder backend: " + b.encoder);
  }

  if (b.scorer == "hash") {
    set.scorer = std::make_shared<backends::HashScorer>(b.scorer_max_rank);
  } else if (b.scorer == "uniform") {
    set.scorer = std::make_shared<backends::UniformScorer>(b.scorer_vocab);
  } else if (b.scorer == "remote") {
    set.scorer = std::make_shared<backends::RemoteScorer>(
        require_url("MGTD_SCORER_URL", b.scorer_url, "scorer"));
  } else {
    throw DataError("unknown scorer backend: " + b.scorer);
  }

  if (b.filler == "dict") {
    set.filler = std::make_shared<backends::DictionaryFiller>();
  } else if (b.filler == "remote") {
    set.filler = std::make_shared<backends::RemoteFiller>(
        require_url("MGTD_FILLER_URL", b.filler_url, "filler"));
  } else {
    throw DataError("unknown filler backend: " + b.filler);
  }
  return set;
}

std::shared_ptr<backends::TrainableEncoder> trainable_or_throw(const BackendSet& set,
                                                               const AppConfig& cfg,
                                                               uint64_t seed) {
  if (!set.make_trainable) {
    throw DataError("encoder backend '" + cfg.backends.encoder +
                    "' does not support training; use \"tiny\"");
  }
  return set.make_trainable(seed);
}

// ---------------------------------------------------------------- pipeline

struct Pipeline {
  AppConfig cfg;
  BackendSet backends_;
  std::string config_hash;
  std::vector<corpus::LabeledText> data;
  std::optional<std::vector<corpus::LabeledText>> explicit_test;
  fs::path out;

  explicit Pipeline(AppConfig c) : cfg(std::move(c)) {
    if (cfg.dataset.empty()) throw DataError("no dataset given (--dataset or config)");
    backends_ = make_backends(cfg);
    data = corpus::filter_tags(corpus::load_jsonl(cfg.dataset), cfg.train_domain,
                               cfg.train_generator);
    if (data.empty()) throw DataError("dataset is empty after tag filtering");
    uint64_t h = rng::hash_bytes(resolved_config_json(cfg).dump());
    h = rng::hash_bytes(cfg.train_domain + "|" + cfg.train_generator + "|" +
                            cfg.test_domain + "|" + cfg.test_generator,
                        h);
    h = hash_file(cfg.dataset, h);
    if (!cfg.test_dataset.empty()) {
      explicit_test = corpus::load_jsonl(cfg.test_dataset);
      h = hash_file(cfg.test_dataset, h);
    } else if (!cfg.test_domain.empty() || !cfg.test_generator.empty()) {
      // cross-domain / cross-generator: disjoint tag filters over one file;
      // anything routed to the test side leaves the training pool
      explicit_test =
          corpus::filter_tags(corpus::load_jsonl(cfg.dataset), cfg.test_domain,
                              cfg.test_generator);
      std::unordered_set<std::string> test_ids;
      for (const auto& r : *explicit_test) test_ids.insert(r.id);
      std::erase_if(data, [&](const corpus::LabeledText& r) { return test_ids.count(r.id) > 0; });
      if (data.empty()) throw DataError("dataset is empty after tag filtering");
    }
    if (explicit_test) {
      explicit_test = corpus::filter_tags(*explicit_test, cfg.test_domain,
                                          cfg.test_generator);
      if (explicit_test->empty()) throw DataError("test set is empty after tag filtering");
    }
    config_hash = hex64(h);
    out = cfg.out_dir;
    fs::create_directories(out);
    fs::create_directories(out / "cache");
  }

  corpus::FewShotSplit split_for(uint64_t seed) const {
    return corpus::sample_few_shot(data, cfg.shots, seed,
                                   explicit_test ? &*explicit_test : nullptr);
  }

  perturb::PerturbConfig perturb_config(uint64_t seed, double proportion, int gap,
                                        double alpha) const {
    perturb::PerturbConfig pc;
    pc.alpha = alpha;
    pc.proportion = proportion;
    pc.gap = gap;
    pc.span = cfg.span;
    pc.window = cfg.train.window;
    pc.strategy = perturb::parse_strategy(cfg.strategy);
    pc.seed = rng::derive(seed, "perturb");
    pc.max_retries = cfg.max_retries;
    pc.threads = cfg.threads;
    pc.filler = backends_.filler;
    pc.scorer = backends_.scorer;
    return pc;
  }

  std::string pset_cache_key(const std::vector<corpus::LabeledText>& train,
                             const perturb::PerturbConfig& pc) const {
    uint64_t fp = 0x9e3779b97f4a7c15ULL;
    for (const auto& r : train) {
      fp = rng::hash_bytes(r.id, fp);
      fp = rng::hash_bytes(r.text, fp);
    }
    json key{{"fp", fp},
             {"strategy", perturb::strategy_name(pc.strategy)},
             {"proportion", pc.proportion},
             {"gap", pc.gap},
             {"span", pc.span},
             {"alpha", pc.alpha},
             {"window", pc.window},
             {"retries", pc.max_retries},
             {"seed", pc.seed},
             {"filler", cfg.backends.filler},
             {"filler_url", cfg.backends.filler_url}};
    return hex64(rng::hash_bytes(key.dump()));
  }

  perturb::PerturbationSet cached_pset(const std::vector<corpus::LabeledText>& train,
                                       const perturb::PerturbConfig& pc) const {
    const fs::path path = out / "cache" / ("pset_" + pset_cache_key(train, pc) + ".json");
    if (fs::exists(path)) {
      try {
        std::ifstream in(path);
        json j = json::parse(in);
        perturb::PerturbationSet set;
        for (const auto& r : j.at("originals")) set.originals.push_back(corpus::from_json(r));
        for (const auto& r : j.at("masked")) set.masked.push_back(corpus::from_json(r));
        for (const auto& r : j.at("filled")) set.filled.push_back(corpus::from_json(r));
        for (const auto& o : j.at("outcomes")) {
          set.fill_outcomes.push_back(perturb::fill_outcome_from_json(o));
        }
        if (set.originals.size() != train.size()) throw DataError("stale cache");
        return set;
      } catch (const std::exception& e) {
        std::cerr << json{{"warning", std::string("cache recompute: ") + e.what()},
                          {"file", path.string()}}
                         .dump()
                  << "\n";
      }
    }
    perturb::PerturbationSet set = perturb::build_perturbation_set(train, pc);
    json j{{"originals", json::array()},
           {"masked", json::array()},
           {"filled", json::array()},
           {"outcomes", json::array()}};
    for (const auto& r : set.originals) j["originals"].push_back(corpus::to_json(r));
    for (const auto& r : set.masked) j["masked"].push_back(corpus::to_json(r));
    for (const auto& r : set.filled) j["filled"].push_back(corpus::to_json(r));
    for (const auto& o : set.fill_outcomes) j["outcomes"].push_back(perturb::to_json(o));
    std::ofstream outj(path, std::ios::trunc);
    outj << j.dump();
    return set;
  }

  struct SeedRun {
    corpus::FewShotSplit split;
    trainer::TrainResult result;
  };

  SeedRun train_for(uint64_t seed, double proportion, int gap, double alpha,
                    double lambda) const {
    corpus::FewShotSplit split = split_for(seed);
    perturb::PerturbationSet pset =
        cached_pset(split.train, perturb_config(seed, proportion, gap, alpha));
    trainer::TrainConfig tc = cfg.train;
    tc.mask_proportion = proportion;
    tc.mask_gap = gap;
    tc.alpha = alpha;
    tc.lambda = lambda;
    tc.seed = seed;
    auto encoder = trainable_or_throw(backends_, cfg, seed);
    auto result = trainer::train(split, pset, tc, std::move(encoder));
    return {std::move(split), std::move(result)};
  }

  SeedRun train_for(uint64_t seed) const {
    return train_for(seed, cfg.train.mask_proportion, cfg.train.mask_gap, cfg.train.alpha,
                     cfg.train.lambda);
  }

  analysis::MetricsReport eval_cells(double proportion, int gap) const {
    return eval_cells(proportion, gap, cfg.train.alpha, cfg.train.lambda);
  }

  analysis::MetricsReport eval_cells(double proportion, int gap, double alpha,
                                     double lambda) const {
    std::vector<analysis::SeedMetrics> rows;
    for (uint64_t seed : cfg.seeds) {
      SeedRun run = train_for(seed, proportion, gap, alpha, lambda);
      if (run.split.test.empty()) throw DataError("eval: empty test split");
      std::vector<corpus::Label> gold, pred;
      for (const auto& r : run.split.test) {
        gold.push_back(r.label);
        pred.push_back(trainer::predict_one(run.result.model, r.text).label);
      }
      auto [acc, f1] = analysis::score_predictions(gold, pred);
      rows.push_back({seed, acc, f1});
    }
    return analysis::aggregate_seed_metrics(std::move(rows));
  }

  void write_json_report(const std::string& name, json j) const {
    j["config_hash"] = config_hash;
    std::ofstream fout(out / name, std::ios::trunc);
    if (!fout.is_open()) throw DataError("cannot write " + (out / name).string());
    fout << j.dump(2) << "\n";
  }

  json meta() const { return json{{"config_hash", config_hash}}; }
};

// ---------------------------------------------------------------- svg plots

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

void write_svg_chart(const fs::path& path, const std::string& title,
                     const std::string& x_label, const std::string& y_label,
                     const std::vector<Series>& series) {
  const int w = 640, h = 420, ml = 70, mr = 30, mt = 40, mb = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    for (auto [x, y] : s.points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  if (xmin > xmax) return;
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double ypad = (ymax - ymin) * 0.08;
  ymin -= ypad;
  ymax += ypad;
  auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto sy = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };
  const char* colors[] = {"#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ofstream svg(path, std::ios::trunc);
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">"
      << title << "</text>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr << "\" y2=\""
      << h - mb << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
      << h - mb << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = xmin + (xmax - xmin) * t / 4.0;
    const double yv = ymin + (ymax - ymin) * t / 4.0;
    svg << "<text x=\"" << sx(xv) << "\" y=\"" << h - mb + 18
        << "\" text-anchor=\"middle\">" << xv << "</text>\n";
    svg << "<text x=\"" << ml - 8 << "\" y=\"" << sy(yv) + 4
        << "\" text-anchor=\"end\">" << yv << "</text>\n";
  }
  svg << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\">" << x_label << "</text>\n";
  svg << "<text x=\"16\" y=\"" << (mt + h - mb) / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (mt + h - mb) / 2
      << ")\">" << y_label << "</text>\n";
  for (size_t i = 0; i < series.size(); ++i) {
    const char* color = colors[i % 6];
    svg << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (auto [x, y] : series[i].points) svg << sx(x) << "," << sy(y) << " ";
    svg << "\"/>\n";
    for (auto [x, y] : series[i].points) {
      svg << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"3\" fill=\""
          << color << "\"/>\n";
    }
    svg << "<text x=\"" << w - mr - 4 << "\" y=\"" << mt + 16 * (i + 1)
        << "\" text-anchor=\"end\" fill=\"" << color << "\">" << series[i].name
        << "</text>\n";
  }
  svg << "</svg>\n";
}

// ---------------------------------------------------------------- commands

void cmd_perturb(const Pipeline& pipe) {
  const AppConfig& cfg = pipe.cfg;
  std::vector<corpus::LabeledText> originals =
      cfg.shots > 0 ? pipe.split_for(cfg.seeds.at(0)).train : pipe.data;
  auto pc = pipe.perturb_config(cfg.seeds.at(0), cfg.train.mask_proportion,
                                cfg.train.mask_gap, cfg.train.alpha);
  perturb::PerturbationSet set = pipe.cached_pset(originals, pc);

  json meta = pipe.meta();
  corpus::save_jsonl((pipe.out / "originals.jsonl").string(), set.originals, &meta);
  corpus::save_jsonl((pipe.out / "masked.jsonl").string(), set.masked, &meta);
  corpus::save_jsonl((pipe.out / "filled.jsonl").string(), set.filled, &meta);

  json outcomes = json::array();
  for (const auto& o : set.fill_outcomes) outcomes.push_back(perturb::to_json(o));
  const double ratio = analysis::failure_ratio(set.fill_outcomes);
  pipe.write_json_report("outcomes.json", json{{"strategy", cfg.strategy},
                                               {"outcomes", outcomes},
                                               {"failure_ratio_percent", ratio}});
  std::cout << json{{"originals", set.originals.size()},
                    {"failure_ratio_percent", ratio},
                    {"out_dir", pipe.out.string()}}
                   .dump(2)
            << "\n";
}

void cmd_train(const Pipeline& pipe) {
  const uint64_t seed = pipe.cfg.seeds.at(0);
  Pipeline::SeedRun run = pipe.train_for(seed);
  fs::create_directories(pipe.out / "model");
  uint64_t fp = 0;
  for (const auto& r : run.split.train) fp = rng::hash_bytes(r.text, fp);
  run.result.model.save((pipe.out / "model").string(), fp);
  trainer::write_loss_csv((pipe.out / "loss_history.csv").string(), run.result.reports);

  const auto& last = run.result.reports.back();
  pipe.write_json_report(
      "train_report.json",
      json{{"seed", seed},
           {"train_size", run.split.train.size()},
           {"batches", run.result.reports.size()},
           {"final", {{"ce", last.ce}, {"con", last.con}, {"total", last.total}}}});
  std::cout << json{{"model_dir", (pipe.out / "model").string()},
                    {"final_total_loss", last.total}}
                   .dump(2)
            << "\n";
}

void cmd_eval(const Pipeline& pipe) {
  analysis::MetricsReport report =
      pipe.eval_cells(pipe.cfg.train.mask_proportion, pipe.cfg.train.mask_gap);
  pipe.write_json_report("metrics.json",
                         json{{"shots", pipe.cfg.shots}, {"report", to_json(report)}});
  std::ofstream csv(pipe.out / "metrics.csv", std::ios::trunc);
  csv << "seed,accuracy,f1\n";
  for (const auto& s : report.per_seed) {
    csv << s.seed << ',' << s.accuracy << ',' << s.f1 << "\n";
  }
  csv << "mean," << report.accuracy << ',' << report.f1 << "\n";
  csv << "std," << report.accuracy_std << ',' << report.f1_std << "\n";
  std::cout << to_json(report).dump(2) << "\n";
}

void cmd_baseline(const Pipeline& pipe) {
  const AppConfig& cfg = pipe.cfg;
  auto scorer = pipe.backends_.scorer;
  auto filler = pipe.backends_.filler;

  std::vector<analysis::SeedMetrics> rows;
  for (uint64_t seed : cfg.seeds) {
    corpus::FewShotSplit split = pipe.split_for(seed);
    if (split.test.empty()) throw DataError("baseline: empty test split");

    auto score_of = [&](const corpus::LabeledText& r, json* feature) {
      if (cfg.baseline_method == "gltr") {
        auto f = baselines::gltr_feature(r.text, *scorer);
        if (feature != nullptr) {
          *feature = json{{"buckets", f.bucket_counts}, {"fraction_top10", f.fraction_top10}};
        }
        return f.fraction_top10;
      }
      auto d = baselines::detectgpt_score(r.text, cfg.detectgpt_k, *scorer, *filler,
                                          rng::derive(seed, "detectgpt", rng::hash_bytes(r.id)));
      if (feature != nullptr) {
        *feature = json{{"logp_original", d.logp_original},
                        {"mean_logp_perturbed", d.mean_logp_perturbed},
                        {"std_logp_perturbed", d.std_logp_perturbed}};
      }
      return d.score;
    };

    std::vector<double> train_scores;
    std::vector<corpus::Label> train_labels;
    for (const auto& r : split.train) {
      train_scores.push_back(score_of(r, nullptr));
      train_labels.push_back(r.label);
    }
    baselines::ThresholdDetector det =
        baselines::calibrate_threshold(train_scores, train_labels);

    std::ofstream scores_out(pipe.out /
                             ("scores_" + cfg.baseline_method + "_" + std::to_string(seed) +
                              ".jsonl"),
                             std::ios::trunc);
    scores_out << json{{"_meta", pipe.meta()}}.dump() << "\n";
    std::vector<corpus::Label> gold, pred;
    for (const auto& r : split.test) {
      json feature;
      const double s = score_of(r, &feature);
      scores_out << json{{"id", r.id}, {"score", s}, {"feature", feature}}.dump() << "\n";
      gold.push_back(r.label);
      pred.push_back(det.classify(s));
    }
    auto [acc, f1] = analysis::score_predictions(gold, pred);
    rows.push_back({seed, acc, f1});
  }
  auto report = analysis::aggregate_seed_metrics(std::move(rows));
  pipe.write_json_report("baseline_metrics.json",
                         json{{"method", cfg.baseline_method}, {"report", to_json(report)}});
  std::cout << to_json(report).dump(2) << "\n";
}

void analyze_diversity(const Pipeline& pipe) {
  std::vector<std::string> texts;
  for (const auto& r : pipe.data) texts.push_back(r.text);
  json report{{"dataset", pipe.cfg.dataset},
              {"dist1", analysis::distinct_n(texts, 1)},
              {"dist2", analysis::distinct_n(texts, 2)}};
  if (!pipe.cfg.compare_path.empty()) {
    std::vector<std::string> other;
    for (const auto& r : corpus::load_jsonl(pipe.cfg.compare_path)) other.push_back(r.text);
    report["compare"] = json{{"dataset", pipe.cfg.compare_path},
                             {"dist1", analysis::distinct_n(other, 1)},
                             {"dist2", analysis::distinct_n(other, 2)}};
  }
  pipe.write_json_report("diversity.json", report);
  std::cout << report.dump(2) << "\n";
}

void analyze_failure(const Pipeline& pipe) {
  json report;
  if (!pipe.cfg.outcomes_path.empty()) {
    std::ifstream in(pipe.cfg.outcomes_path);
    if (!in.is_open()) throw DataError("cannot open " + pipe.cfg.outcomes_path);
    json j = json::parse(in);
    std::vector<perturb::FillOutcome> outcomes;
    for (const auto& o : j.at("outcomes")) {
      outcomes.push_back(perturb::fill_outcome_from_json(o));
    }
    report["failure_ratio_percent"] = analysis::failure_ratio(outcomes);
    report["strategy"] = j.value("strategy", "unknown");
  } else {
    // one ratio per selection strategy on the same split
    const uint64_t seed = pipe.cfg.seeds.at(0);
    corpus::FewShotSplit split = pipe.split_for(seed);
    json per_strategy = json::object();
    for (const char* strategy : {"random", "prob_rank", "importance"}) {
      auto pc = pipe.perturb_config(seed, pipe.cfg.train.mask_proportion,
                                    pipe.cfg.train.mask_gap, pipe.cfg.train.alpha);
      pc.strategy = perturb::parse_strategy(strategy);
      auto set = perturb::build_perturbation_set(split.train, pc);
      per_strategy[strategy] = analysis::failure_ratio(set.fill_outcomes);
    }
    report["failure_ratio_percent"] = per_strategy;
  }
  pipe.write_json_report("failure.json", report);
  std::cout << report.dump(2) << "\n";
}

void analyze_robustness(const Pipeline& pipe) {
  const uint64_t seed = pipe.cfg.seeds.at(0);
  Pipeline::SeedRun run = pipe.train_for(seed);
  if (run.split.test.empty()) throw DataError("robustness: empty test split");
  analysis::Predictor predict = [&](const corpus::LabeledText& r) {
    return trainer::predict_one(run.result.model, r.text).label;
  };
  auto vocab = analysis::build_vocab(run.split.test);

  std::vector<corpus::Label> gold, pred;
  for (const auto& r : run.split.test) {
    gold.push_back(r.label);
    pred.push_back(predict(r));
  }
  auto [orig_acc, orig_f1] = analysis::score_predictions(gold, pred);

  json rows = json::array();
  for (auto op : {analysis::RobustnessOp::Delete, analysis::RobustnessOp::Replace,
                  analysis::RobustnessOp::Insert, analysis::RobustnessOp::Repeat}) {
    analysis::RobustnessSpec spec{op, pipe.cfg.robustness_rate,
                                  rng::derive(seed, analysis::robustness_op_name(op))};
    auto perturbed = analysis::robustness_perturb(run.split.test, spec, vocab);
    if (perturbed.records.empty()) throw DataError("robustness: perturbation emptied the set");
    if (!perturbed.dropped_ids.empty()) {
      std::cerr << json{{"warning", "texts emptied by perturbation were dropped"},
                        {"count", perturbed.dropped_ids.size()}}
                       .dump()
                << "\n";
    }
    std::vector<corpus::Label> pg, pp;
    for (const auto& r : perturbed.records) {
      pg.push_back(r.label);
      pp.push_back(predict(r));
    }
    auto [acc, f1] = analysis::score_predictions(pg, pp);
    rows.push_back(json{{"op", analysis::robustness_op_name(op)},
                        {"accuracy", acc},
                        {"f1", f1},
                        {"affinity", acc - orig_acc},
                        {"dropped", perturbed.dropped_ids.size()}});
  }
  json report{{"rate", pipe.cfg.robustness_rate},
              {"original", {{"accuracy", orig_acc}, {"f1", orig_f1}}},
              {"perturbed", rows}};
  pipe.write_json_report("robustness.json", report);
  std::ofstream csv(pipe.out / "robustness.csv", std::ios::trunc);
  csv << "op,accuracy,f1,affinity\n";
  csv << "original," << orig_acc << ',' << orig_f1 << ",0\n";
  for (const auto& row : rows) {
    csv << row.at("op").get<std::string>() << ',' << row.at("accuracy").get<double>()
        << ',' << row.at("f1").get<double>() << ',' << row.at("affinity").get<double>()
        << "\n";
  }
  std::cout << report.dump(2) << "\n";
}

void analyze_chunks(const Pipeline& pipe) {
  const uint64_t seed = pipe.cfg.seeds.at(0);
  Pipeline::SeedRun run = pipe.train_for(seed);
  if (run.split.test.empty()) throw DataError("chunks: empty test split");

  json rows = json::array();
  Series curve{"accuracy", {}};
  for (int length : pipe.cfg.chunk_lengths) {
    auto chunked = corpus::chunk(run.split.test, length);
    if (chunked.empty()) {
      std::cerr << json{{"warning", "no chunks at this length"}, {"length", length}}.dump()
                << "\n";
      continue;
    }
    std::vector<corpus::Label> gold, pred;
    for (const auto& r : chunked) {
      gold.push_back(r.label);
      pred.push_back(trainer::predict_one(run.result.model, r.text).label);
    }
    auto [acc, f1] = analysis::score_predictions(gold, pred);
    rows.push_back(json{{"length", length},
                        {"chunks", chunked.size()},
                        {"accuracy", acc},
                        {"f1", f1}});
    curve.points.emplace_back(length, acc);
  }
  pipe.write_json_report("chunks.json", json{{"rows", rows}});
  std::ofstream csv(pipe.out / "chunks.csv", std::ios::trunc);
  csv << "length,chunks,accuracy,f1\n";
  for (const auto& row : rows) {
    csv << row.at("length").get<int>() << ',' << row.at("chunks").get<size_t>() << ','
        << row.at("accuracy").get<double>() << ',' << row.at("f1").get<double>() << "\n";
  }
  if (pipe.cfg.plot) {
    write_svg_chart(pipe.out / "chunks.svg", "Accuracy vs. chunk length", "chunk length",
                    "accuracy", {curve});
  }
  std::cout << rows.dump(2) << "\n";
}

void cmd_analyze(const Pipeline& pipe) {
  const std::string& what = pipe.cfg.analyze_what;
  if (what == "diversity") analyze_diversity(pipe);
  else if (what == "failure") analyze_failure(pipe);
  else if (what == "robustness") analyze_robustness(pipe);
  else if (what == "chunks") analyze_chunks(pipe);
  else throw DataError("unknown analyze target: " + what);
}

void cmd_sweep(const Pipeline& pipe) {
  const AppConfig& cfg = pipe.cfg;
  const std::vector<double> alphas =
      cfg.sweep_alpha.empty() ? std::vector<double>{cfg.train.alpha} : cfg.sweep_alpha;
  const std::vector<double> lambdas =
      cfg.sweep_lambda.empty() ? std::vector<double>{cfg.train.lambda} : cfg.sweep_lambda;

  json cells = json::array();
  std::ofstream csv(pipe.out / "sweep.csv", std::ios::trunc);
  csv << "proportion,gap,alpha,lambda,accuracy,accuracy_std,f1,f1_std\n";
  std::vector<Series> proportion_series;
  Series alpha_series{"accuracy", {}};
  for (double alpha : alphas) {
    for (double lambda : lambdas) {
      for (int gap : cfg.sweep_gap) {
        Series s{"gap " + std::to_string(gap), {}};
        for (double proportion : cfg.sweep_proportion) {
          analysis::MetricsReport r = pipe.eval_cells(proportion, gap, alpha, lambda);
          cells.push_back(json{{"proportion", proportion},
                               {"gap", gap},
                               {"alpha", alpha},
                               {"lambda", lambda},
                               {"report", to_json(r)}});
          csv << proportion << ',' << gap << ',' << alpha << ',' << lambda << ','
              << r.accuracy << ',' << r.accuracy_std << ',' << r.f1 << ',' << r.f1_std
              << "\n";
          s.points.emplace_back(proportion, r.accuracy);
          if (gap == cfg.sweep_gap.front() && proportion == cfg.sweep_proportion.front() &&
              lambda == lambdas.front()) {
            alpha_series.points.emplace_back(alpha, r.accuracy);
          }
        }
        if (alpha == alphas.front() && lambda == lambdas.front()) {
          proportion_series.push_back(std::move(s));
        }
      }
    }
  }
  pipe.write_json_report("sweep.json", json{{"cells", cells}});
  if (cfg.plot) {
    write_svg_chart(pipe.out / "sweep.svg", "Accuracy vs. mask proportion",
                    "mask proportion", "accuracy", proportion_series);
    if (alphas.size() > 1) {
      write_svg_chart(pipe.out / "sweep_alpha.svg", "Accuracy vs. score threshold",
                      "score threshold", "accuracy", {alpha_series});
    }
  }
  std::cout << json{{"cells", cells.size()}, {"out_dir", pipe.out.string()}}.dump(2)
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  AppConfig cfg;

  // the config file applies before flag overrides
  try {
    for (int i = 1; i + 1 < argc; ++i) {
      if (std::string(argv[i]) == "--config") apply_config_file(cfg, argv[i + 1]);
    }
  } catch (const DataError& e) {
    std::cerr << json{{"error", {{"type", "data"}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  }

  CLI::App app{"machine-generated-text detection toolkit"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file");
  app.add_option("--dataset", cfg.dataset, "training corpus (JSONL)");
  app.add_option("--test-dataset", cfg.test_dataset, "explicit test corpus (JSONL)");
  app.add_option("--train-domain", cfg.train_domain, "keep only this domain for training");
  app.add_option("--train-generator", cfg.train_generator,
                 "keep only this generator for training");
  app.add_option("--test-domain", cfg.test_domain, "evaluate on this domain only");
  app.add_option("--test-generator", cfg.test_generator,
                 "evaluate on this generator only");
  app.add_option("--out", cfg.out_dir, "output directory");
  app.add_option("--shots", cfg.shots, "few-shot training size (0 = whole file)");
  app.add_option("--seeds", cfg.seeds, "seeds, comma separated")->delimiter(',');
  app.add_option("--strategy", cfg.strategy, "mask strategy: random|prob_rank|importance");
  app.add_option("--proportion", cfg.train.mask_proportion, "mask proportion P");
  app.add_option("--gap", cfg.train.mask_gap, "mask gap");
  app.add_option("--span", cfg.span, "mask span (words per placeholder)");
  app.add_option("--alpha", cfg.train.alpha, "importance score threshold");
  app.add_option("--lambda", cfg.train.lambda, "contrastive loss weight");
  app.add_option("--epochs", cfg.train.epochs, "training epochs");
  app.add_option("--lr", cfg.train.lr, "learning rate");
  app.add_option("--batch-size", cfg.train.batch_size, "batch size");
  app.add_flag("--no-masked", [&](size_t) { cfg.train.use_masked = false; },
               "drop masked variants from training");
  app.add_flag("--no-filled", [&](size_t) { cfg.train.use_filled = false; },
               "drop filled variants from training");
  app.add_flag("--no-contrastive", [&](size_t) { cfg.train.use_contrastive = false; },
               "train with cross-entropy only");
  app.add_flag("--no-weights", [&](size_t) { cfg.train.use_weights = false; },
               "zero all token weights");
  app.add_option("--method", cfg.baseline_method, "baseline: gltr|detectgpt");
  app.add_option("--k", cfg.detectgpt_k, "perturbed copies for detectgpt");
  app.add_option("--what", cfg.analyze_what,
                 "analysis: diversity|failure|robustness|chunks");
  app.add_option("--rate", cfg.robustness_rate, "robustness perturbation rate");
  app.add_option("--outcomes", cfg.outcomes_path, "outcomes.json for failure analysis");
  app.add_option("--compare", cfg.compare_path, "second corpus for diversity comparison");
  app.add_option("--chunk-lengths", cfg.chunk_lengths, "chunk lengths")->delimiter(',');
  app.add_flag("--plot", cfg.plot, "emit SVG charts");

  auto* perturb_cmd = app.add_subcommand("perturb", "write masked and filled variants");
  auto* train_cmd = app.add_subcommand("train", "train a detector on one seed");
  auto* eval_cmd = app.add_subcommand("eval", "train and evaluate over seeds");
  auto* baseline_cmd = app.add_subcommand("baseline", "threshold-calibrated baselines");
  auto* analyze_cmd = app.add_subcommand("analyze", "diagnostics and reports");
  auto* sweep_cmd = app.add_subcommand("sweep", "hyperparameter grid evaluation");
  for (auto* sub : {perturb_cmd, train_cmd, eval_cmd, baseline_cmd, analyze_cmd, sweep_cmd}) {
    sub->fallthrough();
  }

  CLI11_PARSE(app, argc, argv);

  try {
    Pipeline pipe(cfg);
    if (perturb_cmd->parsed()) cmd_perturb(pipe);
    else if (train_cmd->parsed()) cmd_train(pipe);
    else if (eval_cmd->parsed()) cmd_eval(pipe);
    else if (baseline_cmd->parsed()) cmd_baseline(pipe);
    else if (analyze_cmd->parsed()) cmd_analyze(pipe);
    else if (sweep_cmd->parsed()) cmd_sweep(pipe);
  } catch (const DataError& e) {
    std::cerr << json{{"error", {{"type", "data"}, {"message", e.what()}}}}.dump() << "\n";
    return 2;
  } catch (const BackendError& e) {
    std::cerr << json{{"error", {{"type", "backend"}, {"message", e.what()}}}}.dump()
              << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"type", "internal"}, {"message", e.what()}}}}.dump()
              << "\n";
    return 1;
  }
  return 0;
}
