#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgtd/backends.hpp"
#include "mgtd/corpus.hpp"
#include "mgtd/error.hpp"
#include "mgtd/importance.hpp"
#include "mgtd/perturb.hpp"
#include "mgtd/rng.hpp"
#include "mgtd/tokenize.hpp"

namespace mgtd::trainer {

struct ReconstructedFeatures {
  std::vector<std::vector<double>> hidden_prime;  // row n = hidden row n * (1 + w_n)
  std::vector<double> pooled;                     // mean over non-special rows
  std::vector<double> anchor;                     // reconstructed row 0
};

/// Scales each hidden row by (1 + w). The classifier consumes the mean of the
/// reconstructed non-special rows; the contrastive anchor is reconstructed
/// row 0.
inline ReconstructedFeatures reconstruct(const backends::EncoderOutput& out,
                                         const std::vector<double>& subword_weights) {
  if (subword_weights.size() != out.hidden.size()) {
    throw DataError("reconstruct: weight count does not match hidden rows");
  }
  if (out.hidden.empty()) throw DataError("reconstruct: empty encoder output");
  ReconstructedFeatures rf;
  rf.hidden_prime.resize(out.hidden.size());
  for (size_t r = 0; r < out.hidden.size(); ++r) {
    rf.hidden_prime[r].resize(out.hidden[r].size());
    const double scale = 1.0 + subword_weights[r];
    for (size_t k = 0; k < out.hidden[r].size(); ++k) {
      rf.hidden_prime[r][k] = out.hidden[r][k] * scale;
    }
  }
  rf.pooled.assign(out.d, 0.0);
  size_t pool_count = 0;
  for (size_t r = 0; r < rf.hidden_prime.size(); ++r) {
    auto [b, e] = out.subword_spans[r];
    if (b == e) continue;
    for (int k = 0; k < out.d; ++k) rf.pooled[k] += rf.hidden_prime[r][k];
    ++pool_count;
  }
  if (pool_count == 0) {
    for (const auto& row : rf.hidden_prime) {
      for (int k = 0; k < out.d; ++k) rf.pooled[k] += row[k];
    }
    pool_count = rf.hidden_prime.size();
  }
  for (int k = 0; k < out.d; ++k) rf.pooled[k] /= static_cast<double>(pool_count);
  rf.anchor = rf.hidden_prime[0];
  return rf;
}

struct LossParts {
  double pos = 0.0;
  double neg = 0.0;
  double xi = 0.0;
  double con = 0.0;
};

namespace detail {

inline std::vector<std::vector<double>> squared_distances(
    const std::vector<std::vector<double>>& anchors) {
  const size_t m = anchors.size();
  const size_t d = anchors.empty() ? 0 : anchors[0].size();
  for (const auto& a : anchors) {
    if (a.size() != d) throw DataError("contrastive_loss: anchor dimension mismatch");
  }
  std::vector<double> sq(m, 0.0);
  for (size_t i = 0; i < m; ++i) {
    for (double v : anchors[i]) sq[i] += v * v;
  }
  std::vector<std::vector<double>> d2(m, std::vector<double>(m, 0.0));
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = i + 1; j < m; ++j) {
      double dot = 0.0;
      for (size_t k = 0; k < d; ++k) dot += anchors[i][k] * anchors[j][k];
      double v = sq[i] + sq[j] - 2.0 * dot;
      if (v < 0.0) v = 0.0;  // numeric floor
      d2[i][j] = d2[j][i] = v;
    }
  }
  return d2;
}

}  // namespace detail

/// Multi-pairwise contrastive loss over batch anchors: averaged same-label
/// squared distances pull together, different-label pairs are pushed apart
/// by a hinge whose margin xi is the largest same-label squared distance in
/// the batch. xi is a per-batch constant: no gradient flows through it.
/// Samples with an empty positive or negative set contribute zero.
inline LossParts contrastive_loss(const std::vector<std::vector<double>>& anchors,
                                  const std::vector<int>& labels) {
  const size_t m = anchors.size();
  if (m == 0) throw DataError("contrastive_loss: empty batch");
  if (labels.size() != m) throw DataError("contrastive_loss: label count mismatch");
  auto d2 = detail::squared_distances(anchors);

  LossParts parts;
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = i + 1; j < m; ++j) {
      if (labels[i] == labels[j]) parts.xi = std::max(parts.xi, d2[i][j]);
    }
  }
  for (size_t i = 0; i < m; ++i) {
    double pos_sum = 0.0, neg_sum = 0.0;
    int pos_cnt = 0, neg_cnt = 0;
    for (size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        pos_sum += d2[i][j];
        ++pos_cnt;
      }
    }
    for (size_t j = 0; j < m; ++j) {
      if (labels[j] != labels[i]) {
        neg_sum += std::max(0.0, parts.xi - d2[i][j]);
        ++neg_cnt;
      }
    }
    if (pos_cnt > 0) parts.pos += pos_sum / pos_cnt;
    if (neg_cnt > 0) parts.neg += neg_sum / neg_cnt;
  }
  parts.con = (parts.pos + parts.neg) / static_cast<double>(m);
  return parts;
}

/// d(con)/d(anchors) with xi held constant. Hinge terms at exactly zero are
/// treated as inactive.
inline std::vector<std::vector<double>> contrastive_grad(
    const std::vector<std::vector<double>>& anchors, const std::vector<int>& labels,
    double xi) {
  const size_t m = anchors.size();
  const size_t d = anchors.empty() ? 0 : anchors[0].size();
  auto d2 = detail::squared_distances(anchors);
  std::vector<int> pos_cnt(m, 0), neg_cnt(m, 0);
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) ++pos_cnt[i];
      else ++neg_cnt[i];
    }
  }
  std::vector<std::vector<double>> grad(m, std::vector<double>(d, 0.0));
  const double inv_m = 1.0 / static_cast<double>(m);
  for (size_t i = 0; i < m; ++i) {
    for (size_t j = 0; j < m; ++j) {
      if (j == i) continue;
      if (labels[j] == labels[i]) {
        const double c = 2.0 * inv_m / pos_cnt[i];
        for (size_t k = 0; k < d; ++k) {
          const double diff = anchors[i][k] - anchors[j][k];
          grad[i][k] += c * diff;
          grad[j][k] -= c * diff;
        }
      } else if (xi - d2[i][j] > 0.0) {
        const double c = 2.0 * inv_m / neg_cnt[i];
        for (size_t k = 0; k < d; ++k) {
          const double diff = anchors[i][k] - anchors[j][k];
          grad[i][k] -= c * diff;
          grad[j][k] += c * diff;
        }
      }
    }
  }
  return grad;
}

inline double total_loss(double ce, double con, double lambda) {
  return ce + lambda * con;
}

struct LossReport {
  int epoch = 0;
  double ce = 0.0;
  double pos = 0.0;
  double neg = 0.0;
  double xi = 0.0;
  double con = 0.0;
  double total = 0.0;
  double lambda = 0.0;
  int batch_size = 0;
};

inline void write_loss_csv(const std::string& path, const std::vector<LossReport>& reports) {
  std::ofstream out(path, std::ios::trunc);
  if (!out.is_open()) throw DataError("cannot write " + path);
  out << "epoch,ce,pos,neg,xi,con,total\n";
  out.precision(12);
  for (const auto& r : reports) {
    out << r.epoch << ',' << r.ce << ',' << r.pos << ',' << r.neg << ',' << r.xi << ','
        << r.con << ',' << r.total << "\n";
  }
}

struct TrainConfig {
  int epochs = 30;
  double lr = 1e-5;
  double weight_decay = 0.01;
  int batch_size = 16;
  int mask_gap = 2;
  double mask_proportion = 0.10;
  double alpha = 0.4;
  double lambda = 1.0;
  int window = 1;
  uint64_t seed = 0;
  bool use_masked = true;
  bool use_filled = true;
  bool use_contrastive = true;
  bool use_weights = true;
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"mask_gap", c.mask_gap},
          {"mask_proportion", c.mask_proportion},
          {"alpha", c.alpha},
          {"lambda", c.lambda},
          {"window", c.window},
          {"seed", c.seed},
          {"use_masked", c.use_masked},
          {"use_filled", c.use_filled},
          {"use_contrastive", c.use_contrastive},
          {"use_weights", c.use_weights}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.mask_gap = j.value("mask_gap", c.mask_gap);
  c.mask_proportion = j.value("mask_proportion", c.mask_proportion);
  c.alpha = j.value("alpha", c.alpha);
  c.lambda = j.value("lambda", c.lambda);
  c.window = j.value("window", c.window);
  c.seed = j.value("seed", c.seed);
  c.use_masked = j.value("use_masked", c.use_masked);
  c.use_filled = j.value("use_filled", c.use_filled);
  c.use_contrastive = j.value("use_contrastive", c.use_contrastive);
  c.use_weights = j.value("use_weights", c.use_weights);
  return c;
}

struct Prediction {
  corpus::Label label = corpus::Label::Human;
  double p_machine = 0.0;
  double p_human = 0.0;
};

class DetectorModel {
 public:
  DetectorModel() = default;
  DetectorModel(std::shared_ptr<backends::TrainableEncoder> encoder, TrainConfig config)
      : encoder_(std::move(encoder)), config_(config) {}

  const TrainConfig& config() const { return config_; }
  const std::shared_ptr<backends::TrainableEncoder>& encoder() const { return encoder_; }

  void save(const std::string& dir, uint64_t data_fingerprint = 0) const {
    encoder_->save(dir + "/weights.json");
    nlohmann::json side{{"config", to_json(config_)},
                        {"seed", config_.seed},
                        {"data_fingerprint", data_fingerprint}};
    std::ofstream out(dir + "/model.json", std::ios::trunc);
    if (!out.is_open()) throw DataError("cannot write " + dir + "/model.json");
    out << side.dump(2);
  }

  static DetectorModel load(const std::string& dir,
                            std::shared_ptr<backends::TrainableEncoder> encoder) {
    std::ifstream in(dir + "/model.json");
    if (!in.is_open()) throw DataError("cannot open " + dir + "/model.json");
    nlohmann::json side = nlohmann::json::parse(in);
    encoder->load(dir + "/weights.json");
    return DetectorModel(std::move(encoder), train_config_from_json(side.at("config")));
  }

 private:
  std::shared_ptr<backends::TrainableEncoder> encoder_;
  TrainConfig config_;
};

namespace detail {

inline std::array<double, 2> softmax2(const std::array<double, 2>& z) {
  const double mx = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - mx);
  const double e1 = std::exp(z[1] - mx);
  const double s = e0 + e1;
  return {e0 / s, e1 / s};
}

/// Per-text inputs reused across epochs: tokenization and subword weights are
/// fixed, the hidden states are not.
struct SampleInputs {
  std::string text;
  int label = 0;  // 1 = machine
  tok::TokenizedDoc doc;
  importance::ImportanceProfile profile;
};

inline std::vector<double> subword_weights_for(const SampleInputs& s,
                                               const backends::EncoderOutput& out,
                                               bool use_weights) {
  if (!use_weights) return std::vector<double>(out.hidden.size(), 0.0);
  auto [w, flags] = importance::map_to_subwords(s.profile, s.doc, out.subword_spans,
                                                s.text.size());
  (void)flags;
  return w;
}

}  // namespace detail

struct TrainResult {
  DetectorModel model;
  std::vector<LossReport> reports;  // one per batch
};

/// Fine-tunes the encoder and its head on originals plus perturbation
/// variants (per ablation flags) with cross-entropy and the weighted
/// contrastive objective. Deterministic given seed and backend responses.
inline TrainResult train(const corpus::FewShotSplit& split,
                         const perturb::PerturbationSet& pset, const TrainConfig& config,
                         std::shared_ptr<backends::TrainableEncoder> encoder) {
  if (!encoder) throw DataError("train: backend without training capability");
  if (pset.originals.size() != split.train.size()) {
    throw DataError("train: perturbation set does not match the training split");
  }
  for (size_t i = 0; i < pset.originals.size(); ++i) {
    if (pset.originals[i].id != split.train[i].id) {
      throw DataError("train: perturbation set does not match the training split");
    }
  }

  const std::vector<corpus::LabeledText> all =
      pset.union_set(config.use_masked, config.use_filled);
  std::vector<detail::SampleInputs> samples(all.size());
  for (size_t i = 0; i < all.size(); ++i) {
    samples[i].text = all[i].text;
    samples[i].label = all[i].label == corpus::Label::Machine ? 1 : 0;
    samples[i].doc = tok::tokenize_words(all[i].text);
    if (config.use_weights) {
      samples[i].profile =
          importance::build_profile(samples[i].doc, config.alpha, config.window);
    }
  }

  const double lambda = config.use_contrastive ? config.lambda : 0.0;
  std::vector<LossReport> reports;
  std::vector<size_t> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng::SplitMix64 g(rng::derive(config.seed, "epoch", epoch));
    rng::shuffle(order, g);

    for (size_t start = 0; start < order.size(); start += config.batch_size) {
      const size_t stop = std::min(order.size(), start + config.batch_size);
      const int m = static_cast<int>(stop - start);

      encoder->zero_grad();
      std::vector<backends::EncoderOutput> outs(m);
      std::vector<std::vector<double>> weights(m);
      std::vector<ReconstructedFeatures> feats(m);
      std::vector<std::vector<double>> anchors(m);
      std::vector<int> labels(m);
      std::vector<std::array<double, 2>> probs(m);
      double ce = 0.0;

      for (int s = 0; s < m; ++s) {
        const auto& sample = samples[order[start + s]];
        outs[s] = encoder->encode_train(sample.text, s);
        weights[s] = detail::subword_weights_for(sample, outs[s], config.use_weights);
        feats[s] = reconstruct(outs[s], weights[s]);
        anchors[s] = feats[s].anchor;
        labels[s] = sample.label;
        probs[s] = detail::softmax2(encoder->classify(feats[s].pooled, s));
        ce += -std::log(std::max(probs[s][sample.label], 1e-300));
      }
      ce /= m;

      LossParts parts;
      std::vector<std::vector<double>> anchor_grad;
      if (lambda != 0.0) {
        parts = contrastive_loss(anchors, labels);
        anchor_grad = contrastive_grad(anchors, labels, parts.xi);
      }

      LossReport rep;
      rep.epoch = epoch;
      rep.ce = ce;
      rep.pos = parts.pos;
      rep.neg = parts.neg;
      rep.xi = parts.xi;
      rep.con = parts.con;
      rep.lambda = lambda;
      rep.total = total_loss(ce, parts.con, lambda);
      rep.batch_size = m;
      reports.push_back(rep);

      for (int s = 0; s < m; ++s) {
        std::array<double, 2> d_logits;
        for (int c = 0; c < 2; ++c) {
          d_logits[c] = (probs[s][c] - (labels[s] == c ? 1.0 : 0.0)) / m;
        }
        std::vector<double> d_pooled = encoder->head_backward(s, d_logits);

        const auto& out = outs[s];
        size_t pool_count = 0;
        for (auto [b, e] : out.subword_spans) {
          if (b != e) ++pool_count;
        }
        const bool pool_all = pool_count == 0;
        if (pool_all) pool_count = out.hidden.size();

        std::vector<std::vector<double>> d_hidden(out.hidden.size(),
                                                  std::vector<double>(out.d, 0.0));
        for (size_t r = 0; r < out.hidden.size(); ++r) {
          auto [b, e] = out.subword_spans[r];
          if (pool_all || b != e) {
            for (int k = 0; k < out.d; ++k) {
              d_hidden[r][k] += d_pooled[k] / static_cast<double>(pool_count);
            }
          }
        }
        if (lambda != 0.0) {
          for (int k = 0; k < out.d; ++k) d_hidden[0][k] += lambda * anchor_grad[s][k];
        }
        for (size_t r = 0; r < d_hidden.size(); ++r) {
          const double scale = 1.0 + weights[s][r];
          for (int k = 0; k < out.d; ++k) d_hidden[r][k] *= scale;
        }
        encoder->encoder_backward(s, d_hidden);
      }
      encoder->step(config.lr, config.weight_decay);
    }
  }

  return {DetectorModel(std::move(encoder), config), std::move(reports)};
}

/// Argmax prediction over the two-way head; no decision threshold involved.
inline Prediction predict_one(const DetectorModel& model, const std::string& text) {
  if (text.empty()) throw DataError("predict: empty text");
  const TrainConfig& cfg = model.config();
  auto enc = model.encoder();
  backends::EncoderOutput out = enc->encode(text);
  std::vector<double> weights(out.hidden.size(), 0.0);
  if (cfg.use_weights) {
    tok::TokenizedDoc doc = tok::tokenize_words(text);
    importance::ImportanceProfile profile =
        importance::build_profile(doc, cfg.alpha, cfg.window);
    auto [w, flags] = importance::map_to_subwords(profile, doc, out.subword_spans, text.size());
    (void)flags;
    weights = std::move(w);
  }
  ReconstructedFeatures rf = reconstruct(out, weights);
  auto p = detail::softmax2(enc->classify(rf.pooled, 0));
  Prediction pred;
  pred.p_human = p[0];
  pred.p_machine = p[1];
  pred.label = p[1] > p[0] ? corpus::Label::Machine : corpus::Label::Human;
  return pred;
}

inline std::vector<Prediction> predict(const DetectorModel& model,
                                       const std::vector<std::string>& texts) {
  std::vector<Prediction> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(predict_one(model, t));
  return out;
}

}  // namespace mgtd::trainer
