#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "mgtd/backends.hpp"
#include "mgtd/rng.hpp"
#include "mgtd/tokenize.hpp"

namespace mgtd::backends {

namespace detail {

/// Word tokens split into pieces of at most four codepoints, preceded by a
/// special row with an empty span. Mimics subword tokenization closely enough
/// to exercise word-to-subword alignment.
inline std::vector<std::pair<size_t, size_t>> subword_spans_for(const std::string& text) {
  std::vector<std::pair<size_t, size_t>> spans;
  spans.emplace_back(0, 0);  // leading special token
  tok::TokenizedDoc doc = tok::tokenize_words(text);
  for (const auto& w : doc.words) {
    auto cps = tok::detail::decode_utf8(w.surface);
    size_t piece_begin = w.begin;
    for (size_t c = 0; c < cps.size(); c += 4) {
      size_t last = std::min(c + 4, cps.size()) - 1;
      size_t piece_end = w.begin + cps[last].end;
      spans.emplace_back(piece_begin, piece_end);
      piece_begin = piece_end;
    }
  }
  return spans;
}

}  // namespace detail

/// Deterministic non-trainable encoder: rows are seeded by (piece, position).
class HashEncoder : public Encoder {
 public:
  explicit HashEncoder(int d = 16, size_t max_len = 512, bool allow_truncation = true)
      : d_(d), max_len_(max_len), allow_truncation_(allow_truncation) {}

  int hidden_width() const override { return d_; }

  EncoderOutput encode(const std::string& text) override {
    if (text.empty()) throw DataError("encode: empty text");
    EncoderOutput out;
    out.d = d_;
    out.subword_spans = detail::subword_spans_for(text);
    if (out.subword_spans.size() > max_len_) {
      if (!allow_truncation_) throw DataError("encode: input exceeds max length");
      out.subword_spans.resize(max_len_);
      out.truncated = true;
    }
    out.hidden.resize(out.subword_spans.size());
    std::vector<double> mean(d_, 0.0);
    for (size_t i = 1; i < out.subword_spans.size(); ++i) {
      auto [b, e] = out.subword_spans[i];
      std::string piece = tok::fold_case(text.substr(b, e - b));
      rng::SplitMix64 g(rng::hash_bytes(piece) ^ rng::derive(0x5eed, "row", i));
      out.hidden[i].resize(d_);
      for (int k = 0; k < d_; ++k) {
        out.hidden[i][k] = g.uniform_range(-1.0, 1.0);
        mean[k] += out.hidden[i][k];
      }
    }
    const size_t tokens = out.subword_spans.size() - 1;
    out.hidden[0].resize(d_);
    for (int k = 0; k < d_; ++k) {
      out.hidden[0][k] = tokens > 0 ? mean[k] / static_cast<double>(tokens) : 0.0;
    }
    return out;
  }

 private:
  int d_;
  size_t max_len_;
  bool allow_truncation_;
};

/// Deterministic causal scorer: the rank of each token is a hash of the
/// (previous, current) word pair, log-probability decays with rank.
class HashScorer : public CausalScorer {
 public:
  explicit HashScorer(int max_rank = 5000) : max_rank_(max_rank) {}

  CausalScore score(const std::string& text) override {
    if (text.empty()) throw DataError("score: empty text");
    tok::TokenizedDoc doc = tok::tokenize_words(text);
    CausalScore cs;
    std::string prev = "<bos>";
    for (const auto& w : doc.words) {
      std::string cur = tok::fold_case(w.surface);
      uint64_t h = rng::hash_bytes(prev + "\x1f" + cur);
      int rank = 1 + static_cast<int>(h % static_cast<uint64_t>(max_rank_));
      cs.token_ranks.push_back(rank);
      cs.token_logprobs.push_back(-std::log1p(static_cast<double>(rank)));
      cs.token_spans.emplace_back(w.begin, w.end);
      prev = cur;
    }
    return cs;
  }

 private:
  int max_rank_;
};

/// Scorer with a uniform next-token distribution over a vocabulary of size V:
/// every log-probability is -log V and ranks are hashed into [1, V].
class UniformScorer : public CausalScorer {
 public:
  explicit UniformScorer(int vocab) : vocab_(vocab) {}

  CausalScore score(const std::string& text) override {
    if (text.empty()) throw DataError("score: empty text");
    tok::TokenizedDoc doc = tok::tokenize_words(text);
    CausalScore cs;
    const double lp = -std::log(static_cast<double>(vocab_));
    for (size_t i = 0; i < doc.words.size(); ++i) {
      uint64_t h = rng::hash_bytes(tok::fold_case(doc.words[i].surface), 0x1234 + i);
      cs.token_ranks.push_back(1 + static_cast<int>(h % static_cast<uint64_t>(vocab_)));
      cs.token_logprobs.push_back(lp);
      cs.token_spans.emplace_back(doc.words[i].begin, doc.words[i].end);
    }
    return cs;
  }

 private:
  int vocab_;
};

/// Mask filler that draws each fill from a fixed word list, seeded.
class DictionaryFiller : public MaskFiller {
 public:
  explicit DictionaryFiller(std::vector<std::string> words = {
      "time", "people", "world", "story", "light", "house", "water", "sound",
      "place", "thing", "group", "night", "paper", "music", "heart", "field"})
      : words_(std::move(words)) {}

  FillResponse fill(const std::string& text, uint64_t seed) override {
    FillResponse resp;
    size_t count = count_sentinels(text);
    rng::SplitMix64 g(rng::derive(seed, "dict_fill"));
    for (size_t k = 0; k < count; ++k) {
      resp.fills.push_back(words_[g.bounded(words_.size())]);
    }
    return resp;
  }

  static size_t count_sentinels(const std::string& text) {
    size_t count = 0, pos = 0;
    while ((pos = text.find("<extra_id_", pos)) != std::string::npos) {
      size_t digits = pos + 10;
      size_t end = digits;
      while (end < text.size() && std::isdigit(static_cast<unsigned char>(text[end]))) ++end;
      if (end > digits && end < text.size() && text[end] == '>') {
        ++count;
        pos = end + 1;
      } else {
        pos += 10;
      }
    }
    return count;
  }

 private:
  std::vector<std::string> words_;
};

/// Small trainable encoder: a hashed embedding bag with a learned aggregate
/// row in position 0 and a linear two-way head, optimized with
/// decoupled-weight-decay Adam. Row 0 attends to the token mean so contrastive
/// anchors carry document content.
class TinyTrainableEncoder : public TrainableEncoder {
 public:
  TinyTrainableEncoder(int d = 32, int vocab = 4096, uint64_t seed = 7,
                       size_t max_len = 512)
      : d_(d), vocab_(vocab), max_len_(max_len) {
    rng::SplitMix64 g(rng::derive(seed, "tiny_init"));
    const double r = 0.5 / std::sqrt(static_cast<double>(d));
    emb_.assign(static_cast<size_t>(vocab) * d, 0.0);
    for (auto& v : emb_) v = g.uniform_range(-r, r);
    cls_.assign(d, 0.0);
    head_w_.assign(2 * d, 0.0);
    for (auto& v : head_w_) v = g.uniform_range(-r, r);
    head_b_.assign(2, 0.0);
    reset_optimizer();
  }

  int hidden_width() const override { return d_; }

  EncoderOutput encode(const std::string& text) override { return forward(text, nullptr); }

  EncoderOutput encode_train(const std::string& text, int slot) override {
    grow_slots(slot);
    return forward(text, &slots_[slot]);
  }

  std::array<double, 2> classify(const std::vector<double>& pooled, int slot) override {
    if (static_cast<int>(pooled.size()) != d_) throw DataError("classify: bad pooled width");
    grow_slots(slot);
    slots_[slot].pooled = pooled;
    std::array<double, 2> z{head_b_[0], head_b_[1]};
    for (int c = 0; c < 2; ++c) {
      for (int k = 0; k < d_; ++k) z[c] += head_w_[c * d_ + k] * pooled[k];
    }
    return z;
  }

  std::vector<double> head_backward(int slot, const std::array<double, 2>& d_logits) override {
    const auto& pooled = slots_.at(slot).pooled;
    std::vector<double> d_pooled(d_, 0.0);
    for (int c = 0; c < 2; ++c) {
      g_head_b_[c] += d_logits[c];
      for (int k = 0; k < d_; ++k) {
        g_head_w_[c * d_ + k] += d_logits[c] * pooled[k];
        d_pooled[k] += head_w_[c * d_ + k] * d_logits[c];
      }
    }
    return d_pooled;
  }

  void encoder_backward(int slot, const std::vector<std::vector<double>>& d_hidden) override {
    const auto& ids = slots_.at(slot).ids;
    if (d_hidden.size() != ids.size() + 1) throw DataError("encoder_backward: bad row count");
    const double inv_n = ids.empty() ? 0.0 : 1.0 / static_cast<double>(ids.size());
    for (int k = 0; k < d_; ++k) g_cls_[k] += d_hidden[0][k];
    for (size_t j = 0; j < ids.size(); ++j) {
      double* ge = &g_emb_[static_cast<size_t>(ids[j]) * d_];
      for (int k = 0; k < d_; ++k) {
        ge[k] += d_hidden[j + 1][k] + d_hidden[0][k] * inv_n;
      }
    }
  }

  void zero_grad() override {
    std::fill(g_emb_.begin(), g_emb_.end(), 0.0);
    std::fill(g_cls_.begin(), g_cls_.end(), 0.0);
    std::fill(g_head_w_.begin(), g_head_w_.end(), 0.0);
    std::fill(g_head_b_.begin(), g_head_b_.end(), 0.0);
  }

  void step(double lr, double weight_decay) override {
    ++t_;
    adam_update(emb_, g_emb_, m_emb_, v_emb_, lr, weight_decay);
    adam_update(cls_, g_cls_, m_cls_, v_cls_, lr, 0.0);
    adam_update(head_w_, g_head_w_, m_head_w_, v_head_w_, lr, weight_decay);
    adam_update(head_b_, g_head_b_, m_head_b_, v_head_b_, lr, 0.0);
  }

  void save(const std::string& path) const override {
    nlohmann::json j{{"v", 1},     {"d", d_},           {"vocab", vocab_},
                     {"emb", emb_}, {"cls", cls_},       {"head_w", head_w_},
                     {"head_b", head_b_}};
    std::ofstream out(path, std::ios::trunc);
    if (!out.is_open()) throw DataError("cannot write " + path);
    out << j.dump();
  }

  void load(const std::string& path) override {
    std::ifstream in(path);
    if (!in.is_open()) throw DataError("cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(in);
    d_ = j.at("d").get<int>();
    vocab_ = j.at("vocab").get<int>();
    emb_ = j.at("emb").get<std::vector<double>>();
    cls_ = j.at("cls").get<std::vector<double>>();
    head_w_ = j.at("head_w").get<std::vector<double>>();
    head_b_ = j.at("head_b").get<std::vector<double>>();
    reset_optimizer();
  }

 private:
  struct Slot {
    std::vector<int> ids;
    std::vector<double> pooled;
  };

  EncoderOutput forward(const std::string& text, Slot* slot) {
    if (text.empty()) throw DataError("encode: empty text");
    tok::TokenizedDoc doc = tok::tokenize_words(text);
    EncoderOutput out;
    out.d = d_;
    out.subword_spans.emplace_back(0, 0);
    std::vector<int> ids;
    for (const auto& w : doc.words) {
      if (out.subword_spans.size() >= max_len_) {
        out.truncated = true;
        break;
      }
      ids.push_back(static_cast<int>(
          rng::hash_bytes(tok::fold_case(w.surface)) % static_cast<uint64_t>(vocab_)));
      out.subword_spans.emplace_back(w.begin, w.end);
    }
    out.hidden.resize(out.subword_spans.size());
    std::vector<double> mean(d_, 0.0);
    for (size_t j = 0; j < ids.size(); ++j) {
      const double* e = &emb_[static_cast<size_t>(ids[j]) * d_];
      out.hidden[j + 1].assign(e, e + d_);
      for (int k = 0; k < d_; ++k) mean[k] += e[k];
    }
    out.hidden[0].resize(d_);
    const double inv_n = ids.empty() ? 0.0 : 1.0 / static_cast<double>(ids.size());
    for (int k = 0; k < d_; ++k) out.hidden[0][k] = cls_[k] + mean[k] * inv_n;
    if (slot != nullptr) slot->ids = std::move(ids);
    return out;
  }

  void grow_slots(int slot) {
    if (slot < 0) throw DataError("negative slot");
    if (slots_.size() <= static_cast<size_t>(slot)) slots_.resize(slot + 1);
  }

  void reset_optimizer() {
    t_ = 0;
    auto zeros_like = [](const std::vector<double>& p) {
      return std::vector<double>(p.size(), 0.0);
    };
    g_emb_ = zeros_like(emb_);  m_emb_ = zeros_like(emb_);  v_emb_ = zeros_like(emb_);
    g_cls_ = zeros_like(cls_);  m_cls_ = zeros_like(cls_);  v_cls_ = zeros_like(cls_);
    g_head_w_ = zeros_like(head_w_); m_head_w_ = zeros_like(head_w_); v_head_w_ = zeros_like(head_w_);
    g_head_b_ = zeros_like(head_b_); m_head_b_ = zeros_like(head_b_); v_head_b_ = zeros_like(head_b_);
  }

  void adam_update(std::vector<double>& p, const std::vector<double>& g,
                   std::vector<double>& m, std::vector<double>& v, double lr, double wd) {
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(b1, t_);
    const double bc2 = 1.0 - std::pow(b2, t_);
    for (size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + wd * p[i]);
    }
  }

  int d_;
  int vocab_;
  size_t max_len_;
  std::vector<double> emb_, cls_, head_w_, head_b_;
  std::vector<double> g_emb_, g_cls_, g_head_w_, g_head_b_;
  std::vector<double> m_emb_, v_emb_, m_cls_, v_cls_;
  std::vector<double> m_head_w_, v_head_w_, m_head_b_, v_head_b_;
  long t_ = 0;
  std::vector<Slot> slots_;
};

}  // namespace mgtd::backends
