#pragma once

#include <array>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mgtd/error.hpp"

namespace mgtd::backends {

struct EncoderOutput {
  std::vector<std::vector<double>> hidden;          // n_subwords x d
  std::vector<std::pair<size_t, size_t>> subword_spans;  // byte offsets; (0,0) = special
  int d = 0;
  bool truncated = false;

  size_t rows() const { return hidden.size(); }
};

struct CausalScore {
  std::vector<double> token_logprobs;
  std::vector<int> token_ranks;                      // >= 1
  std::vector<std::pair<size_t, size_t>> token_spans;
};

enum class FillStatus { Ok, ShortOutput, ExcessOutput };

struct FillResponse {
  std::vector<std::string> fills;
  FillStatus status = FillStatus::Ok;
};

/// Produces last-hidden-layer features for a text.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual EncoderOutput encode(const std::string& text) = 0;
  virtual int hidden_width() const = 0;
};

/// Scores a text under a causal language model: per-token log-probability and
/// the rank of the realized token in the model's next-token distribution.
class CausalScorer {
 public:
  virtual ~CausalScorer() = default;
  virtual CausalScore score(const std::string& text) = 0;
  /// Whether position 0 is scored (from BOS) or left out.
  virtual bool scores_first_token() const { return true; }
};

/// Fills sentinel markers (<extra_id_0>, <extra_id_1>, ...) in a masked text.
/// Returns one fill string per sentinel, in order. Sampling is seeded.
class MaskFiller {
 public:
  virtual ~MaskFiller() = default;
  virtual FillResponse fill(const std::string& text_with_sentinels, uint64_t seed) = 0;
  /// Backends that cannot take concurrent requests declare single-flight;
  /// callers then serialize.
  virtual bool supports_concurrent_requests() const { return true; }
};

/// Encoder that supports gradient updates on itself and its two-way
/// classification head. Forward calls in training mode cache activations
/// under a slot index; backward calls consume them.
class TrainableEncoder : public Encoder {
 public:
  virtual EncoderOutput encode_train(const std::string& text, int slot) = 0;
  virtual std::array<double, 2> classify(const std::vector<double>& pooled, int slot) = 0;
  /// Head backward: accumulates head gradients, returns dLoss/dPooled.
  virtual std::vector<double> head_backward(int slot, const std::array<double, 2>& d_logits) = 0;
  /// Encoder backward for the hidden rows produced by encode_train.
  virtual void encoder_backward(int slot, const std::vector<std::vector<double>>& d_hidden) = 0;
  virtual void zero_grad() = 0;
  virtual void step(double lr, double weight_decay) = 0;
  virtual void save(const std::string& path) const = 0;
  virtual void load(const std::string& path) = 0;
};

inline std::string sentinel_token(int index) {
  return "<extra_id_" + std::to_string(index) + ">";
}

}  // namespace mgtd::backends
