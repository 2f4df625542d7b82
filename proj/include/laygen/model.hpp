#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "laygen/layout.hpp"
#include "laygen/tensor.hpp"

namespace laygen {

struct ModelConfig {
  int d = 512;
  int layers = 6;
  int heads = 8;
  int d_ff = 2048;
  int bits = kDefaultBits;
  int num_categories = 1;
  std::size_t max_elements = kDefaultMaxElements;
  double dropout = 0.1;
  bool tie_output = false;
  int continuous_attrs = 0;

  Vocab vocab() const { return Vocab(bits, num_categories, max_elements); }
  int vocab_size() const { return vocab().size(); }
  std::size_t max_seq_len() const { return 5 * max_elements + 2; }
  // Throws InvalidConfig.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Causal allow-matrix: row j may attend to columns <= j. Row-major len x len.
std::vector<std::uint8_t> causal_mask(std::size_t len);

template <typename Real>
struct BasicBlockParams {
  BasicTensor<Real> wq, bq, wk, bk, wv, bv, wo, bo;
  BasicTensor<Real> ln1_gain, ln1_bias;
  BasicTensor<Real> w1, b1, w2, b2;
  BasicTensor<Real> ln2_gain, ln2_bias;
};

// One post-norm block over x [batch, len, d]: masked multi-head attention,
// residual + norm, ReLU feed-forward with dropout on its output, residual +
// norm. `blocked` is [batch, heads, len, len], nonzero where a score is
// excluded. Stores the attention probabilities in `attention` when given.
template <typename Real>
BasicTensor<Real> transformer_block(const BasicTensor<Real>& x, const BasicBlockParams<Real>& blk,
                                    std::span<const std::uint8_t> blocked, std::size_t heads, double dropout,
                                    std::uint64_t dropout_seed, bool train, BasicTensor<Real>* attention = nullptr);

template <typename Real>
struct BasicModelParams {
  BasicTensor<Real> token_embedding;     // [V, d]
  BasicTensor<Real> position_embedding;  // [max_seq_len, d]
  std::vector<BasicBlockParams<Real>> blocks;
  BasicTensor<Real> final_gain, final_bias;  // [d]
  BasicTensor<Real> head_weight;             // [d, V]; unused when tied
  BasicTensor<Real> head_bias;               // [V]
  BasicTensor<Real> attr_weight;             // [d, A]; empty when A == 0
  BasicTensor<Real> attr_bias;               // [A]
};

template <typename Real>
struct BasicForwardResult {
  BasicTensor<Real> logits;   // [B, T, V]
  BasicTensor<Real> hidden;   // [B, T, d], after the final norm
  // Per layer, attention probabilities [B, heads, T, T]. Filled only when
  // requested.
  std::vector<BasicTensor<Real>> attention;
};

// Masked post-norm transformer decoder over layout token sequences.
template <typename Real>
class BasicTransformer {
 public:
  using Params = BasicModelParams<Real>;
  using ForwardResult = BasicForwardResult<Real>;

  BasicTransformer(ModelConfig config, std::uint64_t seed);
  BasicTransformer(ModelConfig config, Params params);

  const ModelConfig& config() const noexcept { return config_; }
  Params& params() noexcept { return params_; }
  const Params& params() const noexcept { return params_; }

  // Stable name -> tensor list in a fixed order (checkpoint and optimizer order).
  std::vector<std::pair<std::string, BasicTensor<Real>>> named_parameters() const;
  std::vector<BasicTensor<Real>> parameters() const;
  std::size_t parameter_count() const;
  void zero_grad();
  void set_requires_grad(bool value);

  // tokens is row-major [batch, len]. Pad columns (token 0) never receive
  // attention. Throws VocabError or SequenceTooLong.
  ForwardResult forward(std::span<const int> tokens, std::size_t batch, std::size_t len, bool train,
                        std::uint64_t seed, bool keep_attention = false) const;

  // Linear continuous-attribute head applied to hidden rows selected by flat
  // (b * len + t) positions. Returns [positions, A].
  BasicTensor<Real> attribute_head(const BasicTensor<Real>& hidden, std::span<const int> flat_positions) const;

  template <typename Other>
  BasicTransformer<Other> cast() const;

 private:
  ModelConfig config_;
  Params params_;
};

using Transformer = BasicTransformer<float>;
using Transformer64 = BasicTransformer<double>;

}  // namespace laygen
