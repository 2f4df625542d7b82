#include "laygen/model.hpp"

#include <cmath>
#include <limits>

#include "laygen/errors.hpp"
#include "laygen/rng.hpp"

namespace laygen {

void ModelConfig::validate() const {
  if (d <= 0 || layers <= 0 || heads <= 0 || d_ff <= 0) {
    throw InvalidConfig("d, layers, heads and d_ff must be positive");
  }
  if (d % heads != 0) {
    throw InvalidConfig("d=" + std::to_string(d) + " not divisible by heads=" + std::to_string(heads));
  }
  if (bits < 1 || bits > 16) throw InvalidConfig("bits must be in [1, 16]");
  if (num_categories < 1) throw InvalidConfig("need at least one category");
  if (max_elements < 1) throw InvalidConfig("max_elements must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidConfig("dropout must be in [0, 1)");
  if (continuous_attrs < 0) throw InvalidConfig("continuous_attrs must be >= 0");
}

std::vector<std::uint8_t> causal_mask(std::size_t len) {
  std::vector<std::uint8_t> allow(len * len, 0);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t j = 0; j <= i; ++j) allow[i * len + j] = 1;
  }
  return allow;
}

namespace {

template <typename Real>
BasicTensor<Real> normal_tensor(Shape shape, Rng& rng, double stddev) {
  std::vector<Real> data(shape_numel(shape));
  for (auto& v : data) v = static_cast<Real>(rng.normal() * stddev);
  return BasicTensor<Real>::from(std::move(shape), std::move(data), true);
}

template <typename Real>
BasicTensor<Real> constant_tensor(Shape shape, Real value) {
  return BasicTensor<Real>::full(std::move(shape), value, true);
}

constexpr double kInitStd = 0.02;

}  // namespace

template <typename Real>
BasicTransformer<Real>::BasicTransformer(ModelConfig config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto d = static_cast<std::size_t>(config_.d);
  const auto ff = static_cast<std::size_t>(config_.d_ff);
  const auto vocab = static_cast<std::size_t>(config_.vocab_size());
  const auto attrs = static_cast<std::size_t>(config_.continuous_attrs);
  auto& p = params_;
  p.token_embedding = normal_tensor<Real>({vocab, d}, rng, kInitStd);
  p.position_embedding = normal_tensor<Real>({config_.max_seq_len(), d}, rng, kInitStd);
  for (int l = 0; l < config_.layers; ++l) {
    BasicBlockParams<Real> b;
    b.wq = normal_tensor<Real>({d, d}, rng, kInitStd);
    b.bq = constant_tensor<Real>({d}, 0);
    b.wk = normal_tensor<Real>({d, d}, rng, kInitStd);
    b.bk = constant_tensor<Real>({d}, 0);
    b.wv = normal_tensor<Real>({d, d}, rng, kInitStd);
    b.bv = constant_tensor<Real>({d}, 0);
    b.wo = normal_tensor<Real>({d, d}, rng, kInitStd);
    b.bo = constant_tensor<Real>({d}, 0);
    b.ln1_gain = constant_tensor<Real>({d}, 1);
    b.ln1_bias = constant_tensor<Real>({d}, 0);
    b.w1 = normal_tensor<Real>({d, ff}, rng, kInitStd);
    b.b1 = constant_tensor<Real>({ff}, 0);
    b.w2 = normal_tensor<Real>({ff, d}, rng, kInitStd);
    b.b2 = constant_tensor<Real>({d}, 0);
    b.ln2_gain = constant_tensor<Real>({d}, 1);
    b.ln2_bias = constant_tensor<Real>({d}, 0);
    p.blocks.push_back(std::move(b));
  }
  p.final_gain = constant_tensor<Real>({d}, 1);
  p.final_bias = constant_tensor<Real>({d}, 0);
  if (!config_.tie_output) p.head_weight = normal_tensor<Real>({d, vocab}, rng, kInitStd);
  p.head_bias = constant_tensor<Real>({vocab}, 0);
  if (attrs > 0) {
    p.attr_weight = normal_tensor<Real>({d, attrs}, rng, kInitStd);
    p.attr_bias = constant_tensor<Real>({attrs}, 0);
  }
}

template <typename Real>
BasicTransformer<Real>::BasicTransformer(ModelConfig config, Params params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  if (params_.blocks.size() != static_cast<std::size_t>(config_.layers)) {
    throw ShapeError("parameter set has " + std::to_string(params_.blocks.size()) + " blocks, config wants " +
                     std::to_string(config_.layers));
  }
}

template <typename Real>
std::vector<std::pair<std::string, BasicTensor<Real>>> BasicTransformer<Real>::named_parameters() const {
  std::vector<std::pair<std::string, BasicTensor<Real>>> out;
  const auto& p = params_;
  out.emplace_back("token_embedding", p.token_embedding);
  out.emplace_back("position_embedding", p.position_embedding);
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    const auto& b = p.blocks[l];
    const std::string pre = "blocks." + std::to_string(l) + ".";
    out.emplace_back(pre + "wq", b.wq);
    out.emplace_back(pre + "bq", b.bq);
    out.emplace_back(pre + "wk", b.wk);
    out.emplace_back(pre + "bk", b.bk);
    out.emplace_back(pre + "wv", b.wv);
    out.emplace_back(pre + "bv", b.bv);
    out.emplace_back(pre + "wo", b.wo);
    out.emplace_back(pre + "bo", b.bo);
    out.emplace_back(pre + "ln1_gain", b.ln1_gain);
    out.emplace_back(pre + "ln1_bias", b.ln1_bias);
    out.emplace_back(pre + "w1", b.w1);
    out.emplace_back(pre + "b1", b.b1);
    out.emplace_back(pre + "w2", b.w2);
    out.emplace_back(pre + "b2", b.b2);
    out.emplace_back(pre + "ln2_gain", b.ln2_gain);
    out.emplace_back(pre + "ln2_bias", b.ln2_bias);
  }
  out.emplace_back("final_gain", p.final_gain);
  out.emplace_back("final_bias", p.final_bias);
  if (!config_.tie_output) out.emplace_back("head_weight", p.head_weight);
  out.emplace_back("head_bias", p.head_bias);
  if (config_.continuous_attrs > 0) {
    out.emplace_back("attr_weight", p.attr_weight);
    out.emplace_back("attr_bias", p.attr_bias);
  }
  return out;
}

template <typename Real>
std::vector<BasicTensor<Real>> BasicTransformer<Real>::parameters() const {
  std::vector<BasicTensor<Real>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

template <typename Real>
std::size_t BasicTransformer<Real>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += t.numel();
  return n;
}

template <typename Real>
void BasicTransformer<Real>::zero_grad() {
  for (auto& t : parameters()) t.zero_grad();
}

template <typename Real>
void BasicTransformer<Real>::set_requires_grad(bool value) {
  for (auto& t : parameters()) t.set_requires_grad(value);
}

template <typename Real>
BasicTensor<Real> transformer_block(const BasicTensor<Real>& x, const BasicBlockParams<Real>& blk,
                                    std::span<const std::uint8_t> blocked, std::size_t heads, double dropout,
                                    std::uint64_t dropout_seed, bool train, BasicTensor<Real>* attention) {
  using T = BasicTensor<Real>;
  namespace o = ops;
  if (x.rank() != 3) throw ShapeError("transformer_block expects [batch, len, d], got " + shape_str(x.shape()));
  const std::size_t batch = x.dim(0), len = x.dim(1), d = x.dim(2);
  if (heads == 0 || d % heads != 0) throw InvalidConfig("d must be divisible by heads");
  if (blocked.size() != batch * heads * len * len) throw ShapeError("attention mask size mismatch");
  const std::size_t dh = d / heads;
  auto split_heads = [&](const T& t) {
    return o::reshape(o::permute(o::reshape(t, {batch, len, heads, dh}), {0, 2, 1, 3}), {batch * heads, len, dh});
  };
  T q = split_heads(o::add(o::matmul(x, blk.wq), blk.bq));
  T k = split_heads(o::add(o::matmul(x, blk.wk), blk.bk));
  T v = split_heads(o::add(o::matmul(x, blk.wv), blk.bv));
  T scores = o::scale(o::matmul(q, o::transpose(k)), 1.0 / std::sqrt(static_cast<double>(dh)));
  T attn = o::softmax(o::masked_fill(scores, blocked, -std::numeric_limits<double>::infinity()));
  if (attention) *attention = o::reshape(attn, {batch, heads, len, len});
  T ctx = o::reshape(o::permute(o::reshape(o::matmul(attn, v), {batch, heads, len, dh}), {0, 2, 1, 3}),
                     {batch, len, d});
  T attn_out = o::add(o::matmul(ctx, blk.wo), blk.bo);
  T mid = o::layer_norm(o::add(x, attn_out), blk.ln1_gain, blk.ln1_bias);
  T ff = o::add(o::matmul(o::relu(o::add(o::matmul(mid, blk.w1), blk.b1)), blk.w2), blk.b2);
  ff = o::dropout(ff, dropout, dropout_seed, train);
  return o::layer_norm(o::add(mid, ff), blk.ln2_gain, blk.ln2_bias);
}

template Tensor transformer_block(const Tensor&, const BasicBlockParams<float>&, std::span<const std::uint8_t>,
                                  std::size_t, double, std::uint64_t, bool, Tensor*);
template Tensor64 transformer_block(const Tensor64&, const BasicBlockParams<double>&, std::span<const std::uint8_t>,
                                    std::size_t, double, std::uint64_t, bool, Tensor64*);

template <typename Real>
typename BasicTransformer<Real>::ForwardResult BasicTransformer<Real>::forward(std::span<const int> tokens,
                                                                               std::size_t batch, std::size_t len,
                                                                               bool train, std::uint64_t seed,
                                                                               bool keep_attention) const {
  using T = BasicTensor<Real>;
  namespace o = ops;
  if (tokens.size() != batch * len || len == 0) {
    throw ShapeError("forward: " + std::to_string(tokens.size()) + " tokens for batch " + std::to_string(batch) +
                     " x len " + std::to_string(len));
  }
  if (len > config_.max_seq_len()) {
    throw SequenceTooLong("length " + std::to_string(len) + " exceeds " + std::to_string(config_.max_seq_len()));
  }
  const int vocab = config_.vocab_size();
  for (int t : tokens) {
    if (t < 0 || t >= vocab) {
      throw VocabError("token " + std::to_string(t) + " outside vocabulary of size " + std::to_string(vocab));
    }
  }
  const auto heads = static_cast<std::size_t>(config_.heads);
  const auto& p = params_;

  // Disallowed (b, h, i, j) score entries: future positions and pad keys.
  std::vector<std::uint8_t> blocked(batch * heads * len * len, 0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < len; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        const bool pad_key = tokens[b * len + j] == Vocab::kPad && j != 0;
        const std::uint8_t block = (j > i || pad_key) ? 1 : 0;
        for (std::size_t h = 0; h < heads; ++h) blocked[((b * heads + h) * len + i) * len + j] = block;
      }
    }
  }
  std::vector<int> positions(batch * len);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < len; ++t) positions[b * len + t] = static_cast<int>(t);
  }

  T x = o::add(o::embedding(p.token_embedding, tokens, {batch, len}),
               o::embedding(p.position_embedding, std::span<const int>(positions), {batch, len}));

  ForwardResult result;
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    T* attention = nullptr;
    if (keep_attention) attention = &result.attention.emplace_back();
    x = transformer_block(x, p.blocks[l], blocked, heads, config_.dropout,
                          splitmix64(seed ^ (0xD1B54A32D192ED03ULL * (l + 1))), train, attention);
  }
  result.hidden = o::layer_norm(x, p.final_gain, p.final_bias);
  const T& head = config_.tie_output ? o::transpose(p.token_embedding) : p.head_weight;
  result.logits = o::add(o::matmul(result.hidden, head), p.head_bias);
  return result;
}

template <typename Real>
BasicTensor<Real> BasicTransformer<Real>::attribute_head(const BasicTensor<Real>& hidden,
                                                         std::span<const int> flat_positions) const {
  if (config_.continuous_attrs == 0) throw InvalidConfig("model has no continuous attribute head");
  const auto d = static_cast<std::size_t>(config_.d);
  auto rows = ops::reshape(hidden, {hidden.numel() / d, d});
  auto picked = ops::embedding(rows, flat_positions, {flat_positions.size()});
  return ops::add(ops::matmul(picked, params_.attr_weight), params_.attr_bias);
}

template <typename Real>
template <typename Other>
BasicTransformer<Other> BasicTransformer<Real>::cast() const {
  auto conv = [](const BasicTensor<Real>& t) {
    if (t.numel() == 0 && t.shape().empty()) return BasicTensor<Other>();
    std::vector<Other> data(t.data().begin(), t.data().end());
    return BasicTensor<Other>::from(t.shape(), std::move(data), t.requires_grad());
  };
  BasicModelParams<Other> q;
  const auto& p = params_;
  q.token_embedding = conv(p.token_embedding);
  q.position_embedding = conv(p.position_embedding);
  for (const auto& b : p.blocks) {
    BasicBlockParams<Other> c;
    c.wq = conv(b.wq);
    c.bq = conv(b.bq);
    c.wk = conv(b.wk);
    c.bk = conv(b.bk);
    c.wv = conv(b.wv);
    c.bv = conv(b.bv);
    c.wo = conv(b.wo);
    c.bo = conv(b.bo);
    c.ln1_gain = conv(b.ln1_gain);
    c.ln1_bias = conv(b.ln1_bias);
    c.w1 = conv(b.w1);
    c.b1 = conv(b.b1);
    c.w2 = conv(b.w2);
    c.b2 = conv(b.b2);
    c.ln2_gain = conv(b.ln2_gain);
    c.ln2_bias = conv(b.ln2_bias);
    q.blocks.push_back(std::move(c));
  }
  q.final_gain = conv(p.final_gain);
  q.final_bias = conv(p.final_bias);
  q.head_weight = conv(p.head_weight);
  q.head_bias = conv(p.head_bias);
  q.attr_weight = conv(p.attr_weight);
  q.attr_bias = conv(p.attr_bias);
  return BasicTransformer<Other>(config_, std::move(q));
}

template class BasicTransformer<float>;
template class BasicTransformer<double>;
template BasicTransformer<double> BasicTransformer<float>::cast<double>() const;
template BasicTransformer<float> BasicTransformer<double>::cast<float>() const;
template BasicTransformer<float> BasicTransformer<float>::cast<float>() const;

}  // namespace laygen
