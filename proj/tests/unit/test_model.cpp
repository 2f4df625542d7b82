#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "laygen/errors.hpp"
#include "laygen/model.hpp"
#include "op_cases.hpp"

using namespace laygen;

namespace {

// Independent single-sequence forward with plain loops, used as an oracle.
std::vector<double> reference_logits(const Transformer64& model, const std::vector<int>& tokens) {
  const auto& c = model.config();
  const auto& p = model.params();
  const std::size_t T = tokens.size(), d = static_cast<std::size_t>(c.d), H = static_cast<std::size_t>(c.heads);
  const std::size_t dh = d / H, V = static_cast<std::size_t>(c.vocab_size()), F = static_cast<std::size_t>(c.d_ff);
  using Mat = std::vector<std::vector<double>>;
  auto at = [](const Tensor64& t, std::size_t r, std::size_t col, std::size_t cols) { return t.data()[r * cols + col]; };
  auto linear = [&](const Mat& x, const Tensor64& w, const Tensor64& b, std::size_t in, std::size_t out) {
    Mat y(x.size(), std::vector<double>(out));
    for (std::size_t t = 0; t < x.size(); ++t) {
      for (std::size_t j = 0; j < out; ++j) {
        double s = b.data()[j];
        for (std::size_t i = 0; i < in; ++i) s += x[t][i] * at(w, i, j, out);
        y[t][j] = s;
      }
    }
    return y;
  };
  auto norm = [&](const Mat& x, const Tensor64& g, const Tensor64& b) {
    Mat y = x;
    for (std::size_t t = 0; t < x.size(); ++t) {
      double mu = 0, var = 0;
      for (double v : x[t]) mu += v;
      mu /= static_cast<double>(d);
      for (double v : x[t]) var += (v - mu) * (v - mu);
      var /= static_cast<double>(d);
      for (std::size_t i = 0; i < d; ++i) y[t][i] = (x[t][i] - mu) / std::sqrt(var + 1e-5) * g.data()[i] + b.data()[i];
    }
    return y;
  };

  Mat x(T, std::vector<double>(d));
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < d; ++i) {
      x[t][i] = at(p.token_embedding, static_cast<std::size_t>(tokens[t]), i, d) + at(p.position_embedding, t, i, d);
    }
  }
  for (const auto& blk : p.blocks) {
    const Mat q = linear(x, blk.wq, blk.bq, d, d), k = linear(x, blk.wk, blk.bk, d, d), v = linear(x, blk.wv, blk.bv, d, d);
    Mat ctx(T, std::vector<double>(d, 0.0));
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < T; ++i) {
        std::vector<double> w(i + 1);
        double mx = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0;
          for (std::size_t e = 0; e < dh; ++e) s += q[i][h * dh + e] * k[j][h * dh + e];
          w[j] = s / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, w[j]);
        }
        double z = 0;
        for (auto& a : w) z += (a = std::exp(a - mx));
        for (std::size_t j = 0; j <= i; ++j) {
          for (std::size_t e = 0; e < dh; ++e) ctx[i][h * dh + e] += w[j] / z * v[j][h * dh + e];
        }
      }
    }
    const Mat attn = linear(ctx, blk.wo, blk.bo, d, d);
    Mat sum1 = x;
    for (std::size_t t = 0; t < T; ++t) for (std::size_t i = 0; i < d; ++i) sum1[t][i] += attn[t][i];
    const Mat mid = norm(sum1, blk.ln1_gain, blk.ln1_bias);
    Mat hidden = linear(mid, blk.w1, blk.b1, d, F);
    for (auto& row : hidden) for (auto& a : row) a = std::max(a, 0.0);
    const Mat ff = linear(hidden, blk.w2, blk.b2, F, d);
    Mat sum2 = mid;
    for (std::size_t t = 0; t < T; ++t) for (std::size_t i = 0; i < d; ++i) sum2[t][i] += ff[t][i];
    x = norm(sum2, blk.ln2_gain, blk.ln2_bias);
  }
  x = norm(x, p.final_gain, p.final_bias);
  const Mat logits = linear(x, p.head_weight, p.head_bias, d, V);
  std::vector<double> flat;
  for (const auto& row : logits) flat.insert(flat.end(), row.begin(), row.end());
  return flat;
}

void randomize(Transformer64& model, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& t : model.parameters()) {
    for (auto& v : t.data()) v = rng.uniform(-0.5, 0.5);
  }
}

template <typename A, typename B>
bool bit_equal(const A& a, const B& b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin());
}

}  // namespace

TEST_CASE("default configuration has about 19.2M parameters") {
  ModelConfig c;
  c.num_categories = 5;
  const Transformer model(c, 0);
  const double count = static_cast<double>(model.parameter_count());
  CHECK(std::fabs(count - 19.2e6) / 19.2e6 < 0.05);
  CHECK(c.max_seq_len() == 642);
}

TEST_CASE("initialization") {
  ModelConfig c;
  c.d = 8;
  c.layers = 1;
  c.heads = 2;
  c.d_ff = 16;
  c.bits = 4;
  c.num_categories = 1;  // V = 3 + 1 + 16 = 20
  const Transformer a(c, 5), b(c, 5);
  CHECK(c.vocab_size() == 20);
  const auto na = a.named_parameters(), nb = b.named_parameters();
  REQUIRE(na.size() == nb.size());
  for (std::size_t i = 0; i < na.size(); ++i) {
    CHECK(na[i].first == nb[i].first);
    CHECK(bit_equal(na[i].second.data(), nb[i].second.data()));
  }
  CHECK(a.params().token_embedding.shape() == Shape{20, 8});
  CHECK(a.params().position_embedding.shape() == Shape{c.max_seq_len(), 8});
  CHECK(a.params().head_weight.shape() == Shape{8, 20});
  for (float g : a.params().blocks[0].ln1_gain.data()) CHECK(g == 1.0f);
  for (float v : a.params().blocks[0].bq.data()) CHECK(v == 0.0f);

  // Init scale: empirical std of a large weight close to 0.02.
  ModelConfig big = c;
  big.d = 64;
  big.d_ff = 256;
  const Transformer m(big, 1);
  double ss = 0;
  for (float v : m.params().blocks[0].w1.data()) ss += static_cast<double>(v) * v;
  CHECK(std::sqrt(ss / static_cast<double>(m.params().blocks[0].w1.numel())) == doctest::Approx(0.02).epsilon(0.05));
}

TEST_CASE("config validation") {
  ModelConfig c = oracle::tiny_model_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  CHECK_THROWS_AS(Transformer(c, 0), InvalidConfig);
}

TEST_CASE("causal_mask") {
  CHECK(causal_mask(1) == std::vector<std::uint8_t>{1});
  CHECK(causal_mask(3) == std::vector<std::uint8_t>{1, 0, 0, 1, 1, 0, 1, 1, 1});
}

TEST_CASE("forward errors") {
  const Transformer model(oracle::tiny_model_config(), 1);
  const int V = model.config().vocab_size();
  std::vector<int> bad{1, V};
  CHECK_THROWS_AS(model.forward(bad, 1, 2, false, 0), VocabError);
  std::vector<int> too_long(model.config().max_seq_len() + 1, 1);
  CHECK_THROWS_AS(model.forward(too_long, 1, too_long.size(), false, 0), SequenceTooLong);
}

TEST_CASE("forward matches an independent reference implementation") {
  for (int layers : {1, 2}) {
    ModelConfig c = oracle::tiny_model_config();
    c.layers = layers;
    Transformer64 model(c, 11);
    randomize(model, 12);
    const std::vector<int> tokens{1, 3, 7, 12};
    const auto fwd = model.forward(tokens, 1, 4, false, 0);
    const auto ref = reference_logits(model, tokens);
    REQUIRE(fwd.logits.numel() == ref.size());
    double worst = 0;
    for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::fabs(fwd.logits.data()[i] - ref[i]));
    CHECK(worst < 1e-10);
  }
}

TEST_CASE("causality: later tokens never change earlier logits") {
  Transformer model(oracle::tiny_model_config(), 2);
  Rng rng(3);
  const int V = model.config().vocab_size();
  const std::size_t len = 12;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<int> tokens(len);
    for (auto& t : tokens) t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(V - 1)));
    const std::size_t j = rng.below(len - 1);
    auto perturbed = tokens;
    for (std::size_t t = j + 1; t < len; ++t) perturbed[t] = static_cast<int>(rng.below(static_cast<std::uint64_t>(V)));
    const auto a = model.forward(tokens, 1, len, false, 0).logits;
    const auto b = model.forward(perturbed, 1, len, false, 0).logits;
    const std::size_t n = (j + 1) * static_cast<std::size_t>(V);
    CHECK(bit_equal(a.data().first(n), b.data().first(n)));
  }
}

TEST_CASE("attention rows are distributions over allowed, non-pad keys") {
  ModelConfig c = oracle::tiny_model_config();
  c.layers = 2;
  const Transformer model(c, 4);
  const std::vector<int> tokens{1, 3, 6, 9, 7, 8, 2, 0, 0,  //
                                1, 4, 5, 5, 5, 5, 4, 6, 6};
  const auto fwd = model.forward(tokens, 2, 9, false, 0, true);
  REQUIRE(fwd.attention.size() == 2);
  for (const auto& att : fwd.attention) {
    CHECK(att.shape() == Shape{2, 2, 9, 9});
    for (std::size_t b = 0; b < 2; ++b) {
      for (std::size_t h = 0; h < 2; ++h) {
        for (std::size_t i = 0; i < 9; ++i) {
          double s = 0;
          for (std::size_t j = 0; j < 9; ++j) {
            const float w = att.data()[((b * 2 + h) * 9 + i) * 9 + j];
            if (j > i || tokens[b * 9 + j] == Vocab::kPad) CHECK(w == 0.0f);
            s += w;
          }
          CHECK(std::fabs(s - 1.0) < 1e-6);
        }
      }
    }
  }
}

TEST_CASE("batched rows match single-row forwards") {
  const Transformer model(oracle::tiny_model_config(), 6);
  const std::vector<int> a{1, 3, 6, 9, 7, 8, 2}, b{1, 4, 5, 5, 5, 5, 4};
  std::vector<int> both = a;
  both.insert(both.end(), b.begin(), b.end());
  const auto fb = model.forward(both, 2, 7, false, 0).logits;
  const auto fa = model.forward(a, 1, 7, false, 0).logits;
  const auto V = static_cast<std::size_t>(model.config().vocab_size());
  for (std::size_t i = 0; i < 7 * V; ++i) CHECK(fb.data()[i] == doctest::Approx(fa.data()[i]).epsilon(1e-5));
}

TEST_CASE("determinism of eval and train mode") {
  const Transformer model(oracle::tiny_model_config(), 7);
  const std::vector<int> tokens{1, 3, 6, 9, 7, 8, 2};
  CHECK(bit_equal(model.forward(tokens, 1, 7, false, 0).logits.data(),
                  model.forward(tokens, 1, 7, false, 99).logits.data()));
  CHECK(bit_equal(model.forward(tokens, 1, 7, true, 5).logits.data(),
                  model.forward(tokens, 1, 7, true, 5).logits.data()));
  CHECK_FALSE(bit_equal(model.forward(tokens, 1, 7, true, 5).logits.data(),
                        model.forward(tokens, 1, 7, false, 5).logits.data()));
}

TEST_CASE("tied output head") {
  ModelConfig c = oracle::tiny_model_config();
  c.tie_output = true;
  const Transformer tied(c, 1);
  c.tie_output = false;
  const Transformer untied(c, 1);
  CHECK(tied.parameter_count() + static_cast<std::size_t>(c.d * c.vocab_size()) == untied.parameter_count());
  for (const auto& [name, t] : tied.named_parameters()) CHECK(name != "head_weight");
}

TEST_CASE("cast between precisions preserves values") {
  const Transformer model(oracle::tiny_model_config(), 8);
  const Transformer64 wide = model.cast<double>();
  const Transformer back = wide.cast<float>();
  const auto a = model.named_parameters(), b = back.named_parameters();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(bit_equal(a[i].second.data(), b[i].second.data()));
}
