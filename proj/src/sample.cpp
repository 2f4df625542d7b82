#include "laygen/sample.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "laygen/errors.hpp"
#include "laygen/train.hpp"

namespace laygen {

void SamplerConfig::validate() const {
  if (!(top_p > 0.0 && top_p <= 1.0)) throw InvalidP("top_p must be in (0, 1], got " + std::to_string(top_p));
  if (!(temperature > 0.0)) throw InvalidConfig("temperature must be positive");
  if (max_elements < 1) throw InvalidConfig("max_elements must be positive");
}

namespace {

// Cumulative mass comparisons tolerate summation round-off.
constexpr double kMassTolerance = 1e-12;

std::vector<int> by_probability(std::span<const double> probs) {
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
  return order;
}

int sample_index(std::span<const double> probs, Rng& rng) {
  const double total = std::accumulate(probs.begin(), probs.end(), 0.0);
  const double u = rng.uniform() * total;
  double cum = 0.0;
  int last_positive = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    cum += probs[i];
    if (u < cum) return static_cast<int>(i);
  }
  return last_positive;
}

}  // namespace

std::vector<int> nucleus_set(std::span<const double> probs, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidP("p must be in (0, 1], got " + std::to_string(p));
  std::vector<int> order = by_probability(probs);
  if (p >= 1.0) return order;
  double cum = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    cum += probs[order[keep]];
    ++keep;
    if (cum >= p - kMassTolerance) break;
  }
  order.resize(keep);
  return order;
}

std::vector<double> nucleus_filter(std::span<const double> probs, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw InvalidP("p must be in (0, 1], got " + std::to_string(p));
  if (p >= 1.0) return {probs.begin(), probs.end()};
  std::vector<double> out(probs.size(), 0.0);
  double mass = 0.0;
  for (int i : nucleus_set(probs, p)) {
    out[static_cast<std::size_t>(i)] = probs[static_cast<std::size_t>(i)];
    mass += probs[static_cast<std::size_t>(i)];
  }
  if (mass > 0.0) {
    for (auto& v : out) v /= mass;
  }
  return out;
}

std::vector<std::uint8_t> legal_tokens(SlotKind slot, const Vocab& vocab, bool grammar_mask, bool allow_element) {
  const auto size = static_cast<std::size_t>(vocab.size());
  std::vector<std::uint8_t> legal(size, 0);
  if (!grammar_mask) {
    std::fill(legal.begin() + Vocab::kEos, legal.end(), 1);
    return legal;
  }
  switch (slot) {
    case SlotKind::Bos:
      break;
    case SlotKind::CategoryOrEos:
      legal[Vocab::kEos] = 1;
      if (allow_element) {
        std::fill(legal.begin() + Vocab::kCategoryOffset, legal.begin() + vocab.coord_offset(), 1);
      }
      break;
    case SlotKind::Coordinate:
      std::fill(legal.begin() + vocab.coord_offset(), legal.end(), 1);
      break;
  }
  return legal;
}

int next_token(std::span<const float> logits, SlotKind slot, const SamplerConfig& sampler, const Vocab& vocab,
               Rng& rng, bool allow_element) {
  if (logits.size() != static_cast<std::size_t>(vocab.size())) {
    throw VocabError("logit row of width " + std::to_string(logits.size()) + " for vocabulary of size " +
                     std::to_string(vocab.size()));
  }
  const auto legal = legal_tokens(slot, vocab, sampler.grammar_mask, allow_element);
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  std::vector<double> z(logits.size(), kNegInf);
  double mx = kNegInf;
  int best = -1;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!legal[i]) continue;
    z[i] = static_cast<double>(logits[i]);
    if (z[i] > mx) {
      mx = z[i];
      best = static_cast<int>(i);
    }
  }
  if (best < 0 || mx == kNegInf || std::isnan(mx)) {
    throw DegenerateDistribution("no legal token has finite probability");
  }
  if (sampler.strategy == Strategy::Greedy) return best;

  std::vector<double> probs(z.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z[i] == kNegInf) continue;
    probs[i] = std::exp((z[i] - mx) / sampler.temperature);
    total += probs[i];
  }
  for (auto& v : probs) v /= total;
  if (sampler.strategy == Strategy::Nucleus) probs = nucleus_filter(probs, sampler.top_p);
  const int token = sample_index(probs, rng);
  if (token < 0) throw DegenerateDistribution("empty sampling distribution");
  return token;
}

GenerateResult generate(const Transformer& model, const Layout& seed_layout, const SamplerConfig& sampler) {
  sampler.validate();
  const Vocab vocab = model.config().vocab();
  if (seed_layout.bits != vocab.bits) {
    throw VocabError("seed layout quantized at " + std::to_string(seed_layout.bits) + " bits, model uses " +
                     std::to_string(vocab.bits));
  }
  const Layout seed = permute_seed(seed_layout, sampler.seed);
  TokenSequence tokens = encode_sequence(seed, vocab);  // validates categories and bins
  tokens.pop_back();                                    // drop eos

  const std::size_t max_elements = std::min(sampler.max_elements, vocab.max_elements);
  const std::size_t max_len = vocab.max_seq_len();
  Rng rng(splitmix64(sampler.seed) ^ 0x5851F42D4C957F2DULL);
  const auto width = static_cast<std::size_t>(vocab.size());
  while (tokens.size() < max_len) {
    const std::size_t pos = tokens.size();
    const SlotKind slot = slot_kind(pos);
    const bool allow_element = (pos - 1) / 5 < max_elements;
    auto fwd = model.forward(tokens, 1, pos, false, 0);
    auto row = fwd.logits.data().subspan((pos - 1) * width, width);
    const int token = next_token(row, slot, sampler, vocab, rng, allow_element);
    tokens.push_back(token);
    if (token == Vocab::kEos) break;
  }

  GenerateResult result;
  result.layout = raster_sort(decode_sequence(tokens, vocab));
  result.layout.canvas_w = seed_layout.canvas_w;
  result.layout.canvas_h = seed_layout.canvas_h;
  result.layout.source_id = seed_layout.source_id;
  result.tokens = std::move(tokens);
  return result;
}

std::vector<GenerateResult> generate_many(const Transformer& model, const std::vector<Layout>& seed_layouts,
                                          const SamplerConfig& sampler) {
  std::vector<GenerateResult> out;
  out.reserve(seed_layouts.size());
  for (std::size_t i = 0; i < seed_layouts.size(); ++i) {
    SamplerConfig request = sampler;
    request.seed = sampler.seed + i;
    out.push_back(generate(model, seed_layouts[i], request));
  }
  return out;
}

namespace {

std::vector<double> row_nlls(std::span<const float> logits, std::size_t width, std::span<const int> targets,
                             std::span<const std::uint8_t> mask) {
  std::vector<double> out;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (!mask[r]) continue;
    const float* row = logits.data() + r * width;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < width; ++v) mx = std::max(mx, static_cast<double>(row[v]));
    double s = 0.0;
    for (std::size_t v = 0; v < width; ++v) s += std::exp(static_cast<double>(row[v]) - mx);
    out.push_back(mx + std::log(s) - static_cast<double>(row[targets[r]]));
  }
  return out;
}

NllResult summarize(std::vector<double> token_nll) {
  NllResult r;
  r.total = std::accumulate(token_nll.begin(), token_nll.end(), 0.0);
  r.per_token = token_nll.empty() ? 0.0 : r.total / static_cast<double>(token_nll.size());
  r.token_nll = std::move(token_nll);
  return r;
}

}  // namespace

std::vector<NllResult> score_corpus(const Transformer& model, const std::vector<Layout>& layouts,
                                    std::size_t token_budget) {
  const Vocab vocab = model.config().vocab();
  for (const auto& l : layouts) {
    if (l.size() > vocab.max_elements) {
      throw LayoutTooLong(std::to_string(l.size()) + " elements exceeds the maximum of " +
                          std::to_string(vocab.max_elements));
    }
  }
  std::size_t longest = 0;
  for (const auto& l : layouts) longest = std::max(longest, 5 * l.size() + 2);
  const auto batches =
      make_batches(layouts, vocab, std::max(token_budget, longest), 0, ElementOrder::Raster, false);
  std::vector<NllResult> out(layouts.size());
  const auto width = static_cast<std::size_t>(vocab.size());
  for (const auto& b : batches) {
    auto fwd = model.forward(b.inputs, b.rows, b.len, false, 0);
    for (std::size_t r = 0; r < b.rows; ++r) {
      const std::size_t row_start = r * b.len;
      out[b.indices[r]] = summarize(row_nlls(fwd.logits.data().subspan(row_start * width, b.len * width), width,
                                             std::span(b.targets).subspan(row_start, b.len),
                                             std::span(b.mask).subspan(row_start, b.len)));
    }
  }
  return out;
}

NllResult score_nll(const Transformer& model, const Layout& layout) {
  const Vocab vocab = model.config().vocab();
  const TokenSequence tokens = encode_sequence(raster_sort(layout), vocab);
  const std::size_t len = tokens.size() - 1;
  auto fwd = model.forward(std::span(tokens).first(len), 1, len, false, 0);
  std::vector<std::uint8_t> mask(len, 1);
  return summarize(row_nlls(fwd.logits.data(), static_cast<std::size_t>(vocab.size()),
                            std::span(tokens).subspan(1), mask));
}

}  // namespace laygen
