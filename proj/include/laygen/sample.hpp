#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "laygen/layout.hpp"
#include "laygen/model.hpp"
#include "laygen/rng.hpp"

namespace laygen {

enum class Strategy { Nucleus, Greedy, Temperature };

struct SamplerConfig {
  Strategy strategy = Strategy::Nucleus;
  double top_p = 0.9;
  double temperature = 1.0;
  std::size_t max_elements = kDefaultMaxElements;
  bool grammar_mask = true;
  std::uint64_t seed = 0;

  // Throws InvalidP or InvalidConfig.
  void validate() const;
};

// Keeps the smallest prefix of probability-sorted tokens (ties by ascending
// id) whose cumulative mass reaches p, zeroes the rest and renormalizes.
// Throws InvalidP when p <= 0 or p > 1.
std::vector<double> nucleus_filter(std::span<const double> probs, double p);

// Indices kept by nucleus_filter, in probability order.
std::vector<int> nucleus_set(std::span<const double> probs, double p);

// Logit mask for a slot: true where the token is legal. pad and bos are never
// legal. At a category slot, `allow_element` false leaves only eos.
std::vector<std::uint8_t> legal_tokens(SlotKind slot, const Vocab& vocab, bool grammar_mask, bool allow_element = true);

// Draws the next token from one row of logits. Throws DegenerateDistribution
// when every legal token has probability zero.
int next_token(std::span<const float> logits, SlotKind slot, const SamplerConfig& sampler, const Vocab& vocab,
               Rng& rng, bool allow_element = true);

struct GenerateResult {
  Layout layout;        // decoded and raster-sorted
  TokenSequence tokens; // raw generated sequence, including eos when emitted
};

// Autoregressive completion of `seed_layout` (may be empty). The seed prefix
// is fed in permuted order; generation stops at eos in a category slot or at
// max_elements. Throws VocabError on a model/vocabulary mismatch, and
// MalformedSequence when the grammar mask is off and the model emits an
// ill-formed sequence.
GenerateResult generate(const Transformer& model, const Layout& seed_layout, const SamplerConfig& sampler);

// Generates one sample per seed layout; request i uses rng seed sampler.seed + i.
std::vector<GenerateResult> generate_many(const Transformer& model, const std::vector<Layout>& seed_layouts,
                                          const SamplerConfig& sampler);

struct NllResult {
  double total = 0;
  double per_token = 0;
  std::vector<double> token_nll;  // one per predicted target, eos included
};

// Exact teacher-forced NLL (nats) of the raster-ordered layout.
// Throws LayoutTooLong.
NllResult score_nll(const Transformer& model, const Layout& layout);
std::vector<NllResult> score_corpus(const Transformer& model, const std::vector<Layout>& layouts,
                                    std::size_t token_budget = 8192);

}  // namespace laygen
