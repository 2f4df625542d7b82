#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "laygen/layout.hpp"

namespace laygen {

enum class SynthKind { Document, Grid, Asymmetric };

// Structured synthetic layouts on the unit canvas.
//  document:   full-width title band at the top, one or two mirrored text
//              columns of stacked boxes, optional figure block. Left-right
//              symmetric in distribution, top-bottom asymmetric.
//  grid:       boxes on cells of a 4x4 grid, inset by a fixed gutter.
//  asymmetric: document variant with a left sidebar and a right main column.
struct SynthGrammarConfig {
  SynthKind kind = SynthKind::Document;
  std::size_t min_elements = 3;
  std::size_t max_elements = 12;
  double jitter = 0.5;  // centroid jitter std-dev, in bins at `bits`
  int bits = kDefaultBits;
  std::vector<std::string> categories = {"text", "title", "list", "table", "figure"};
  std::uint64_t seed = 0;
  std::size_t layout_cap = kDefaultMaxElements;

  // Throws InvalidConfig.
  void validate() const;
};

std::vector<Layout> synth_generate(const SynthGrammarConfig& config, std::size_t count);

std::string to_string(SynthKind kind);
SynthKind parse_synth_kind(const std::string& s);

}  // namespace laygen
