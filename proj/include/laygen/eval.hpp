#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "laygen/layout.hpp"
#include "laygen/model.hpp"

namespace laygen {

struct LayoutStats {
  double coverage_pct = 0;
  double overlap_pct = 0;
  std::size_t element_count = 0;
};

double iou(const Box& a, const Box& b);

// Coverage: share of grid x grid cell centers inside at least one box.
// Overlap: mean pairwise IoU over unordered element pairs, in percent.
LayoutStats layout_stats(std::span<const Box> boxes, int grid = 256);
LayoutStats layout_stats(const Layout& layout, int grid = 256);

std::vector<Box> layout_boxes(const Layout& layout);

// Centroid reflection in continuous space, requantized and re-raster-sorted.
Layout flip_lr(const Layout& layout);
Layout flip_ud(const Layout& layout);

struct FlipScores {
  double original = 0;
  double left_right = 0;
  double up_down = 0;
};

// Per-token NLL of each layout and of its two flips.
std::vector<FlipScores> verify_flips(const Transformer& model, const std::vector<Layout>& layouts);

// Ranks ids by cosine similarity to e(b) - e(a) + e(c), excluding a, b, c.
// `embeddings` is row-major [count, dim].
std::vector<int> analogy(std::span<const float> embeddings, std::size_t dim, int a, int b, int c, std::size_t k);

// Rows of the token embedding table that belong to categories, [C, d].
std::vector<float> category_embeddings(const Transformer& model);

struct NGram {
  std::vector<int> categories;
  std::size_t count = 0;
};

// Consecutive windows of each layout's category sequence whose members are
// pairwise distinct, sorted by descending count then lexicographically.
std::vector<NGram> ngram_stats(const std::vector<Layout>& layouts, std::size_t n);

// Symmetric chamfer distance over per-box corner 4-vectors
// (left, top, right, bottom). Throws EmptyLayout.
double chamfer_distance(std::span<const Box> a, std::span<const Box> b);
double chamfer_distance(const Layout& a, const Layout& b);

// Exact linear scan; ties broken by corpus index. Returns (index, distance).
std::vector<std::pair<std::size_t, double>> nearest_neighbors(const Layout& query, const std::vector<Layout>& corpus,
                                                              std::size_t k);

struct ElementAttention {
  std::size_t index = 0;
  int category = 0;
  double bos = 0;                  // weight on the bos token
  std::vector<double> to_elements; // weight on each prior element group
};

// Final-layer attention (mean over heads) of the query that predicts each
// element's category token, summed within each prior 5-token group.
std::vector<ElementAttention> attention_by_element(const Transformer& model, const Layout& layout);

// Writes attention_by_element as JSON keyed by element index.
void export_attention(const Transformer& model, const Layout& layout, const CategoryVocab& categories,
                      const std::filesystem::path& path);

}  // namespace laygen
