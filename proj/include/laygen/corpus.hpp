#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "laygen/layout.hpp"

namespace laygen {

struct CorpusOptions {
  int bits = kDefaultBits;
  std::size_t max_elements = kDefaultMaxElements;
};

struct Corpus {
  std::vector<Layout> layouts;
  std::size_t dropped = 0;  // layouts over max_elements
};

// JSON Lines, one layout per line:
//   {"id": str, "canvas": [w, h], "elements": [{"category": str,
//    "bbox": [cx, cy, h, w], "attrs": [..]?}, ...], "units": "pixels"?}
// bbox is normalized centroid form unless units is "pixels", in which case
// it is divided by the canvas size. Blank lines are skipped. Layouts are
// quantized and raster-sorted. Throws ParseError (1-based line number),
// UnknownCategory or InvalidCoordinate.
Corpus parse_corpus(std::string_view text, const CategoryVocab& categories, const CorpusOptions& options = {});
Corpus load_corpus(const std::filesystem::path& path, const CategoryVocab& categories,
                   const CorpusOptions& options = {});

// Writes bin centers, so parse(format(c)) reproduces the bins exactly.
std::string format_corpus(const std::vector<Layout>& layouts, const CategoryVocab& categories);
void save_corpus(const std::filesystem::path& path, const std::vector<Layout>& layouts,
                 const CategoryVocab& categories);

// Category vocabulary file: a JSON array of names, index = id.
CategoryVocab load_categories(const std::filesystem::path& path);
void save_categories(const std::filesystem::path& path, const CategoryVocab& categories);

}  // namespace laygen
