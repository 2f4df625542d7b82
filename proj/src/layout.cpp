#include "laygen/layout.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <unordered_set>

#include "laygen/errors.hpp"
#include "laygen/rng.hpp"

namespace laygen {

namespace {

constexpr double kCoordTolerance = 1e-6;

void check_bits(int bits) {
  if (bits < 1 || bits > 16) throw InvalidConfig("bits must be in [1, 16], got " + std::to_string(bits));
}

}  // namespace

CategoryVocab::CategoryVocab(std::vector<std::string> names) : names_(std::move(names)) {
  std::unordered_set<std::string> seen;
  for (const auto& n : names_) {
    if (!seen.insert(n).second) throw InvalidVocab("duplicate category name '" + n + "'");
  }
}

const std::string& CategoryVocab::name(int id) const {
  if (id < 0 || id >= size()) throw UnknownCategory("category id " + std::to_string(id));
  return names_[static_cast<std::size_t>(id)];
}

std::optional<int> CategoryVocab::find(const std::string& name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) return std::nullopt;
  return static_cast<int>(it - names_.begin());
}

int CategoryVocab::id(const std::string& name) const {
  if (auto id = find(name)) return *id;
  throw UnknownCategory("'" + name + "'");
}

Vocab::Vocab(int bits_, int num_categories_, std::size_t max_elements_)
    : bits(bits_), num_categories(num_categories_), max_elements(max_elements_) {
  check_bits(bits);
  if (num_categories < 1) throw InvalidVocab("need at least one category");
}

int quantize(double v, int bits) {
  check_bits(bits);
  if (!(v >= -kCoordTolerance && v <= 1.0 + kCoordTolerance)) {
    throw InvalidCoordinate("value " + std::to_string(v) + " outside [0, 1]");
  }
  const int bins = 1 << bits;
  const double scaled = std::floor(std::clamp(v, 0.0, 1.0) * bins);
  return std::clamp(static_cast<int>(scaled), 0, bins - 1);
}

double dequantize(int bin, int bits) {
  check_bits(bits);
  const int bins = 1 << bits;
  if (bin < 0 || bin >= bins) {
    throw InvalidBin("bin " + std::to_string(bin) + " outside [0, " + std::to_string(bins) + ")");
  }
  return (bin + 0.5) / bins;
}

Box element_box(const Element& e, int bits) {
  return Box{dequantize(e.x_bin, bits), dequantize(e.y_bin, bits), dequantize(e.h_bin, bits),
             dequantize(e.w_bin, bits)};
}

Element make_element(int category, const Box& box, int bits) {
  Element e;
  e.category = category;
  e.x_bin = quantize(box.cx, bits);
  e.y_bin = quantize(box.cy, bits);
  e.h_bin = quantize(box.h, bits);
  e.w_bin = quantize(box.w, bits);
  return e;
}

Layout raster_sort(Layout layout) {
  std::stable_sort(layout.elements.begin(), layout.elements.end(),
                   [](const Element& a, const Element& b) {
                     return std::tie(a.y_bin, a.x_bin, a.category, a.w_bin, a.h_bin) <
                            std::tie(b.y_bin, b.x_bin, b.category, b.w_bin, b.h_bin);
                   });
  return layout;
}

TokenSequence encode_sequence(const Layout& layout, const Vocab& vocab) {
  if (layout.size() > vocab.max_elements) {
    throw LayoutTooLong(std::to_string(layout.size()) + " elements exceeds the maximum of " +
                        std::to_string(vocab.max_elements));
  }
  const int bins = vocab.bins();
  auto check_bin = [&](int bin) {
    if (bin < 0 || bin >= bins) {
      throw InvalidBin("bin " + std::to_string(bin) + " outside [0, " + std::to_string(bins) + ")");
    }
    return vocab.coord_token(bin);
  };
  TokenSequence tokens;
  tokens.reserve(5 * layout.size() + 2);
  tokens.push_back(Vocab::kBos);
  for (const auto& e : layout.elements) {
    if (e.category < 0 || e.category >= vocab.num_categories) {
      throw UnknownCategory("category id " + std::to_string(e.category));
    }
    tokens.push_back(vocab.category_token(e.category));
    tokens.push_back(check_bin(e.x_bin));
    tokens.push_back(check_bin(e.y_bin));
    tokens.push_back(check_bin(e.h_bin));
    tokens.push_back(check_bin(e.w_bin));
  }
  tokens.push_back(Vocab::kEos);
  return tokens;
}

Layout decode_sequence(std::span<const int> tokens, const Vocab& vocab) {
  Layout layout;
  layout.bits = vocab.bits;
  if (tokens.empty() || tokens[0] != Vocab::kBos) {
    throw MalformedSequence(0, "bos", tokens.empty() ? -1 : tokens[0]);
  }
  std::size_t pos = 1;
  while (pos < tokens.size()) {
    const int t = tokens[pos];
    if (t == Vocab::kEos || t == Vocab::kPad) break;
    if (!vocab.is_category(t)) throw MalformedSequence(pos, "category_or_eos", t);
    if (pos + 5 > tokens.size()) {
      throw TruncatedElement("element starting at position " + std::to_string(pos) +
                             " has fewer than 5 tokens");
    }
    Element e;
    e.category = t - Vocab::kCategoryOffset;
    int* fields[4] = {&e.x_bin, &e.y_bin, &e.h_bin, &e.w_bin};
    for (std::size_t k = 0; k < 4; ++k) {
      const int c = tokens[pos + 1 + k];
      if (c == Vocab::kPad) {
        throw TruncatedElement("padding inside element at position " + std::to_string(pos + 1 + k));
      }
      if (!vocab.is_coord(c)) throw MalformedSequence(pos + 1 + k, "coordinate", c);
      *fields[k] = c - vocab.coord_offset();
    }
    layout.elements.push_back(std::move(e));
    pos += 5;
  }
  return layout;
}

Layout permute_seed(Layout layout, std::uint64_t seed) {
  Rng rng(seed);
  rng.shuffle(layout.elements.begin(), layout.elements.end());
  return layout;
}

bool satisfies_grammar(std::span<const int> tokens, const Vocab& vocab) {
  bool ended = false;
  for (std::size_t pos = 0; pos < tokens.size(); ++pos) {
    const int t = tokens[pos];
    if (ended) {
      if (t != Vocab::kPad) return false;
      continue;
    }
    switch (slot_kind(pos)) {
      case SlotKind::Bos:
        if (t != Vocab::kBos) return false;
        break;
      case SlotKind::CategoryOrEos:
        if (t == Vocab::kEos) {
          ended = true;
        } else if (!vocab.is_category(t)) {
          return false;
        }
        break;
      case SlotKind::Coordinate:
        if (!vocab.is_coord(t)) return false;
        break;
    }
  }
  return ended;
}

Layout requantize(const Layout& layout, int bits) {
  Layout out = layout;
  out.bits = bits;
  for (auto& e : out.elements) {
    Element q = make_element(e.category, element_box(e, layout.bits), bits);
    q.attrs = std::move(e.attrs);
    e = std::move(q);
  }
  return raster_sort(std::move(out));
}

}  // namespace laygen
