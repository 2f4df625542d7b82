#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace laygen {

inline constexpr int kDefaultBits = 8;
inline constexpr std::size_t kDefaultMaxElements = 128;

// Ordered, unique category names; id i maps to names()[i].
class CategoryVocab {
 public:
  CategoryVocab() = default;
  explicit CategoryVocab(std::vector<std::string> names);

  int size() const noexcept { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(int id) const;
  // Throws UnknownCategory.
  int id(const std::string& name) const;
  std::optional<int> find(const std::string& name) const;

  bool operator==(const CategoryVocab&) const = default;

 private:
  std::vector<std::string> names_;
};

struct Element {
  int category = 0;
  int x_bin = 0;  // centroid x
  int y_bin = 0;  // centroid y
  int h_bin = 0;
  int w_bin = 0;
  std::vector<double> attrs;  // optional continuous attributes in [0, 1]

  bool operator==(const Element&) const = default;
};

// Continuous centroid-form box on the unit canvas.
struct Box {
  double cx = 0, cy = 0, h = 0, w = 0;
  double left() const { return cx - w / 2; }
  double right() const { return cx + w / 2; }
  double top() const { return cy - h / 2; }
  double bottom() const { return cy + h / 2; }
};

struct Layout {
  std::vector<Element> elements;
  double canvas_w = 1.0;
  double canvas_h = 1.0;
  std::string source_id;
  int bits = kDefaultBits;

  std::size_t size() const noexcept { return elements.size(); }
  bool operator==(const Layout&) const = default;
};

// pad=0, bos=1, eos=2, categories [3, 3+C), coordinate bins [3+C, 3+C+2^bits).
struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kCategoryOffset = 3;

  int bits = kDefaultBits;
  int num_categories = 0;
  std::size_t max_elements = kDefaultMaxElements;

  Vocab() = default;
  Vocab(int bits, int num_categories, std::size_t max_elements = kDefaultMaxElements);

  int bins() const noexcept { return 1 << bits; }
  int coord_offset() const noexcept { return kCategoryOffset + num_categories; }
  int size() const noexcept { return coord_offset() + bins(); }
  std::size_t max_seq_len() const noexcept { return 5 * max_elements + 2; }

  int category_token(int category) const { return kCategoryOffset + category; }
  int coord_token(int bin) const { return coord_offset() + bin; }
  bool is_category(int token) const noexcept {
    return token >= kCategoryOffset && token < coord_offset();
  }
  bool is_coord(int token) const noexcept { return token >= coord_offset() && token < size(); }

  bool operator==(const Vocab&) const = default;
};

using TokenSequence = std::vector<int>;

enum class SlotKind { Bos, CategoryOrEos, Coordinate };

// Kind of the token expected at `position` of a sequence (position 0 is bos).
inline SlotKind slot_kind(std::size_t position) {
  if (position == 0) return SlotKind::Bos;
  return (position - 1) % 5 == 0 ? SlotKind::CategoryOrEos : SlotKind::Coordinate;
}

// Throws InvalidCoordinate when v is outside [0, 1] by more than 1e-6.
int quantize(double v, int bits);
// Bin center. Throws InvalidBin.
double dequantize(int bin, int bits);

Box element_box(const Element& e, int bits);
Element make_element(int category, const Box& box, int bits);

// Sort by (y_bin, x_bin), then (category, w_bin, h_bin); stable.
Layout raster_sort(Layout layout);

TokenSequence encode_sequence(const Layout& layout, const Vocab& vocab);
// Stops at the first eos; trailing pad is ignored. Throws MalformedSequence
// or TruncatedElement.
Layout decode_sequence(std::span<const int> tokens, const Vocab& vocab);

// Seeded Fisher-Yates permutation of the elements.
Layout permute_seed(Layout layout, std::uint64_t seed);

// Bin centers at the layout's precision, re-quantized at `bits`, then
// raster-sorted.
Layout requantize(const Layout& layout, int bits);

// True when every position of `tokens` holds a token of the kind its slot
// expects (pad allowed only after eos).
bool satisfies_grammar(std::span<const int> tokens, const Vocab& vocab);

}  // namespace laygen
