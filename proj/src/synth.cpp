#include "laygen/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "laygen/errors.hpp"
#include "laygen/rng.hpp"

namespace laygen {

namespace {

// Roles map onto category ids by position in the configured list, wrapping
// when fewer than five names are given.
enum Role { kText = 0, kTitle = 1, kList = 2, kTable = 3, kFigure = 4 };

constexpr double kMargin = 0.06;
constexpr double kBodyTop = 0.14;
constexpr double kBodyBottom = 0.94;
constexpr double kGap = 0.015;
constexpr int kGridCells = 4;

struct Sampler {
  const SynthGrammarConfig& config;
  Rng& rng;
  int bins() const { return 1 << config.bits; }

  int category(Role role) const { return static_cast<int>(role) % static_cast<int>(config.categories.size()); }

  int bin(double v) const { return std::clamp(static_cast<int>(std::floor(v * bins())), 0, bins() - 1); }

  int jitter(int b) {
    if (config.jitter <= 0.0) return b;
    return std::clamp(b + static_cast<int>(std::lround(config.jitter * rng.normal())), 0, bins() - 1);
  }

  Role body_role() {
    const double u = rng.uniform();
    if (u < 0.55) return kText;
    if (u < 0.70) return kList;
    if (u < 0.85) return kTable;
    return kFigure;
  }

  static std::pair<double, double> height_range(Role r) {
    switch (r) {
      case kList: return {0.06, 0.15};
      case kTable: return {0.10, 0.20};
      case kFigure: return {0.12, 0.25};
      default: return {0.04, 0.12};
    }
  }

  // Stacks `roles` top-down inside [left, right] of the body, scaling heights
  // down when the column would overflow.
  std::vector<Element> column(const std::vector<Role>& roles, double left, double right) {
    std::vector<double> heights;
    for (Role r : roles) {
      auto [lo, hi] = height_range(r);
      heights.push_back(rng.uniform(lo, hi));
    }
    const double room = (kBodyBottom - kBodyTop) - kGap * static_cast<double>(roles.size());
    const double used = std::accumulate(heights.begin(), heights.end(), 0.0);
    if (used > room) {
      for (auto& h : heights) h *= room / used;
    }
    std::vector<Element> out;
    double y = kBodyTop;
    for (std::size_t i = 0; i < roles.size(); ++i) {
      Element e;
      e.category = category(roles[i]);
      e.x_bin = bin((left + right) / 2);
      e.w_bin = bin(right - left);
      e.h_bin = bin(heights[i]);
      e.y_bin = bin(y + heights[i] / 2);
      out.push_back(e);
      y += heights[i] + kGap;
    }
    return out;
  }

  // Centered full-width elements use one of the two middle bins so that the
  // distribution is closed under left-right reflection.
  int centered_x() { return bins() / 2 - 1 + static_cast<int>(rng.below(2)); }

  Element title() {
    Element e;
    e.category = category(kTitle);
    e.x_bin = centered_x();
    e.w_bin = bin(1.0 - 2 * kMargin);
    const double h = rng.uniform(0.05, 0.08);
    e.h_bin = bin(h);
    e.y_bin = bin(0.04 + h / 2);
    return e;
  }

  std::vector<Role> roles(std::size_t n) {
    std::vector<Role> r(n);
    for (auto& x : r) x = body_role();
    return r;
  }

  Layout document(std::size_t n) {
    Layout layout;
    layout.bits = config.bits;
    layout.elements.push_back(title());
    const std::size_t body = n - 1;
    const bool two_columns = body >= 2 && rng.uniform() < 0.6;
    if (!two_columns) {
      auto col = column(roles(body), kMargin, 1.0 - kMargin);
      for (auto& e : col) e.x_bin = centered_x();
      layout.elements.insert(layout.elements.end(), col.begin(), col.end());
    } else {
      const std::size_t left_count = body / 2 + (body % 2 == 1 ? rng.below(2) : 0);
      auto left = column(roles(left_count), kMargin, 0.49);
      auto right = column(roles(body - left_count), kMargin, 0.49);
      for (auto& e : right) e.x_bin = bins() - 1 - e.x_bin;  // mirror of a left column
      layout.elements.insert(layout.elements.end(), left.begin(), left.end());
      layout.elements.insert(layout.elements.end(), right.begin(), right.end());
    }
    return layout;
  }

  Layout asymmetric(std::size_t n) {
    Layout layout;
    layout.bits = config.bits;
    layout.elements.push_back(title());
    const std::size_t body = n - 1;
    const std::size_t side = std::min<std::size_t>(body / 3 + (body >= 1 ? 1 : 0), body);
    std::vector<Role> side_roles(side, kList);
    auto sidebar = column(side_roles, kMargin, 0.30);
    auto main = column(roles(body - side), 0.34, 1.0 - kMargin);
    layout.elements.insert(layout.elements.end(), sidebar.begin(), sidebar.end());
    layout.elements.insert(layout.elements.end(), main.begin(), main.end());
    return layout;
  }

  // Boxes fill distinct cells of a 4x4 grid, inset by a two-bin gutter on each
  // side so that bin-center reconstruction never makes neighbors touch.
  Layout grid(std::size_t n) {
    Layout layout;
    layout.bits = config.bits;
    std::vector<int> cells(kGridCells * kGridCells);
    std::iota(cells.begin(), cells.end(), 0);
    rng.shuffle(cells.begin(), cells.end());
    const int cell = bins() / kGridCells;
    const int gutter = 2;
    for (std::size_t i = 0; i < n; ++i) {
      const int col = cells[i] % kGridCells;
      const int row = cells[i] / kGridCells;
      Element e;
      e.category = static_cast<int>(rng.below(config.categories.size()));
      // Width/height bins w give a reconstructed extent of (w + 0.5) bins;
      // centered on bin c the box spans [c - w/2, c + 1 + w/2) in bin units.
      e.w_bin = cell - 2 * gutter - 1;
      e.h_bin = cell - 2 * gutter - 1;
      e.x_bin = col * cell + cell / 2;
      e.y_bin = row * cell + cell / 2;
      layout.elements.push_back(e);
    }
    return layout;
  }

  void apply_jitter(Layout& layout) {
    for (auto& e : layout.elements) {
      e.x_bin = jitter(e.x_bin);
      e.y_bin = jitter(e.y_bin);
    }
  }
};

}  // namespace

void SynthGrammarConfig::validate() const {
  if (bits < 1 || bits > 16) throw InvalidConfig("bits must be in [1, 16]");
  if (min_elements < 1 || min_elements > max_elements) {
    throw InvalidConfig("element range [" + std::to_string(min_elements) + ", " + std::to_string(max_elements) +
                        "] is empty");
  }
  if (max_elements > layout_cap) {
    throw InvalidConfig("max_elements " + std::to_string(max_elements) + " exceeds the layout cap of " +
                        std::to_string(layout_cap));
  }
  if (!(jitter >= 0.0)) throw InvalidConfig("jitter must be non-negative");
  if (categories.empty()) throw InvalidConfig("at least one category is required");
  if (std::set<std::string>(categories.begin(), categories.end()).size() != categories.size()) {
    throw InvalidConfig("category names must be unique");
  }
  switch (kind) {
    case SynthKind::Grid:
      if (max_elements > static_cast<std::size_t>(kGridCells * kGridCells)) {
        throw InvalidConfig("grid layouts hold at most 16 elements");
      }
      if (bits < 5) throw InvalidConfig("grid layouts need at least 5 bits");
      break;
    case SynthKind::Document:
    case SynthKind::Asymmetric:
      if (bits < 5) throw InvalidConfig("document layouts need at least 5 bits");
      if (max_elements > 40) throw InvalidConfig("document layouts hold at most 40 elements");
      break;
  }
}

std::vector<Layout> synth_generate(const SynthGrammarConfig& config, std::size_t count) {
  config.validate();
  Rng rng(config.seed);
  Sampler s{config, rng};
  std::vector<Layout> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t span = config.max_elements - config.min_elements + 1;
    const std::size_t n = config.min_elements + rng.below(span);
    Layout layout;
    switch (config.kind) {
      case SynthKind::Document: layout = s.document(n); break;
      case SynthKind::Grid: layout = s.grid(n); break;
      case SynthKind::Asymmetric: layout = s.asymmetric(n); break;
    }
    s.apply_jitter(layout);
    layout = raster_sort(std::move(layout));
    layout.source_id = to_string(config.kind) + "-" + std::to_string(config.seed) + "-" + std::to_string(i);
    out.push_back(std::move(layout));
  }
  return out;
}

std::string to_string(SynthKind kind) {
  switch (kind) {
    case SynthKind::Document: return "document";
    case SynthKind::Grid: return "grid";
    case SynthKind::Asymmetric: return "asymmetric";
  }
  return "document";
}

SynthKind parse_synth_kind(const std::string& s) {
  if (s == "document") return SynthKind::Document;
  if (s == "grid") return SynthKind::Grid;
  if (s == "asymmetric") return SynthKind::Asymmetric;
  throw InvalidConfig("unknown synth kind '" + s + "'");
}

}  // namespace laygen
