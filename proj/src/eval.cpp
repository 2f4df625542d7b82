#include "laygen/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <json.hpp>

#include "laygen/errors.hpp"
#include "laygen/io.hpp"
#include "laygen/sample.hpp"

namespace laygen {

double iou(const Box& a, const Box& b) {
  const double iw = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.left(), b.left()));
  const double ih = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top()));
  const double inter = iw * ih;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

LayoutStats layout_stats(std::span<const Box> boxes, int grid) {
  if (grid < 1) throw InvalidConfig("grid must be positive");
  LayoutStats s;
  s.element_count = boxes.size();
  const auto g = static_cast<std::size_t>(grid);
  std::vector<std::uint8_t> covered(g * g, 0);
  for (const auto& b : boxes) {
    // Cells whose centers (i + 0.5) / g fall in [left, right) x [top, bottom).
    const auto first = [&](double lo) {
      return std::min<long>(grid, static_cast<long>(std::max(0.0, std::ceil(lo * grid - 0.5))));
    };
    const long x0 = first(b.left()), x1 = first(b.right());
    const long y0 = first(b.top()), y1 = first(b.bottom());
    for (long y = y0; y < y1; ++y) {
      std::fill(covered.begin() + y * grid + x0, covered.begin() + y * grid + std::max(x0, x1), 1);
    }
  }
  const auto hits = std::count(covered.begin(), covered.end(), std::uint8_t{1});
  s.coverage_pct = 100.0 * static_cast<double>(hits) / static_cast<double>(g * g);
  if (boxes.size() >= 2) {
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      for (std::size_t j = i + 1; j < boxes.size(); ++j) {
        total += iou(boxes[i], boxes[j]);
        ++pairs;
      }
    }
    s.overlap_pct = 100.0 * total / static_cast<double>(pairs);
  }
  return s;
}

std::vector<Box> layout_boxes(const Layout& layout) {
  std::vector<Box> out;
  out.reserve(layout.size());
  for (const auto& e : layout.elements) out.push_back(element_box(e, layout.bits));
  return out;
}

LayoutStats layout_stats(const Layout& layout, int grid) { return layout_stats(layout_boxes(layout), grid); }

namespace {

Layout reflect(const Layout& layout, bool horizontal) {
  Layout out = layout;
  for (auto& e : out.elements) {
    Box b = element_box(e, layout.bits);
    if (horizontal) {
      b.cx = 1.0 - b.cx;
    } else {
      b.cy = 1.0 - b.cy;
    }
    Element flipped = make_element(e.category, b, layout.bits);
    flipped.attrs = e.attrs;
    e = std::move(flipped);
  }
  return raster_sort(std::move(out));
}

}  // namespace

Layout flip_lr(const Layout& layout) { return reflect(layout, true); }
Layout flip_ud(const Layout& layout) { return reflect(layout, false); }

std::vector<FlipScores> verify_flips(const Transformer& model, const std::vector<Layout>& layouts) {
  std::vector<Layout> variants;
  variants.reserve(3 * layouts.size());
  for (const auto& l : layouts) {
    variants.push_back(raster_sort(l));
    variants.push_back(flip_lr(l));
    variants.push_back(flip_ud(l));
  }
  const auto scores = score_corpus(model, variants);
  std::vector<FlipScores> out(layouts.size());
  for (std::size_t i = 0; i < layouts.size(); ++i) {
    out[i] = {scores[3 * i].per_token, scores[3 * i + 1].per_token, scores[3 * i + 2].per_token};
  }
  return out;
}

std::vector<int> analogy(std::span<const float> embeddings, std::size_t dim, int a, int b, int c, std::size_t k) {
  if (dim == 0 || embeddings.size() % dim != 0) throw ShapeError("embedding table is not [count, dim]");
  const auto count = static_cast<int>(embeddings.size() / dim);
  for (int id : {a, b, c}) {
    if (id < 0 || id >= count) throw UnknownCategory("category id " + std::to_string(id) + " out of range");
  }
  const auto row = [&](int id) { return embeddings.subspan(static_cast<std::size_t>(id) * dim, dim); };
  std::vector<double> target(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    target[i] = static_cast<double>(row(b)[i]) - row(a)[i] + row(c)[i];
  }
  const double target_norm = std::sqrt(std::inner_product(target.begin(), target.end(), target.begin(), 0.0));
  std::vector<std::pair<double, int>> ranked;
  for (int id = 0; id < count; ++id) {
    if (id == a || id == b || id == c) continue;
    double dot = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      dot += target[i] * row(id)[i];
      norm += static_cast<double>(row(id)[i]) * row(id)[i];
    }
    const double denom = target_norm * std::sqrt(norm);
    ranked.emplace_back(denom > 0.0 ? dot / denom : 0.0, id);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
  std::vector<int> out;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) out.push_back(ranked[i].second);
  return out;
}

std::vector<float> category_embeddings(const Transformer& model) {
  const auto& cfg = model.config();
  const auto d = static_cast<std::size_t>(cfg.d);
  const auto table = model.params().token_embedding.data();
  const auto first = static_cast<std::size_t>(Vocab::kCategoryOffset) * d;
  return {table.begin() + static_cast<long>(first),
          table.begin() + static_cast<long>(first + static_cast<std::size_t>(cfg.num_categories) * d)};
}

std::vector<NGram> ngram_stats(const std::vector<Layout>& layouts, std::size_t n) {
  if (n == 0) throw InvalidConfig("n-gram order must be positive");
  std::map<std::vector<int>, std::size_t> counts;
  for (const auto& l : layouts) {
    if (l.size() < n) continue;
    for (std::size_t i = 0; i + n <= l.size(); ++i) {
      std::vector<int> window;
      for (std::size_t j = 0; j < n; ++j) window.push_back(l.elements[i + j].category);
      std::vector<int> sorted = window;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) continue;
      ++counts[window];
    }
  }
  std::vector<NGram> out;
  for (auto& [cats, count] : counts) out.push_back({cats, count});
  // The map already orders keys lexicographically; a stable sort keeps that
  // order within equal counts.
  std::stable_sort(out.begin(), out.end(), [](const NGram& x, const NGram& y) { return x.count > y.count; });
  return out;
}

namespace {

std::array<double, 4> corners(const Box& b) { return {b.left(), b.top(), b.right(), b.bottom()}; }

double directed(std::span<const Box> from, std::span<const Box> to) {
  double total = 0.0;
  for (const auto& p : from) {
    const auto pc = corners(p);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : to) {
      const auto qc = corners(q);
      double d = 0.0;
      for (int i = 0; i < 4; ++i) d += (pc[i] - qc[i]) * (pc[i] - qc[i]);
      best = std::min(best, d);
    }
    total += best;
  }
  return total / static_cast<double>(from.size());
}

}  // namespace

double chamfer_distance(std::span<const Box> a, std::span<const Box> b) {
  if (a.empty() || b.empty()) throw EmptyLayout("chamfer distance needs two non-empty layouts");
  return directed(a, b) + directed(b, a);
}

double chamfer_distance(const Layout& a, const Layout& b) { return chamfer_distance(layout_boxes(a), layout_boxes(b)); }

std::vector<std::pair<std::size_t, double>> nearest_neighbors(const Layout& query, const std::vector<Layout>& corpus,
                                                              std::size_t k) {
  const auto q = layout_boxes(query);
  std::vector<std::pair<std::size_t, double>> ranked;
  ranked.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    ranked.emplace_back(i, chamfer_distance(q, layout_boxes(corpus[i])));
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.second < y.second; });
  ranked.resize(std::min(k, ranked.size()));
  return ranked;
}

std::vector<ElementAttention> attention_by_element(const Transformer& model, const Layout& layout) {
  const Vocab vocab = model.config().vocab();
  const TokenSequence tokens = encode_sequence(layout, vocab);
  const std::size_t len = tokens.size() - 1;
  const auto fwd = model.forward(std::span(tokens).first(len), 1, len, false, 0, true);
  const auto& att = fwd.attention.back();  // [1, H, T, T]
  const auto heads = static_cast<std::size_t>(model.config().heads);
  const auto probs = att.data();

  std::vector<ElementAttention> out;
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const std::size_t q = 5 * k;
    std::vector<double> row(len, 0.0);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t t = 0; t < len; ++t) row[t] += probs[(h * len + q) * len + t];
    }
    for (auto& v : row) v /= static_cast<double>(heads);
    ElementAttention e;
    e.index = k;
    e.category = layout.elements[k].category;
    e.bos = row[0];
    for (std::size_t j = 0; j < k; ++j) {
      e.to_elements.push_back(std::accumulate(row.begin() + static_cast<long>(5 * j + 1),
                                              row.begin() + static_cast<long>(5 * j + 6), 0.0));
    }
    out.push_back(std::move(e));
  }
  return out;
}

void export_attention(const Transformer& model, const Layout& layout, const CategoryVocab& categories,
                      const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["source_id"] = layout.source_id;
  auto& elements = doc["elements"] = nlohmann::json::object();
  for (const auto& e : attention_by_element(model, layout)) {
    nlohmann::json prior = nlohmann::json::array();
    for (std::size_t j = 0; j < e.to_elements.size(); ++j) {
      prior.push_back({{"element", j},
                       {"category", categories.name(layout.elements[j].category)},
                       {"weight", e.to_elements[j]}});
    }
    elements[std::to_string(e.index)] = {
        {"category", categories.name(e.category)}, {"bos", e.bos}, {"attention", std::move(prior)}};
  }
  write_file_atomic(path, doc.dump(2) + "\n");
}

}  // namespace laygen
