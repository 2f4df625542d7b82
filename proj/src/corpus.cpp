#include "laygen/corpus.hpp"

#include <json.hpp>

#include "laygen/errors.hpp"
#include "laygen/io.hpp"

namespace laygen {

namespace {

Layout parse_line(const nlohmann::json& j, const CategoryVocab& categories, int bits) {
  Layout layout;
  layout.bits = bits;
  if (j.contains("id")) layout.source_id = j.at("id").get<std::string>();
  if (j.contains("canvas")) {
    const auto canvas = j.at("canvas").get<std::vector<double>>();
    if (canvas.size() != 2 || !(canvas[0] > 0) || !(canvas[1] > 0)) {
      throw InvalidCoordinate("canvas must be two positive sizes");
    }
    layout.canvas_w = canvas[0];
    layout.canvas_h = canvas[1];
  }
  const bool pixels = j.value("units", std::string("normalized")) == "pixels";
  for (const auto& el : j.at("elements")) {
    const auto bbox = el.at("bbox").get<std::vector<double>>();
    if (bbox.size() != 4) throw InvalidCoordinate("bbox must have 4 values [cx, cy, h, w]");
    Box b{bbox[0], bbox[1], bbox[2], bbox[3]};
    if (pixels) {
      b.cx /= layout.canvas_w;
      b.w /= layout.canvas_w;
      b.cy /= layout.canvas_h;
      b.h /= layout.canvas_h;
    }
    Element e = make_element(categories.id(el.at("category").get<std::string>()), b, bits);
    if (el.contains("attrs")) e.attrs = el.at("attrs").get<std::vector<double>>();
    layout.elements.push_back(std::move(e));
  }
  return raster_sort(std::move(layout));
}

}  // namespace

Corpus parse_corpus(std::string_view text, const CategoryVocab& categories, const CorpusOptions& options) {
  Corpus corpus;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    Layout layout;
    try {
      layout = parse_line(j, categories, options.bits);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(line_no, e.what());
    }
    if (layout.size() > options.max_elements) {
      ++corpus.dropped;
      continue;
    }
    corpus.layouts.push_back(std::move(layout));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const CategoryVocab& categories, const CorpusOptions& options) {
  return parse_corpus(read_file_text(path), categories, options);
}

std::string format_corpus(const std::vector<Layout>& layouts, const CategoryVocab& categories) {
  std::string out;
  for (const auto& layout : layouts) {
    nlohmann::json j;
    j["id"] = layout.source_id;
    j["canvas"] = {layout.canvas_w, layout.canvas_h};
    auto& elements = j["elements"] = nlohmann::json::array();
    for (const auto& e : layout.elements) {
      const Box b = element_box(e, layout.bits);
      nlohmann::json el = {{"category", categories.name(e.category)}, {"bbox", {b.cx, b.cy, b.h, b.w}}};
      if (!e.attrs.empty()) el["attrs"] = e.attrs;
      elements.push_back(std::move(el));
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_corpus(const std::filesystem::path& path, const std::vector<Layout>& layouts,
                 const CategoryVocab& categories) {
  write_file_atomic(path, format_corpus(layouts, categories));
}

CategoryVocab load_categories(const std::filesystem::path& path) {
  try {
    return CategoryVocab(nlohmann::json::parse(read_file_text(path)).get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(1, e.what());
  }
}

void save_categories(const std::filesystem::path& path, const CategoryVocab& categories) {
  write_file_atomic(path, nlohmann::json(categories.names()).dump() + "\n");
}

}  // namespace laygen
