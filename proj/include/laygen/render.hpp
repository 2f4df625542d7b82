#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "laygen/layout.hpp"

namespace laygen {

struct RenderItem {
  Box box;
  int category = 0;
  std::string label;
};

// Fill color of a category: golden-angle hue steps on a fixed HSL wheel.
std::string category_color(int category);

// SVG 1.1 document of width x height pixels, items drawn in the given order.
std::string render_svg(std::span<const RenderItem> items, double width, double height);
// Elements drawn in raster order at the layout's canvas size.
std::string render_svg(const Layout& layout, const CategoryVocab& categories);
void write_svg(const std::filesystem::path& path, const Layout& layout, const CategoryVocab& categories);

}  // namespace laygen
