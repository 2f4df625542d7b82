#include "laygen/render.hpp"

#include <cmath>
#include <cstdio>

#include "laygen/io.hpp"

namespace laygen {

namespace {

// Shortest fixed-point form with at most three decimals.
std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s = buf;
  s.erase(s.find_last_not_of('0') + 1);
  if (s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string category_color(int category) {
  const double hue = std::fmod(category * 137.508, 360.0);
  const double s = 0.65, l = 0.55;
  const double c = (1 - std::fabs(2 * l - 1)) * s;
  const double hp = hue / 60.0;
  const double x = c * (1 - std::fabs(std::fmod(hp, 2.0) - 1));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(hp)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = l - c / 2;
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", static_cast<int>(std::lround((r + m) * 255)),
                static_cast<int>(std::lround((g + m) * 255)), static_cast<int>(std::lround((b + m) * 255)));
  return buf;
}

std::string render_svg(std::span<const RenderItem> items, double width, double height) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" + num(width) + "\" height=\"" +
         num(height) + "\" viewBox=\"0 0 " + num(width) + " " + num(height) + "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + num(width) + "\" height=\"" + num(height) +
         "\" fill=\"#ffffff\" class=\"canvas\"/>\n";
  for (const auto& item : items) {
    const Box& b = item.box;
    const std::string color = category_color(item.category);
    const double x = b.left() * width, y = b.top() * height;
    out += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(b.w * width) + "\" height=\"" +
           num(b.h * height) + "\" fill=\"" + color + "\" fill-opacity=\"0.5\" stroke=\"" + color + "\"/>\n";
    out += "<text x=\"" + num(x + 2) + "\" y=\"" + num(y + 10) + "\" font-size=\"9\" font-family=\"sans-serif\">" +
           escape(item.label) + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

std::string render_svg(const Layout& layout, const CategoryVocab& categories) {
  const Layout sorted = raster_sort(layout);
  std::vector<RenderItem> items;
  for (const auto& e : sorted.elements) {
    const bool named = e.category >= 0 && e.category < categories.size();
    items.push_back({element_box(e, sorted.bits), e.category,
                     named ? categories.name(e.category) : std::to_string(e.category)});
  }
  return render_svg(items, layout.canvas_w, layout.canvas_h);
}

void write_svg(const std::filesystem::path& path, const Layout& layout, const CategoryVocab& categories) {
  write_file_atomic(path, render_svg(layout, categories));
}

}  // namespace laygen
