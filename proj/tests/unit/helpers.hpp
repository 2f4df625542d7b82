#pragma once

#include <filesystem>
#include <unistd.h>
#include <string>

#include "laygen/layout.hpp"
#include "laygen/rng.hpp"

namespace laygen::testing {

// Uniformly random valid layout with up to `max_n` elements.
inline Layout random_layout(Rng& rng, int categories, int bits, std::size_t max_n) {
  Layout l;
  l.bits = bits;
  const auto n = rng.below(max_n + 1);
  const auto bins = static_cast<std::uint64_t>(1) << bits;
  for (std::uint64_t i = 0; i < n; ++i) {
    Element e;
    e.category = static_cast<int>(rng.below(static_cast<std::uint64_t>(categories)));
    e.x_bin = static_cast<int>(rng.below(bins));
    e.y_bin = static_cast<int>(rng.below(bins));
    e.h_bin = static_cast<int>(rng.below(bins));
    e.w_bin = static_cast<int>(rng.below(bins));
    l.elements.push_back(e);
  }
  return l;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("laygen-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(splitmix64(reinterpret_cast<std::uintptr_t>(this))));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace laygen::testing
