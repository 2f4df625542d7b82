#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <json.hpp>

#include "helpers.hpp"
#include "laygen/errors.hpp"
#include "laygen/eval.hpp"
#include "laygen/io.hpp"
#include "laygen/synth.hpp"

using namespace laygen;
using laygen::testing::random_layout;
using laygen::testing::TempDir;

namespace {

Layout single(int cat, int x, int y, int h, int w, int bits = 8) {
  Layout l;
  l.bits = bits;
  l.elements = {{cat, x, y, h, w, {}}};
  return l;
}

// Reference coverage by point sampling on a fine grid.
double fine_coverage(const std::vector<Box>& boxes, int grid) {
  std::size_t hits = 0;
  for (int y = 0; y < grid; ++y) {
    for (int x = 0; x < grid; ++x) {
      const double px = (x + 0.5) / grid, py = (y + 0.5) / grid;
      for (const auto& b : boxes) {
        if (px >= b.left() && px < b.right() && py >= b.top() && py < b.bottom()) {
          ++hits;
          break;
        }
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / (static_cast<double>(grid) * grid);
}

ModelConfig tiny() {
  ModelConfig c;
  c.d = 16;
  c.layers = 2;
  c.heads = 2;
  c.d_ff = 32;
  c.bits = 5;
  c.num_categories = 5;
  c.max_elements = 12;
  c.dropout = 0.0;
  return c;
}

}  // namespace

TEST_CASE("iou") {
  const Box a{0.5, 0.5, 1, 1};
  CHECK(iou(a, a) == 1.0);
  CHECK(iou(a, Box{3, 3, 1, 1}) == 0.0);
  CHECK(iou(a, Box{1.0, 0.5, 1, 1}) == doctest::Approx(1.0 / 3));
  CHECK(iou(Box{0.5, 0.5, 0, 0}, Box{0.5, 0.5, 0, 0}) == 0.0);
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Box p{rng.uniform(), rng.uniform(), rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5)};
    const Box q{rng.uniform(), rng.uniform(), rng.uniform(0.01, 0.5), rng.uniform(0.01, 0.5)};
    CHECK(iou(p, q) == iou(q, p));
    CHECK(iou(p, q) >= 0.0);
    CHECK(iou(p, q) < 1.0);
  }
}

TEST_CASE("layout_stats examples") {
  const std::vector<Box> full{{0.5, 0.5, 1, 1}};
  CHECK(layout_stats(full).coverage_pct == 100.0);
  CHECK(layout_stats(full).overlap_pct == 0.0);

  const std::vector<Box> quarters{{0.25, 0.25, 0.5, 0.5}, {0.75, 0.75, 0.5, 0.5}};
  CHECK(std::fabs(layout_stats(quarters).coverage_pct - fine_coverage(quarters, 4096)) <= 0.5);
  CHECK(std::fabs(layout_stats(quarters).coverage_pct - 50.0) <= 0.5);
  CHECK(layout_stats(quarters).overlap_pct == 0.0);

  const std::vector<Box> dup{{0.3, 0.3, 0.2, 0.2}, {0.3, 0.3, 0.2, 0.2}};
  CHECK(layout_stats(dup).overlap_pct == doctest::Approx(100.0));
  CHECK(layout_stats(std::vector<Box>{}).coverage_pct == 0.0);
  CHECK_THROWS_AS(layout_stats(full, 0), InvalidConfig);
}

TEST_CASE("coverage converges with grid resolution") {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto boxes = layout_boxes(random_layout(rng, 3, 8, 6));
    CHECK(std::fabs(layout_stats(boxes, 256).coverage_pct - fine_coverage(boxes, 1024)) < 1.0);
  }
}

TEST_CASE("flips") {
  // Centroid x = 0.2 reflects to 0.8 (bins at 5 bits: 0.2 -> bin 6, center 0.203125).
  const Layout l = single(0, 6, 3, 2, 2, 5);
  CHECK(element_box(flip_lr(l).elements[0], 5).cx == doctest::Approx(1 - 0.203125));
  CHECK(flip_lr(l).elements[0].x_bin == 25);
  CHECK(flip_lr(l).elements[0].y_bin == 3);
  CHECK(flip_ud(l).elements[0].y_bin == 28);

  Rng rng(3);
  int exact = 0;
  for (int i = 0; i < 1000; ++i) {
    const Layout r = raster_sort(random_layout(rng, 4, 6, 8));
    exact += flip_lr(flip_lr(r)) == r && flip_ud(flip_ud(r)) == r;
  }
  CHECK(exact == 1000);
}

TEST_CASE("verify_flips on a uniform model scores all variants equally") {
  Transformer model(tiny(), 1);
  auto& p = model.params();
  std::fill(p.head_weight.data().begin(), p.head_weight.data().end(), 0.0f);
  SynthGrammarConfig sc;
  sc.bits = 5;
  const auto data = synth_generate(sc, 4);
  for (const auto& f : verify_flips(model, data)) {
    CHECK(f.left_right == doctest::Approx(f.original).epsilon(1e-9));
    CHECK(f.up_down == doctest::Approx(f.original).epsilon(1e-9));
  }
}

TEST_CASE("analogy") {
  // Four random rows plus a fifth built as e1 - e0 + e2.
  Rng rng(4);
  const std::size_t dim = 6;
  std::vector<float> table(5 * dim);
  for (std::size_t i = 0; i < 4 * dim; ++i) table[i] = static_cast<float>(rng.uniform(-1, 1));
  for (std::size_t i = 0; i < dim; ++i) table[4 * dim + i] = table[dim + i] - table[i] + table[2 * dim + i];
  const auto top = analogy(table, dim, 0, 1, 2, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0] == 4);
  for (int id : top) CHECK((id != 0 && id != 1 && id != 2));

  auto scaled = table;
  for (auto& v : scaled) v *= 3.5f;
  CHECK(analogy(scaled, dim, 0, 1, 2, 1)[0] == 4);
  CHECK(analogy(table, dim, 0, 1, 2, 10).size() == 2);
  CHECK_THROWS_AS(analogy(table, dim, 0, 1, 9, 1), UnknownCategory);
}

TEST_CASE("category_embeddings are the category rows of the token table") {
  const Transformer model(tiny(), 2);
  const auto e = category_embeddings(model);
  CHECK(e.size() == 5 * 16);
  CHECK(e[0] == model.params().token_embedding.data()[3 * 16]);
}

TEST_CASE("ngram_stats") {
  Layout abc;
  abc.elements = {{0, 0, 0, 0, 0, {}}, {1, 0, 1, 0, 0, {}}, {2, 0, 2, 0, 0, {}}};
  const auto bi = ngram_stats({abc}, 2);
  REQUIRE(bi.size() == 2);
  CHECK(bi[0].categories == std::vector<int>{0, 1});
  CHECK(bi[1].categories == std::vector<int>{1, 2});
  CHECK(bi[0].count == 1);
  const auto tri = ngram_stats({abc}, 3);
  REQUIRE(tri.size() == 1);
  CHECK(tri[0].categories == std::vector<int>{0, 1, 2});

  Layout same;
  same.elements.assign(4, Element{1, 0, 0, 0, 0, {}});
  CHECK(ngram_stats({same}, 2).empty());

  // Brute-force recount.
  Rng rng(5);
  std::vector<Layout> corpus;
  for (int i = 0; i < 50; ++i) corpus.push_back(random_layout(rng, 3, 4, 7));
  for (std::size_t n : {2u, 3u}) {
    std::map<std::vector<int>, std::size_t> ref;
    for (const auto& l : corpus) {
      for (std::size_t i = 0; i + n <= l.size(); ++i) {
        std::vector<int> w;
        for (std::size_t j = 0; j < n; ++j) w.push_back(l.elements[i + j].category);
        bool distinct = true;
        for (std::size_t a = 0; a < n; ++a)
          for (std::size_t b = a + 1; b < n; ++b) distinct = distinct && w[a] != w[b];
        if (distinct) ++ref[w];
      }
    }
    const auto got = ngram_stats(corpus, n);
    CHECK(got.size() == ref.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(ref[got[i].categories] == got[i].count);
      if (i > 0) CHECK(got[i - 1].count >= got[i].count);
    }
  }
}

TEST_CASE("chamfer distance") {
  const std::vector<Box> a{{0, 0, 0, 0}}, b{{0.1, 0, 0, 0}};
  CHECK(chamfer_distance(a, b) == doctest::Approx(0.04));
  CHECK(chamfer_distance(a, a) == 0.0);
  CHECK_THROWS_AS(chamfer_distance(a, std::vector<Box>{}), EmptyLayout);
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    Layout x = random_layout(rng, 3, 6, 5), y = random_layout(rng, 3, 6, 5);
    if (x.size() == 0 || y.size() == 0) continue;
    CHECK(chamfer_distance(x, y) == doctest::Approx(chamfer_distance(y, x)));
    CHECK(chamfer_distance(x, x) == 0.0);
  }
}

TEST_CASE("nearest_neighbors") {
  Rng rng(7);
  std::vector<Layout> corpus;
  while (corpus.size() < 20) {
    Layout l = random_layout(rng, 3, 6, 5);
    if (l.size() > 0) corpus.push_back(l);
  }
  const auto nn = nearest_neighbors(corpus[7], corpus, 3);
  REQUIRE(nn.size() == 3);
  CHECK(nn[0].first == 7);
  CHECK(nn[0].second == 0.0);
  CHECK(nearest_neighbors(corpus[0], corpus, 100).size() == 20);
}

TEST_CASE("attention export sums to one per element") {
  const Transformer model(tiny(), 3);
  SynthGrammarConfig sc;
  sc.bits = 5;
  sc.seed = 8;
  const Layout l = synth_generate(sc, 1).front();
  const auto att = attention_by_element(model, l);
  REQUIRE(att.size() == l.size());
  CHECK(att[0].to_elements.empty());
  CHECK(att[0].bos == doctest::Approx(1.0));
  for (const auto& e : att) {
    double s = e.bos;
    for (double w : e.to_elements) s += w;
    CHECK(std::fabs(s - 1.0) < 1e-6);
  }

  TempDir dir("att");
  const CategoryVocab cats(sc.categories);
  export_attention(model, l, cats, dir / "a.json");
  const auto doc = nlohmann::json::parse(read_file_text(dir / "a.json"));
  CHECK(doc["elements"].size() == l.size());
  CHECK(doc["elements"]["0"]["category"] == cats.name(l.elements[0].category));
}
