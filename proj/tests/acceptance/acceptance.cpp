// Acceptance suite: one PASS/FAIL line per criterion.
//
//   laygen_acceptance [--workdir DIR] [--only 1,4,5]
//
// Criteria 5, 7 and 8 share the model trained for criterion 5.

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "laygen/corpus.hpp"
#include "laygen/errors.hpp"
#include "laygen/eval.hpp"
#include "laygen/io.hpp"
#include "laygen/layout.hpp"
#include "laygen/model.hpp"
#include "laygen/sample.hpp"
#include "laygen/synth.hpp"
#include "laygen/train.hpp"
#include "op_cases.hpp"

using namespace laygen;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, pattern, a);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

const CategoryVocab& categories() {
  static const CategoryVocab cats({"text", "title", "list", "table", "figure"});
  return cats;
}

// Small model used by the overfit and generalization runs.
ModelConfig desk_model(int bits) {
  ModelConfig c;
  c.d = 64;
  c.layers = 2;
  c.heads = 2;
  c.d_ff = 256;
  c.bits = bits;
  c.num_categories = categories().size();
  c.max_elements = 40;
  c.dropout = 0.0;
  return c;
}

std::vector<Layout> documents(std::size_t count, std::uint64_t seed, int bits) {
  SynthGrammarConfig s;
  s.kind = SynthKind::Document;
  s.bits = bits;
  s.seed = seed;
  return synth_generate(s, count);
}

// ------------------------------------------------------------------ 1

Outcome gradient_checks() {
  const auto start = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0, cases = 0;
  auto run = [&](const oracle::OpCase& c) {
    const auto report = grad_check(c.build, c.leaves, 1e-5);
    checked += report.checked;
    ++cases;
    if (report.worst >= worst) {
      worst = report.worst;
      worst_name = c.name;
    }
  };
  for (const auto& c : oracle::differentiable_op_cases()) run(c);
  for (std::uint64_t seed : {1, 2, 3}) run(oracle::block_case(seed));
  const double secs = seconds_since(start);
  Outcome o;
  o.pass = worst < 1e-4 && secs < 60.0;
  o.detail = std::to_string(cases) + " graphs, " + std::to_string(checked) + " coordinates, worst rel err " +
             fmt("%.3g", worst) + " (" + worst_name + "), " + fmt("%.1f s", secs);
  return o;
}

// ------------------------------------------------------------------ 2

Outcome causality() {
  ModelConfig c = desk_model(6);
  c.max_elements = 8;
  const Transformer model(c, 11);
  Rng rng(12);
  const int V = c.vocab_size();
  int identical = 0;
  const int trials = 100;
  for (int i = 0; i < trials; ++i) {
    const std::size_t len = 2 + rng.below(c.max_seq_len() - 1);
    std::vector<int> tokens(len);
    for (auto& t : tokens) t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(V - 1)));
    const std::size_t j = rng.below(len - 1);
    auto changed = tokens;
    for (std::size_t t = j + 1; t < len; ++t) changed[t] = static_cast<int>(rng.below(static_cast<std::uint64_t>(V)));
    const auto a = model.forward(tokens, 1, len, false, 0).logits;
    const auto b = model.forward(changed, 1, len, false, 0).logits;
    const std::size_t n = (j + 1) * static_cast<std::size_t>(V);
    identical += std::equal(a.data().begin(), a.data().begin() + static_cast<long>(n), b.data().begin());
  }
  return {identical == trials, std::to_string(identical) + "/" + std::to_string(trials) +
                                   " perturbations left earlier logits bit-identical"};
}

// ------------------------------------------------------------------ 3

Outcome tokenizer() {
  Rng rng(31);
  const Vocab v(8, 5);
  int round_trips = 0;
  for (int i = 0; i < 1000; ++i) {
    Layout l;
    l.bits = 8;
    const auto n = rng.below(v.max_elements + 1);
    for (std::uint64_t k = 0; k < n; ++k) {
      l.elements.push_back({static_cast<int>(rng.below(5)), static_cast<int>(rng.below(256)),
                            static_cast<int>(rng.below(256)), static_cast<int>(rng.below(256)),
                            static_cast<int>(rng.below(256)), {}});
    }
    round_trips += decode_sequence(encode_sequence(l, v), v) == l;
  }
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double x = rng.uniform();
    worst = std::max(worst, std::fabs(dequantize(quantize(x, 8), 8) - x));
  }
  return {round_trips == 1000 && worst <= 1.0 / 512,
          std::to_string(round_trips) + "/1000 round trips, max quantization error " + fmt("%.6g", worst) +
              " (bound " + fmt("%.6g", 1.0 / 512) + ")"};
}

// ------------------------------------------------------------------ 4

Outcome overfit() {
  const auto start = Clock::now();
  const ModelConfig c = desk_model(6);
  const auto data = documents(32, 4, 6);
  Transformer model(c, 4);
  TrainConfig t;
  t.lr = 3e-3;
  t.loss_mode = LossMode::Nll;
  t.seed = 4;
  const auto batches = make_batches(data, c.vocab(), 1 << 16, 0);
  Trainer trainer(model, t);
  double nll = per_token_nll(model, data);
  const double uniform = std::log(c.vocab_size());
  std::size_t step = 0;
  while (step < 2000 && nll >= 0.2 && seconds_since(start) < 300.0) {
    for (const auto& b : batches) trainer.step(b);
    ++step;
    if (step % 10 == 0) nll = per_token_nll(model, data);
  }
  nll = per_token_nll(model, data);
  const double secs = seconds_since(start);
  return {nll < 0.2 && step <= 2000 && secs < 300.0,
          "per-token NLL " + fmt("%.4f", nll) + " after " + std::to_string(step) + " steps, " + fmt("%.1f s", secs) +
              " (uniform ln V = " + fmt("%.3f", uniform) + ")"};
}

// ------------------------------------------------------------------ 5, 7, 8

struct GeneralizationRun {
  std::vector<Layout> train, val;
  std::optional<Transformer> model;
  double best_val = 0, seconds = 0;
  int epochs = 0;
  std::string error;
};

GeneralizationRun& generalization_run(const fs::path& workdir) {
  static std::unique_ptr<GeneralizationRun> run;
  if (run) return *run;
  run = std::make_unique<GeneralizationRun>();
  auto& r = *run;
  const ModelConfig c = desk_model(6);
  r.train = documents(2000, 100, 6);
  r.val = documents(200, 200, 6);
  TrainConfig t;
  t.lr = 1e-3;
  t.epochs = 20;
  t.patience = 5;
  t.token_budget = 2048;
  t.seed = 5;
  Transformer model(c, 5);
  const auto start = Clock::now();
  FitCallbacks cb;
  cb.on_epoch = [](const EpochLog& e) {
    std::fprintf(stderr, "  [5] epoch %d train %.4f val %.4f (%.1f s)\n", e.epoch, e.train_nll, e.val_nll, e.seconds);
  };
  try {
    const auto result = fit(model, categories(), r.train, r.val, t, cb);
    r.seconds = seconds_since(start);
    r.epochs = static_cast<int>(result.log.size());
    r.best_val = std::numeric_limits<double>::infinity();
    for (const auto& e : result.log) r.best_val = std::min(r.best_val, e.val_nll);
    save_checkpoint(workdir / "generalization.ckpt", result.best);
    r.model.emplace(result.best.to_model());
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  return r;
}

Outcome generalization(const fs::path& workdir) {
  auto& r = generalization_run(workdir);
  if (!r.model) return {false, "training failed: " + r.error};
  const double uniform = std::log(r.model->config().vocab_size());
  const double held_out = per_token_nll(*r.model, r.val);
  return {held_out < 0.5 * uniform && r.epochs <= 20 && r.seconds < 1800.0,
          "held-out per-token NLL " + fmt("%.4f", held_out) + " vs 0.5 ln V = " + fmt("%.4f", 0.5 * uniform) +
              ", " + std::to_string(r.epochs) + " epochs, " + fmt("%.1f s", r.seconds)};
}

Outcome flips(const fs::path& workdir) {
  auto& r = generalization_run(workdir);
  if (!r.model) return {false, "training failed: " + r.error};
  const auto scores = verify_flips(*r.model, r.val);
  double orig = 0, lr = 0, ud = 0;
  std::size_t ud_up = 0;
  for (const auto& s : scores) {
    orig += s.original;
    lr += s.left_right;
    ud += s.up_down;
    ud_up += s.up_down > s.original;
  }
  const double n = static_cast<double>(scores.size());
  const double ud_gap = (ud - orig) / n, lr_gap = (lr - orig) / n;
  const double share = static_cast<double>(ud_up) / n;
  return {ud_gap > 0 && share >= 0.8 && std::fabs(lr_gap) < 0.25 * ud_gap,
          "ud gap " + fmt("%.4f", ud_gap) + " (" + fmt("%.1f%%", 100 * share) + " of layouts up), lr gap " +
              fmt("%.4f", lr_gap) + " (" + fmt("%.1f%%", ud_gap > 0 ? 100 * std::fabs(lr_gap) / ud_gap : 0.0) +
              " of ud gap)"};
}

Outcome sampling(const fs::path& workdir) {
  auto& r = generalization_run(workdir);
  if (!r.model) return {false, "training failed: " + r.error};
  SamplerConfig s;
  s.strategy = Strategy::Nucleus;
  s.top_p = 0.9;
  s.seed = 8;
  s.max_elements = r.model->config().max_elements;
  Layout empty;
  empty.bits = r.model->config().bits;
  const Vocab vocab = r.model->config().vocab();
  std::size_t decoded = 0;
  double cov = 0, ovl = 0;
  std::vector<Layout> samples;
  for (std::size_t i = 0; i < 200; ++i) {
    SamplerConfig one = s;
    one.seed = s.seed + i;
    try {
      const auto g = generate(*r.model, empty, one);
      decode_sequence(g.tokens, vocab);
      ++decoded;
      const auto st = layout_stats(g.layout);
      cov += st.coverage_pct;
      ovl += st.overlap_pct;
      samples.push_back(g.layout);
    } catch (const DataError&) {
    }
  }
  double ref_cov = 0, ref_ovl = 0;
  for (const auto& l : r.train) {
    const auto st = layout_stats(l);
    ref_cov += st.coverage_pct;
    ref_ovl += st.overlap_pct;
  }
  ref_cov /= static_cast<double>(r.train.size());
  ref_ovl /= static_cast<double>(r.train.size());
  if (decoded > 0) {
    cov /= static_cast<double>(decoded);
    ovl /= static_cast<double>(decoded);
  }
  save_corpus(workdir / "samples.jsonl", samples, categories());
  return {decoded == 200 && std::fabs(cov - ref_cov) <= 10.0 && std::fabs(ovl - ref_ovl) <= 5.0,
          std::to_string(decoded) + "/200 decoded; coverage " + fmt("%.2f", cov) + " vs corpus " +
              fmt("%.2f", ref_cov) + ", overlap " + fmt("%.2f", ovl) + " vs corpus " + fmt("%.2f", ref_ovl)};
}

// ------------------------------------------------------------------ 6

Outcome precision_ablation() {
  const auto start = Clock::now();
  const auto train8 = documents(1000, 600, 8), val8 = documents(200, 601, 8);
  std::map<int, double> best;
  for (int bits : {5, 8}) {
    std::vector<Layout> train, val;
    for (const auto& l : train8) train.push_back(requantize(l, bits));
    for (const auto& l : val8) val.push_back(requantize(l, bits));
    TrainConfig t;
    t.lr = 1e-3;
    t.epochs = 10;
    t.token_budget = 2048;
    t.seed = 6;
    Transformer model(desk_model(bits), 6);
    const auto result = fit(model, categories(), train, val, t);
    best[bits] = std::numeric_limits<double>::infinity();
    for (const auto& e : result.log) best[bits] = std::min(best[bits], e.val_nll);
    std::fprintf(stderr, "  [6] bits %d best val %.4f\n", bits, best[bits]);
  }
  const double margin = best[8] - best[5];
  return {margin >= 0.1, "val NLL bits=5 " + fmt("%.4f", best[5]) + ", bits=8 " + fmt("%.4f", best[8]) +
                             ", margin " + fmt("%.4f", margin) + ", " + fmt("%.1f s", seconds_since(start))};
}

// ------------------------------------------------------------------ 9

// Independent nucleus: sort by (-p, id), accumulate to p.
std::set<int> analytic_nucleus(const std::vector<double>& probs, double p, double* mass) {
  std::vector<std::pair<double, int>> order;
  for (std::size_t i = 0; i < probs.size(); ++i) order.emplace_back(-probs[i], static_cast<int>(i));
  std::sort(order.begin(), order.end());
  std::set<int> kept;
  double cum = 0;
  for (const auto& [neg, id] : order) {
    if (cum >= p) break;
    kept.insert(id);
    cum += -neg;
  }
  *mass = cum;
  return kept;
}

Outcome nucleus() {
  const Vocab vocab(4, 3);  // 16 coordinate tokens
  const auto offset = static_cast<std::size_t>(vocab.coord_offset());
  Rng dist_rng(91), draw_rng(92);
  std::size_t draws = 0, inside = 0, mass_ok = 0, distributions = 0;
  for (double p : {0.5, 0.75, 0.9, 0.95}) {
    for (int d = 0; d < 5; ++d) {
      std::vector<double> probs(16);
      double s = 0;
      for (auto& x : probs) s += (x = std::pow(dist_rng.uniform(), 3.0));
      for (auto& x : probs) x /= s;
      double mass = 0;
      const auto expected = analytic_nucleus(probs, p, &mass);
      mass_ok += mass >= p;
      ++distributions;
      std::vector<float> logits(static_cast<std::size_t>(vocab.size()), 0.0f);
      for (std::size_t i = 0; i < 16; ++i) logits[offset + i] = static_cast<float>(std::log(probs[i]));
      // The sampler sees float logits; recompute the reference from them.
      std::vector<double> from_float(16);
      double z = 0;
      for (std::size_t i = 0; i < 16; ++i) z += (from_float[i] = std::exp(static_cast<double>(logits[offset + i])));
      for (auto& x : from_float) x /= z;
      double float_mass = 0;
      const auto reference = analytic_nucleus(from_float, p, &float_mass);
      SamplerConfig sc;
      sc.top_p = p;
      for (int k = 0; k < 500; ++k) {
        const int t = next_token(logits, SlotKind::Coordinate, sc, vocab, draw_rng);
        ++draws;
        inside += reference.count(t - static_cast<int>(offset)) == 1 && expected == reference;
      }
    }
  }
  return {draws == 10000 && inside == draws && mass_ok == distributions,
          std::to_string(inside) + "/" + std::to_string(draws) + " draws inside the analytic nucleus, " +
              std::to_string(mass_ok) + "/" + std::to_string(distributions) + " kept sets with mass >= p"};
}

// ------------------------------------------------------------------ 10

Outcome zero_head() {
  ModelConfig c = desk_model(8);
  c.max_elements = 128;
  Transformer model(c, 10);
  auto& p = model.params();
  std::fill(p.head_weight.data().begin(), p.head_weight.data().end(), 0.0f);
  std::fill(p.head_bias.data().begin(), p.head_bias.data().end(), 0.0f);
  const double lnv = std::log(c.vocab_size());
  std::vector<Layout> layouts = documents(20, 10, 8);
  Rng rng(10);
  for (int i = 0; i < 20; ++i) {
    Layout l;
    l.bits = 8;
    const auto n = rng.below(60);
    for (std::uint64_t k = 0; k < n; ++k) {
      l.elements.push_back({static_cast<int>(rng.below(5)), static_cast<int>(rng.below(256)),
                            static_cast<int>(rng.below(256)), static_cast<int>(rng.below(256)),
                            static_cast<int>(rng.below(256)), {}});
    }
    layouts.push_back(l);
  }
  layouts.emplace_back().bits = 8;
  double worst = 0;
  for (const auto& l : layouts) worst = std::max(worst, std::fabs(score_nll(model, l).per_token - lnv));
  return {worst <= 1e-9, std::to_string(layouts.size()) + " layouts, max |NLL - ln V| = " + fmt("%.3g", worst)};
}

// ------------------------------------------------------------------ 11

double brute_chamfer(const Layout& a, const Layout& b) {
  auto pts = [](const Layout& l) {
    std::vector<std::array<double, 4>> out;
    for (const auto& e : l.elements) {
      const double cx = dequantize(e.x_bin, l.bits), cy = dequantize(e.y_bin, l.bits);
      const double h = dequantize(e.h_bin, l.bits), w = dequantize(e.w_bin, l.bits);
      out.push_back({cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2});
    }
    return out;
  };
  auto one_way = [](const std::vector<std::array<double, 4>>& p, const std::vector<std::array<double, 4>>& q) {
    double total = 0;
    for (const auto& x : p) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& y : q) {
        double d = 0;
        for (int i = 0; i < 4; ++i) d += (x[i] - y[i]) * (x[i] - y[i]);
        best = std::min(best, d);
      }
      total += best;
    }
    return total / static_cast<double>(p.size());
  };
  const auto pa = pts(a), pb = pts(b);
  return one_way(pa, pb) + one_way(pb, pa);
}

Outcome eval_oracles() {
  Rng rng(111);
  int nn_ok = 0, ngram_ok = 0;
  for (int corpus_id = 0; corpus_id < 100; ++corpus_id) {
    const int bits = 3 + static_cast<int>(rng.below(4));
    const int cats = 2 + static_cast<int>(rng.below(4));
    auto random_layout = [&](std::size_t min_n) {
      Layout l;
      l.bits = bits;
      const auto n = min_n + rng.below(7);
      for (std::uint64_t k = 0; k < n; ++k) {
        const auto bins = static_cast<std::uint64_t>(1) << bits;
        l.elements.push_back({static_cast<int>(rng.below(static_cast<std::uint64_t>(cats))),
                              static_cast<int>(rng.below(bins)), static_cast<int>(rng.below(bins)),
                              static_cast<int>(rng.below(bins)), static_cast<int>(rng.below(bins)), {}});
      }
      return raster_sort(l);
    };
    std::vector<Layout> corpus;
    const auto size = 5 + rng.below(20);
    for (std::uint64_t i = 0; i < size; ++i) corpus.push_back(random_layout(1));
    if (rng.uniform() < 0.3) corpus.push_back(corpus[rng.below(corpus.size())]);  // force a tie
    const Layout query = rng.uniform() < 0.5 ? corpus[rng.below(corpus.size())] : random_layout(1);
    const std::size_t k = 1 + rng.below(corpus.size() + 2);

    std::vector<std::pair<double, std::size_t>> ref;
    for (std::size_t i = 0; i < corpus.size(); ++i) ref.emplace_back(brute_chamfer(query, corpus[i]), i);
    std::sort(ref.begin(), ref.end());
    ref.resize(std::min(k, ref.size()));
    const auto got = nearest_neighbors(query, corpus, k);
    bool same = got.size() == ref.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].first == ref[i].second && got[i].second == ref[i].first;
    }
    nn_ok += same;

    bool counts_ok = true;
    for (std::size_t n : {2u, 3u}) {
      std::map<std::vector<int>, std::size_t> brute;
      for (const auto& l : corpus) {
        for (std::size_t i = 0; i + n <= l.size(); ++i) {
          std::vector<int> w;
          for (std::size_t j = 0; j < n; ++j) w.push_back(l.elements[i + j].category);
          if (std::set<int>(w.begin(), w.end()).size() == n) ++brute[w];
        }
      }
      const auto got_ngrams = ngram_stats(corpus, n);
      counts_ok = counts_ok && got_ngrams.size() == brute.size();
      for (std::size_t i = 0; counts_ok && i < got_ngrams.size(); ++i) {
        counts_ok = brute[got_ngrams[i].categories] == got_ngrams[i].count &&
                    (i == 0 || got_ngrams[i - 1].count >= got_ngrams[i].count);
      }
    }
    ngram_ok += counts_ok;
  }
  return {nn_ok == 100 && ngram_ok == 100, "nearest-neighbor rankings " + std::to_string(nn_ok) +
                                               "/100, n-gram tables " + std::to_string(ngram_ok) + "/100"};
}

// ------------------------------------------------------------------ 12

Outcome checkpoint_integrity(const fs::path& workdir) {
  const ModelConfig c = desk_model(8);
  Transformer model(c, 12);
  // Train a few steps so optimizer state is non-trivial.
  TrainConfig t;
  t.lr = 1e-3;
  Trainer trainer(model, t);
  const auto data = documents(8, 12, 8);
  for (const auto& b : make_batches(data, c.vocab(), 4096, 0)) trainer.step(b);
  Checkpoint ck = Checkpoint::from_model(model, categories());
  ck.optimizer = trainer.state();
  ck.train = t;
  const auto path = workdir / "integrity.ckpt";
  save_checkpoint(path, ck);
  const Checkpoint back = load_checkpoint(path);
  const Transformer restored = back.to_model();

  bool identical = back.optimizer.has_value() && back.optimizer->step == trainer.state().step;
  for (const auto& l : data) {
    const auto tokens = encode_sequence(l, c.vocab());
    const auto a = model.forward(tokens, 1, tokens.size(), false, 0).logits;
    const auto b = restored.forward(tokens, 1, tokens.size(), false, 0).logits;
    identical = identical && std::equal(a.data().begin(), a.data().end(), b.data().begin(), b.data().end());
  }

  const auto bytes = read_file_bytes(path);
  int rejected = 0, attempts = 0;
  auto expect_reject = [&](std::vector<std::uint8_t> corrupt) {
    ++attempts;
    const auto bad = workdir / "corrupt.ckpt";
    write_file_atomic(bad, corrupt);
    try {
      load_checkpoint(bad);
    } catch (const ChecksumError&) {
      ++rejected;
    } catch (const IncompatibleCheckpoint&) {
      ++rejected;
    }
  };
  expect_reject({bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2)});
  expect_reject({bytes.begin(), bytes.end() - 1});
  expect_reject({});
  Rng rng(12);
  for (int i = 0; i < 20; ++i) {
    auto flipped = bytes;
    flipped[rng.below(flipped.size())] ^= static_cast<std::uint8_t>(1u << rng.below(8));
    expect_reject(flipped);
  }
  auto version = bytes;
  version[4] ^= 0x7F;
  expect_reject(version);
  return {identical && rejected == attempts, std::string(identical ? "bit-identical" : "MISMATCHED") +
                                                 " forward after reload; " + std::to_string(rejected) + "/" +
                                                 std::to_string(attempts) + " corrupted files rejected"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"laygen acceptance suite"};
  std::string workdir = "acceptance_work";
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Scratch directory for checkpoints and samples");
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_checks},
      {"causality", causality},
      {"tokenizer round trip", tokenizer},
      {"overfit check", overfit},
      {"generalization", [&] { return generalization(workdir); }},
      {"precision ablation", precision_ablation},
      {"flip verification", [&] { return flips(workdir); }},
      {"sampling statistics", [&] { return sampling(workdir); }},
      {"nucleus correctness", nucleus},
      {"exact-NLL sanity", zero_head},
      {"eval oracles", eval_oracles},
      {"checkpoint integrity", [&] { return checkpoint_integrity(workdir); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
