#include "laygen/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "laygen/config_json.hpp"
#include "laygen/corpus.hpp"
#include "laygen/errors.hpp"
#include "laygen/eval.hpp"
#include "laygen/io.hpp"
#include "laygen/render.hpp"
#include "laygen/sample.hpp"
#include "laygen/synth.hpp"
#include "laygen/train.hpp"

namespace laygen {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

template <typename T>
void override_with(const std::optional<T>& flag, T& field) {
  if (flag) field = *flag;
}

json load_config(const std::optional<std::string>& path) {
  if (!path) return json::object();
  try {
    json j = json::parse(read_file_text(*path));
    if (!j.is_object()) throw ParseError(1, "configuration must be a JSON object");
    return j;
  } catch (const json::exception& e) {
    throw ParseError(1, std::string("configuration: ") + e.what());
  }
}

template <typename T>
T section(const json& config, const char* key) {
  T value;
  if (auto it = config.find(key); it != config.end()) it->get_to(value);
  return value;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

CategoryVocab categories_from(const std::optional<std::string>& path) {
  return path ? load_categories(*path) : CategoryVocab(SynthGrammarConfig{}.categories);
}

// Deterministic holdout: a seeded shuffle, the first `fraction` go to validation.
std::pair<std::vector<Layout>, std::vector<Layout>> split_holdout(std::vector<Layout> all, double fraction,
                                                                  std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidConfig("val-fraction must be in (0, 1)");
  if (all.size() < 2) throw EmptyBatch("need at least two layouts to hold out a validation set");
  Rng rng(seed ^ 0xC0FFEEULL);
  rng.shuffle(all.begin(), all.end());
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(fraction * static_cast<double>(all.size()))), 1, all.size() - 1);
  std::vector<Layout> val(all.begin(), all.begin() + static_cast<long>(n_val));
  std::vector<Layout> train(all.begin() + static_cast<long>(n_val), all.end());
  return {std::move(train), std::move(val)};
}

struct ModelFlags {
  std::optional<int> d, layers, heads, d_ff, bits;
  std::optional<double> dropout;
  std::optional<std::size_t> max_elements;
  std::optional<bool> tie_output;

  void add(CLI::App* app, bool with_bits = true) {
    app->add_option("--d", d, "Model width");
    app->add_option("--layers", layers, "Transformer blocks");
    app->add_option("--heads", heads, "Attention heads");
    app->add_option("--d-ff", d_ff, "Feed-forward width");
    if (with_bits) app->add_option("--bits", bits, "Quantization precision");
    app->add_option("--dropout", dropout, "Dropout probability");
    app->add_option("--max-elements", max_elements, "Maximum elements per layout");
    app->add_option("--tie-output", tie_output, "Tie the output head to the token embedding");
  }
  void apply_to(ModelConfig& c) const {
    override_with(d, c.d);
    override_with(layers, c.layers);
    override_with(heads, c.heads);
    override_with(d_ff, c.d_ff);
    override_with(bits, c.bits);
    override_with(dropout, c.dropout);
    override_with(max_elements, c.max_elements);
    override_with(tie_output, c.tie_output);
  }
};

struct TrainFlags {
  std::optional<double> lr, epsilon, lambda, clip_norm;
  std::optional<int> epochs, patience;
  std::optional<std::size_t> token_budget, max_steps;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> loss, order, kl_direction;

  void add(CLI::App* app) {
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--epochs", epochs, "Maximum epochs");
    app->add_option("--epsilon", epsilon, "Label smoothing");
    app->add_option("--lambda", lambda, "Continuous-attribute loss weight");
    app->add_option("--token-budget", token_budget, "Tokens per batch (rows x padded length)");
    app->add_option("--patience", patience, "Early-stopping patience in epochs");
    app->add_option("--clip-norm", clip_norm, "Gradient clipping norm (0 disables)");
    app->add_option("--max-steps", max_steps, "Stop after this many optimizer steps");
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--loss", loss, "label_smoothing or nll");
    app->add_option("--order", order, "raster, random or permuted_prefix");
    app->add_option("--kl-direction", kl_direction, "target_to_prediction or prediction_to_target");
  }
  void apply_to(TrainConfig& c) const {
    override_with(lr, c.lr);
    override_with(epsilon, c.epsilon);
    override_with(lambda, c.lambda);
    override_with(clip_norm, c.clip_norm);
    override_with(epochs, c.epochs);
    override_with(patience, c.patience);
    override_with(token_budget, c.token_budget);
    override_with(max_steps, c.max_steps);
    override_with(seed, c.seed);
    if (loss) c.loss_mode = parse_loss_mode(*loss);
    if (order) c.order = parse_element_order(*order);
    if (kl_direction) {
      json j = {{"kl_direction", *kl_direction}};
      from_json(j, c);
    }
  }
};

struct SamplerFlags {
  std::optional<std::string> strategy;
  std::optional<double> top_p, temperature;
  std::optional<std::size_t> max_elements;
  std::optional<bool> grammar_mask;
  std::optional<std::uint64_t> seed;

  void add(CLI::App* app) {
    app->add_option("--strategy", strategy, "nucleus, greedy or temperature");
    app->add_option("--top-p", top_p, "Nucleus mass");
    app->add_option("--temperature", temperature, "Softmax temperature");
    app->add_option("--max-elements", max_elements, "Maximum elements per sample");
    app->add_option("--grammar-mask", grammar_mask, "Restrict tokens to the slot grammar (true/false)");
    app->add_option("--seed", seed, "Random seed");
  }
  void apply_to(SamplerConfig& c) const {
    if (strategy) from_json(json{{"strategy", *strategy}}, c);
    override_with(top_p, c.top_p);
    override_with(temperature, c.temperature);
    override_with(max_elements, c.max_elements);
    override_with(grammar_mask, c.grammar_mask);
    override_with(seed, c.seed);
  }
};

struct LoadedModel {
  Checkpoint checkpoint;
  Transformer model;
};

LoadedModel open_checkpoint(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  Transformer model = ck.to_model();
  return {std::move(ck), std::move(model)};
}

void write_svgs(const fs::path& dir, const std::vector<Layout>& layouts, const CategoryVocab& categories,
                std::optional<double> width = {}, std::optional<double> height = {}) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < layouts.size(); ++i) {
    Layout l = layouts[i];
    override_with(width, l.canvas_w);
    override_with(height, l.canvas_h);
    std::ostringstream name;
    name << std::setw(5) << std::setfill('0') << i << ".svg";
    write_svg(dir / name.str(), l, categories);
  }
}

// ---------------------------------------------------------------- synth

struct SynthCommand {
  std::optional<std::string> config, kind, categories_out;
  std::optional<std::size_t> min_elements, max_elements;
  std::optional<double> jitter;
  std::optional<int> bits;
  std::optional<std::uint64_t> seed;
  std::size_t count = 100;
  std::string out;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("synth", "Generate a synthetic layout corpus (JSONL)");
    c->add_option("--config", config, "JSON run configuration (section \"synth\")");
    c->add_option("--kind", kind, "document, grid or asymmetric");
    c->add_option("--count", count, "Number of layouts")->capture_default_str();
    c->add_option("--min-elements", min_elements, "Fewest elements per layout");
    c->add_option("--max-elements", max_elements, "Most elements per layout");
    c->add_option("--jitter", jitter, "Centroid jitter std-dev in bins");
    c->add_option("--bits", bits, "Quantization precision");
    c->add_option("--seed", seed, "Random seed");
    c->add_option("--out", out, "Output JSONL")->required();
    c->add_option("--categories-out", categories_out, "Also write the category vocabulary JSON");
    c->callback([this] { run(); });
  }

  void run() const {
    auto cfg = section<SynthGrammarConfig>(load_config(config), "synth");
    if (kind) cfg.kind = parse_synth_kind(*kind);
    override_with(min_elements, cfg.min_elements);
    override_with(max_elements, cfg.max_elements);
    override_with(jitter, cfg.jitter);
    override_with(bits, cfg.bits);
    override_with(seed, cfg.seed);
    const auto layouts = synth_generate(cfg, count);
    const CategoryVocab categories(cfg.categories);
    save_corpus(out, layouts, categories);
    if (categories_out) save_categories(*categories_out, categories);
  }
};

// ---------------------------------------------------------------- train

struct TrainCommand {
  std::optional<std::string> config, categories, val, log, resume;
  std::string data, out;
  double val_fraction = 0.1;
  ModelFlags model_flags;
  TrainFlags train_flags;
  std::ostream* err = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("train", "Train a model on a JSONL corpus");
    c->add_option("--config", config, "JSON run configuration (sections \"model\", \"train\")");
    c->add_option("--data", data, "Training corpus JSONL")->required();
    c->add_option("--val", val, "Validation corpus JSONL (default: holdout of --data)");
    c->add_option("--val-fraction", val_fraction, "Holdout share when --val is absent")->capture_default_str();
    c->add_option("--categories", categories, "Category vocabulary JSON");
    c->add_option("--out", out, "Checkpoint path (best validation NLL)")->required();
    c->add_option("--log", log, "Per-epoch CSV log");
    c->add_option("--resume", resume, "Continue from a checkpoint that holds optimizer state");
    model_flags.add(c);
    train_flags.add(c);
    c->callback([this] { run(); });
  }

  void run() const {
    const json cfg = load_config(config);
    auto mc = section<ModelConfig>(cfg, "model");
    auto tc = section<TrainConfig>(cfg, "train");
    std::optional<FitResume> resume_state;
    std::optional<Transformer> model;
    CategoryVocab cats = categories_from(categories);
    if (resume) {
      auto loaded = open_checkpoint(*resume);
      if (!loaded.checkpoint.optimizer) throw IncompatibleCheckpoint("checkpoint has no optimizer state");
      mc = loaded.checkpoint.model;
      if (loaded.checkpoint.train) tc = *loaded.checkpoint.train;
      cats = loaded.checkpoint.categories;
      resume_state = FitResume{*loaded.checkpoint.optimizer, loaded.checkpoint.epoch};
      model.emplace(std::move(loaded.model));
    } else {
      model_flags.apply_to(mc);
      mc.num_categories = cats.size();
    }
    train_flags.apply_to(tc);
    mc.validate();
    tc.validate();
    if (!model) model.emplace(mc, tc.seed);

    const CorpusOptions opts{mc.bits, mc.max_elements};
    Corpus corpus = load_corpus(data, cats, opts);
    if (corpus.dropped > 0) *err << "dropped " << corpus.dropped << " layouts over " << mc.max_elements << " elements\n";
    std::vector<Layout> train_set, val_set;
    if (val) {
      train_set = std::move(corpus.layouts);
      val_set = load_corpus(*val, cats, opts).layouts;
    } else {
      std::tie(train_set, val_set) = split_holdout(std::move(corpus.layouts), val_fraction, tc.seed);
    }
    *err << "train " << train_set.size() << " / val " << val_set.size() << " layouts, " << model->parameter_count()
         << " parameters, uniform NLL " << fmt(std::log(mc.vocab_size()), 4) << "\n";

    std::string csv = "epoch,train_nll,val_nll,seconds\n";
    FitCallbacks callbacks;
    callbacks.on_epoch = [&](const EpochLog& e) {
      *err << "epoch " << e.epoch << " train " << fmt(e.train_nll, 5) << " val " << fmt(e.val_nll, 5) << " ("
           << fmt(e.seconds, 3) << "s)\n";
      csv += std::to_string(e.epoch) + "," + fmt(e.train_nll, 8) + "," + fmt(e.val_nll, 8) + "," +
             fmt(e.seconds, 6) + "\n";
      if (log) write_file_atomic(*log, csv);
    };
    FitResult result = fit(*model, cats, train_set, val_set, tc, callbacks, resume_state);
    save_checkpoint(out, result.best);
  }
};

// ---------------------------------------------------------------- sample / complete

struct SampleCommand {
  std::optional<std::string> config, svg_dir, seeds;
  std::string checkpoint, out;
  std::size_t count = 10;
  double width = 256, height = 256;
  SamplerFlags sampler_flags;
  std::ostream* err = nullptr;
  bool completion = false;

  void add(CLI::App& app, bool complete) {
    completion = complete;
    auto* c = complete ? app.add_subcommand("complete", "Complete seed layouts with a trained model")
                       : app.add_subcommand("sample", "Sample layouts from a trained model");
    c->add_option("--config", config, "JSON run configuration (section \"sampler\")");
    c->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    if (complete) {
      c->add_option("--seeds", seeds, "Seed layouts JSONL")->required();
      c->add_option("--count", count, "Completions per seed layout")->capture_default_str();
    } else {
      c->add_option("--count", count, "Number of samples")->capture_default_str();
      c->add_option("--width", width, "Canvas width of generated layouts")->capture_default_str();
      c->add_option("--height", height, "Canvas height of generated layouts")->capture_default_str();
    }
    c->add_option("--out", out, "Output JSONL")->required();
    c->add_option("--svg-dir", svg_dir, "Also render each result to SVG in this directory");
    sampler_flags.add(c);
    c->callback([this] { run(); });
  }

  void run() const {
    auto sc = section<SamplerConfig>(load_config(config), "sampler");
    sampler_flags.apply_to(sc);
    sc.validate();
    const auto [ck, model] = open_checkpoint(checkpoint);
    std::vector<Layout> requests;
    if (completion) {
      const auto seed_layouts =
          load_corpus(*seeds, ck.categories, {ck.model.bits, ck.model.max_elements}).layouts;
      for (const auto& s : seed_layouts) requests.insert(requests.end(), count, s);
    } else {
      Layout empty;
      empty.bits = ck.model.bits;
      empty.canvas_w = width;
      empty.canvas_h = height;
      requests.assign(count, empty);
    }
    std::vector<Layout> results;
    std::size_t failures = 0;
    for (std::size_t i = 0; i < requests.size(); ++i) {
      SamplerConfig request = sc;
      request.seed = sc.seed + i;
      try {
        Layout l = generate(model, requests[i], request).layout;
        if (l.source_id.empty()) l.source_id = "sample-" + std::to_string(i);
        results.push_back(std::move(l));
      } catch (const MalformedSequence&) {
        ++failures;
      } catch (const TruncatedElement&) {
        ++failures;
      }
    }
    save_corpus(out, results, ck.categories);
    if (svg_dir) write_svgs(*svg_dir, results, ck.categories);
    *err << results.size() << " of " << requests.size() << " sequences decoded";
    if (failures > 0) *err << " (" << failures << " malformed)";
    *err << "\n";
  }
};

// ---------------------------------------------------------------- score

struct ScoreCommand {
  std::string checkpoint, data;
  std::optional<std::string> out;
  std::ostream* stdout_ = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("score", "Per-layout NLL under a trained model (CSV)");
    c->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
    c->add_option("--data", data, "Corpus JSONL")->required();
    c->add_option("--out", out, "Output CSV (default: stdout)");
    c->callback([this] { run(); });
  }

  void run() const {
    const auto [ck, model] = open_checkpoint(checkpoint);
    const auto layouts = load_corpus(data, ck.categories, {ck.model.bits, ck.model.max_elements}).layouts;
    const auto scores = score_corpus(model, layouts);
    std::string csv = "id,n,nll_total,nll_per_token\n";
    for (std::size_t i = 0; i < layouts.size(); ++i) {
      csv += layouts[i].source_id + "," + std::to_string(layouts[i].size()) + "," + fmt(scores[i].total, 10) + "," +
             fmt(scores[i].per_token, 10) + "\n";
    }
    if (out) {
      write_file_atomic(*out, csv);
    } else {
      *stdout_ << csv;
    }
  }
};

// ---------------------------------------------------------------- eval

struct EvalCommand {
  std::string data;
  std::optional<std::string> checkpoint, categories, out, flips, ngrams, analogy, neighbors, attention_dir;
  int bits = kDefaultBits;
  int grid = 256;
  std::size_t k = 5, top = 20, attention_limit = 10;
  std::ostream* stdout_ = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "Layout statistics and analysis battery");
    c->add_option("--data", data, "Corpus JSONL")->required();
    c->add_option("--checkpoint", checkpoint, "Model checkpoint (enables NLL, flips, analogies, attention)");
    c->add_option("--categories", categories, "Category vocabulary JSON when no checkpoint is given");
    c->add_option("--bits", bits, "Quantization precision when no checkpoint is given")->capture_default_str();
    c->add_option("--grid", grid, "Coverage rasterization grid")->capture_default_str();
    c->add_option("--out", out, "Per-layout metrics CSV");
    c->add_option("--flips", flips, "Flip verification CSV (needs --checkpoint)");
    c->add_option("--ngrams", ngrams, "Category bigram/trigram JSON");
    c->add_option("--top", top, "n-grams kept per order")->capture_default_str();
    c->add_option("--analogy", analogy, "Category analogy a,b,c (needs --checkpoint)");
    c->add_option("--neighbors", neighbors, "Query JSONL; prints chamfer nearest neighbors in the corpus");
    c->add_option("--k", k, "Neighbors or analogy answers to report")->capture_default_str();
    c->add_option("--attention-dir", attention_dir, "Export attention JSON per layout (needs --checkpoint)");
    c->add_option("--attention-limit", attention_limit, "Layouts to export attention for")->capture_default_str();
    c->callback([this] { run(); });
  }

  void require_model(const std::optional<LoadedModel>& m, const char* what) const {
    if (!m) throw InvalidConfig(std::string(what) + " needs --checkpoint");
  }

  void run() const {
    std::optional<LoadedModel> loaded;
    if (checkpoint) loaded = open_checkpoint(*checkpoint);
    const CategoryVocab cats = loaded ? loaded->checkpoint.categories : categories_from(categories);
    const CorpusOptions opts = loaded ? CorpusOptions{loaded->checkpoint.model.bits, loaded->checkpoint.model.max_elements}
                                      : CorpusOptions{bits, kDefaultMaxElements};
    const auto layouts = load_corpus(data, cats, opts).layouts;

    std::vector<NllResult> scores;
    if (loaded) scores = score_corpus(loaded->model, layouts);
    std::string csv = "id,n,coverage,overlap,nll_total,nll_per_token\n";
    double cov = 0, ovl = 0, nll_total = 0;
    std::size_t nll_count = 0;
    for (std::size_t i = 0; i < layouts.size(); ++i) {
      const auto s = layout_stats(layouts[i], grid);
      cov += s.coverage_pct;
      ovl += s.overlap_pct;
      csv += layouts[i].source_id + "," + std::to_string(s.element_count) + "," + fmt(s.coverage_pct, 8) + "," +
             fmt(s.overlap_pct, 8) + ",";
      if (loaded) {
        csv += fmt(scores[i].total, 10) + "," + fmt(scores[i].per_token, 10) + "\n";
        nll_total += scores[i].total;
        nll_count += scores[i].token_nll.size();
      } else {
        csv += ",\n";
      }
    }
    if (out) write_file_atomic(*out, csv);
    const double n = std::max<double>(1.0, static_cast<double>(layouts.size()));
    *stdout_ << "layouts " << layouts.size() << "\ncoverage_pct " << fmt(cov / n) << "\noverlap_pct "
             << fmt(ovl / n) << "\n";
    if (loaded && nll_count > 0) {
      *stdout_ << "nll_per_token " << fmt(nll_total / static_cast<double>(nll_count)) << "\n";
    }

    if (flips) {
      require_model(loaded, "--flips");
      const auto table = verify_flips(loaded->model, layouts);
      std::string f = "id,nll_original,nll_lr,nll_ud\n";
      for (std::size_t i = 0; i < table.size(); ++i) {
        f += layouts[i].source_id + "," + fmt(table[i].original, 10) + "," + fmt(table[i].left_right, 10) + "," +
             fmt(table[i].up_down, 10) + "\n";
      }
      write_file_atomic(*flips, f);
    }
    if (ngrams) {
      json j;
      for (std::size_t order : {2u, 3u}) {
        json list = json::array();
        auto stats = ngram_stats(layouts, order);
        if (stats.size() > top) stats.resize(top);
        for (const auto& g : stats) {
          json names = json::array();
          for (int c : g.categories) names.push_back(cats.name(c));
          list.push_back({{"categories", names}, {"count", g.count}});
        }
        j[order == 2 ? "bigrams" : "trigrams"] = std::move(list);
      }
      write_file_atomic(*ngrams, j.dump(2) + "\n");
    }
    if (analogy) {
      require_model(loaded, "--analogy");
      const auto names = split_list(*analogy);
      if (names.size() != 3) throw InvalidConfig("--analogy takes three category names a,b,c");
      const auto emb = category_embeddings(loaded->model);
      const auto ranked = analogy_query(emb, static_cast<std::size_t>(loaded->checkpoint.model.d), cats, names);
      *stdout_ << names[0] << ":" << names[1] << "::" << names[2] << ":?";
      for (int id : ranked) *stdout_ << " " << cats.name(id);
      *stdout_ << "\n";
    }
    if (neighbors) {
      const auto queries = load_corpus(*neighbors, cats, opts).layouts;
      *stdout_ << "query,rank,corpus_id,distance\n";
      for (const auto& q : queries) {
        const auto nn = nearest_neighbors(q, layouts, k);
        for (std::size_t r = 0; r < nn.size(); ++r) {
          *stdout_ << q.source_id << "," << r + 1 << "," << layouts[nn[r].first].source_id << ","
                   << fmt(nn[r].second, 10) << "\n";
        }
      }
    }
    if (attention_dir) {
      require_model(loaded, "--attention-dir");
      fs::create_directories(*attention_dir);
      for (std::size_t i = 0; i < std::min(attention_limit, layouts.size()); ++i) {
        export_attention(loaded->model, layouts[i], cats,
                         fs::path(*attention_dir) / ("attention-" + std::to_string(i) + ".json"));
      }
    }
  }

  std::vector<int> analogy_query(const std::vector<float>& emb, std::size_t dim, const CategoryVocab& cats,
                                 const std::vector<std::string>& names) const {
    return laygen::analogy(emb, dim, cats.id(names[0]), cats.id(names[1]), cats.id(names[2]), k);
  }
};

// ---------------------------------------------------------------- render

struct RenderCommand {
  std::string data, out_dir;
  std::optional<std::string> categories;
  std::optional<double> width, height;
  int bits = kDefaultBits;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("render", "Render a JSONL corpus to SVG files");
    c->add_option("--data", data, "Corpus JSONL")->required();
    c->add_option("--categories", categories, "Category vocabulary JSON");
    c->add_option("--out-dir", out_dir, "Output directory")->required();
    c->add_option("--width", width, "Override canvas width");
    c->add_option("--height", height, "Override canvas height");
    c->add_option("--bits", bits, "Quantization precision")->capture_default_str();
    c->callback([this] { run(); });
  }

  void run() const {
    const CategoryVocab cats = categories_from(categories);
    const auto layouts = load_corpus(data, cats, {bits, kDefaultMaxElements}).layouts;
    write_svgs(out_dir, layouts, cats, width, height);
  }
};

// ---------------------------------------------------------------- ablate

struct AblateCommand {
  std::optional<std::string> config, categories, val, out;
  std::string data;
  std::string bits_list = "8", orders = "raster", losses;
  double val_fraction = 0.1;
  ModelFlags model_flags;
  TrainFlags train_flags;
  std::ostream* stdout_ = nullptr;
  std::ostream* err = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("ablate", "Train over a configuration grid and tabulate validation NLL");
    c->add_option("--config", config, "JSON run configuration (sections \"model\", \"train\")");
    c->add_option("--data", data, "Corpus JSONL")->required();
    c->add_option("--val", val, "Validation corpus JSONL (default: holdout of --data)");
    c->add_option("--val-fraction", val_fraction, "Holdout share when --val is absent")->capture_default_str();
    c->add_option("--categories", categories, "Category vocabulary JSON");
    c->add_option("--bits", bits_list, "Comma-separated precisions")->capture_default_str();
    c->add_option("--orders", orders, "Comma-separated element orders")->capture_default_str();
    c->add_option("--losses", losses, "Comma-separated loss modes (default: from config)");
    c->add_option("--out", out, "Output CSV");
    model_flags.add(c, false);
    train_flags.add(c);
    c->callback([this] { run(); });
  }

  void run() const {
    const json cfg = load_config(config);
    auto base_model = section<ModelConfig>(cfg, "model");
    auto base_train = section<TrainConfig>(cfg, "train");
    model_flags.apply_to(base_model);
    train_flags.apply_to(base_train);
    const CategoryVocab cats = categories_from(categories);
    base_model.num_categories = cats.size();

    std::vector<std::string> loss_list = split_list(losses);
    if (loss_list.empty()) loss_list.push_back(to_string(base_train.loss_mode));
    std::string csv = "bits,order,loss,vocab,uniform_nll,val_nll,best_epoch\n";
    for (const auto& b : split_list(bits_list)) {
      for (const auto& order : split_list(orders)) {
        for (const auto& loss : loss_list) {
          ModelConfig mc = base_model;
          mc.bits = std::stoi(b);
          TrainConfig tc = base_train;
          tc.order = parse_element_order(order);
          tc.loss_mode = parse_loss_mode(loss);
          mc.validate();
          tc.validate();
          const CorpusOptions opts{mc.bits, mc.max_elements};
          std::vector<Layout> train_set, val_set;
          if (val) {
            train_set = load_corpus(data, cats, opts).layouts;
            val_set = load_corpus(*val, cats, opts).layouts;
          } else {
            std::tie(train_set, val_set) =
                split_holdout(load_corpus(data, cats, opts).layouts, val_fraction, tc.seed);
          }
          Transformer model(mc, tc.seed);
          const auto result = fit(model, cats, train_set, val_set, tc);
          double best = std::numeric_limits<double>::infinity();
          for (const auto& e : result.log) best = std::min(best, e.val_nll);
          const std::string row = b + "," + order + "," + loss + "," + std::to_string(mc.vocab_size()) + "," +
                                  fmt(std::log(mc.vocab_size()), 6) + "," + fmt(best, 6) + "," +
                                  std::to_string(result.best.epoch);
          *err << row << "\n";
          csv += row + "\n";
        }
      }
    }
    if (out) write_file_atomic(*out, csv);
    *stdout_ << csv;
  }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"laygen: autoregressive layout generation", "laygen"};
  app.require_subcommand(1);
  app.fallthrough(false);

  SynthCommand synth;
  TrainCommand train;
  SampleCommand sample, complete;
  ScoreCommand score;
  EvalCommand eval;
  RenderCommand render;
  AblateCommand ablate;
  train.err = sample.err = complete.err = ablate.err = &err;
  score.stdout_ = eval.stdout_ = ablate.stdout_ = &out;
  synth.add(app);
  train.add(app);
  sample.add(app, false);
  complete.add(app, true);
  score.add(app);
  eval.add(app);
  render.add(app);
  ablate.add(app);

  std::vector<std::string> argv_storage{"laygen"};
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_storage) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitOk;
}

}  // namespace laygen
