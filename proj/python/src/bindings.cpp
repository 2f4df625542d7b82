#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <sstream>

#include "laygen/corpus.hpp"
#include "laygen/errors.hpp"
#include "laygen/eval.hpp"
#include "laygen/layout.hpp"
#include "laygen/model.hpp"
#include "laygen/render.hpp"
#include "laygen/sample.hpp"
#include "laygen/synth.hpp"
#include "laygen/train.hpp"

namespace py = pybind11;
using namespace laygen;

namespace {

template <typename E>
void leaf_error(py::module_& m, const char* name, py::handle base) {
  py::register_exception<E>(m, name, base);
}

std::string element_repr(const Element& e) {
  std::ostringstream s;
  s << "Element(category=" << e.category << ", x=" << e.x_bin << ", y=" << e.y_bin << ", h=" << e.h_bin
    << ", w=" << e.w_bin << ")";
  return s.str();
}

// Logits of one unpadded token prefix, shape [T, V].
py::array_t<float> logits_of(const Transformer& model, const std::vector<int>& tokens) {
  const auto r = model.forward(tokens, 1, tokens.size(), false, 0);
  const auto v = static_cast<py::ssize_t>(model.config().vocab_size());
  py::array_t<float> out({static_cast<py::ssize_t>(tokens.size()), v});
  const auto src = r.logits.data();
  std::copy(src.begin(), src.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_laygen, m) {
  m.doc() = "Autoregressive layout generation over quantized layout tokens";

  // Later registrations take precedence, so leaves come after their bases.
  auto error = py::register_exception<Error>(m, "LaygenError");
  auto data_error = py::register_exception<DataError>(m, "DataError", error);
  auto usage_error = py::register_exception<UsageError>(m, "UsageError", error);
  py::register_exception<NumericalError>(m, "NumericalError", error);
  leaf_error<InvalidCoordinate>(m, "InvalidCoordinate", data_error);
  leaf_error<InvalidBin>(m, "InvalidBin", data_error);
  leaf_error<LayoutTooLong>(m, "LayoutTooLong", data_error);
  leaf_error<TruncatedElement>(m, "TruncatedElement", data_error);
  leaf_error<UnknownCategory>(m, "UnknownCategory", data_error);
  leaf_error<EmptyBatch>(m, "EmptyBatch", data_error);
  leaf_error<EmptyLayout>(m, "EmptyLayout", data_error);
  leaf_error<IncompatibleCheckpoint>(m, "IncompatibleCheckpoint", data_error);
  leaf_error<ChecksumError>(m, "ChecksumError", data_error);
  leaf_error<VocabError>(m, "VocabError", data_error);
  leaf_error<SequenceTooLong>(m, "SequenceTooLong", data_error);
  leaf_error<DegenerateDistribution>(m, "DegenerateDistribution", data_error);
  leaf_error<MalformedSequence>(m, "MalformedSequence", data_error);
  leaf_error<ParseError>(m, "ParseError", data_error);
  leaf_error<ShapeError>(m, "ShapeError", usage_error);
  leaf_error<InvalidVocab>(m, "InvalidVocab", usage_error);
  leaf_error<InvalidP>(m, "InvalidP", usage_error);
  leaf_error<InvalidConfig>(m, "InvalidConfig", usage_error);

  // Layout core.
  py::class_<Element>(m, "Element")
      .def(py::init([](int category, int x, int y, int h, int w, std::vector<double> attrs) {
             return Element{category, x, y, h, w, std::move(attrs)};
           }),
           py::arg("category") = 0, py::arg("x") = 0, py::arg("y") = 0, py::arg("h") = 0, py::arg("w") = 0,
           py::arg("attrs") = std::vector<double>{})
      .def_readwrite("category", &Element::category)
      .def_readwrite("x", &Element::x_bin)
      .def_readwrite("y", &Element::y_bin)
      .def_readwrite("h", &Element::h_bin)
      .def_readwrite("w", &Element::w_bin)
      .def_readwrite("attrs", &Element::attrs)
      .def("__eq__", [](const Element& a, const Element& b) { return a == b; })
      .def("__repr__", &element_repr);

  py::class_<Box>(m, "Box")
      .def(py::init([](double cx, double cy, double h, double w) { return Box{cx, cy, h, w}; }), py::arg("cx"),
           py::arg("cy"), py::arg("h"), py::arg("w"))
      .def_readwrite("cx", &Box::cx)
      .def_readwrite("cy", &Box::cy)
      .def_readwrite("h", &Box::h)
      .def_readwrite("w", &Box::w)
      .def("__repr__", [](const Box& b) {
        std::ostringstream s;
        s << "Box(cx=" << b.cx << ", cy=" << b.cy << ", h=" << b.h << ", w=" << b.w << ")";
        return s.str();
      });

  py::class_<Layout>(m, "Layout")
      .def(py::init([](std::vector<Element> elements, int bits, double canvas_w, double canvas_h, std::string id) {
             Layout l;
             l.elements = std::move(elements);
             l.bits = bits;
             l.canvas_w = canvas_w;
             l.canvas_h = canvas_h;
             l.source_id = std::move(id);
             return l;
           }),
           py::arg("elements") = std::vector<Element>{}, py::arg("bits") = kDefaultBits, py::arg("canvas_w") = 1.0,
           py::arg("canvas_h") = 1.0, py::arg("source_id") = "")
      .def_readwrite("elements", &Layout::elements)
      .def_readwrite("bits", &Layout::bits)
      .def_readwrite("canvas_w", &Layout::canvas_w)
      .def_readwrite("canvas_h", &Layout::canvas_h)
      .def_readwrite("source_id", &Layout::source_id)
      .def("__len__", &Layout::size)
      .def("__eq__", [](const Layout& a, const Layout& b) { return a == b; })
      .def("__repr__", [](const Layout& l) {
        return "Layout(" + std::to_string(l.size()) + " elements, bits=" + std::to_string(l.bits) + ")";
      });

  py::class_<Vocab>(m, "Vocab")
      .def(py::init<int, int, std::size_t>(), py::arg("bits"), py::arg("num_categories"),
           py::arg("max_elements") = kDefaultMaxElements)
      .def_readonly("bits", &Vocab::bits)
      .def_readonly("num_categories", &Vocab::num_categories)
      .def_readonly("max_elements", &Vocab::max_elements)
      .def_property_readonly("size", &Vocab::size)
      .def_property_readonly("bins", &Vocab::bins)
      .def_property_readonly("coord_offset", &Vocab::coord_offset)
      .def_property_readonly("max_seq_len", &Vocab::max_seq_len)
      .def_readonly_static("PAD", &Vocab::kPad)
      .def_readonly_static("BOS", &Vocab::kBos)
      .def_readonly_static("EOS", &Vocab::kEos);

  py::class_<CategoryVocab>(m, "CategoryVocab")
      .def(py::init<std::vector<std::string>>(), py::arg("names"))
      .def_property_readonly("names", &CategoryVocab::names)
      .def("id", &CategoryVocab::id)
      .def("name", &CategoryVocab::name)
      .def("__len__", &CategoryVocab::size);

  m.def("quantize", &quantize, py::arg("value"), py::arg("bits"));
  m.def("dequantize", &dequantize, py::arg("bin"), py::arg("bits"));
  m.def("element_box", &element_box, py::arg("element"), py::arg("bits"));
  m.def("make_element", &make_element, py::arg("category"), py::arg("box"), py::arg("bits"));
  m.def("raster_sort", &raster_sort, py::arg("layout"));
  m.def("requantize", &requantize, py::arg("layout"), py::arg("bits"));
  m.def("encode_sequence", &encode_sequence, py::arg("layout"), py::arg("vocab"));
  m.def(
      "decode_sequence", [](const std::vector<int>& tokens, const Vocab& v) { return decode_sequence(tokens, v); },
      py::arg("tokens"), py::arg("vocab"));
  m.def(
      "satisfies_grammar", [](const std::vector<int>& tokens, const Vocab& v) { return satisfies_grammar(tokens, v); },
      py::arg("tokens"), py::arg("vocab"));

  // Synthetic corpora.
  py::enum_<SynthKind>(m, "SynthKind")
      .value("document", SynthKind::Document)
      .value("grid", SynthKind::Grid)
      .value("asymmetric", SynthKind::Asymmetric);
  m.def(
      "synth_generate",
      [](std::size_t count, SynthKind kind, std::uint64_t seed, int bits, std::size_t min_elements,
         std::size_t max_elements, double jitter) {
        SynthGrammarConfig c;
        c.kind = kind;
        c.seed = seed;
        c.bits = bits;
        c.min_elements = min_elements;
        c.max_elements = max_elements;
        c.jitter = jitter;
        return synth_generate(c, count);
      },
      py::arg("count"), py::arg("kind") = SynthKind::Document, py::arg("seed") = 0, py::arg("bits") = kDefaultBits,
      py::arg("min_elements") = 3, py::arg("max_elements") = 12, py::arg("jitter") = 0.5);
  m.attr("SYNTH_CATEGORIES") = SynthGrammarConfig{}.categories;

  // Model.
  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init<>())
      .def_readwrite("d", &ModelConfig::d)
      .def_readwrite("layers", &ModelConfig::layers)
      .def_readwrite("heads", &ModelConfig::heads)
      .def_readwrite("d_ff", &ModelConfig::d_ff)
      .def_readwrite("bits", &ModelConfig::bits)
      .def_readwrite("num_categories", &ModelConfig::num_categories)
      .def_readwrite("max_elements", &ModelConfig::max_elements)
      .def_readwrite("dropout", &ModelConfig::dropout)
      .def_readwrite("tie_output", &ModelConfig::tie_output)
      .def("vocab", &ModelConfig::vocab)
      .def("validate", &ModelConfig::validate);

  py::class_<Transformer>(m, "Transformer")
      .def(py::init<ModelConfig, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def_property_readonly("config", &Transformer::config)
      .def("parameter_count", &Transformer::parameter_count)
      .def("logits", &logits_of, py::arg("tokens"))
      .def("zero_head", [](Transformer& model) {
        auto& p = model.params();
        std::fill(p.head_weight.data().begin(), p.head_weight.data().end(), 0.0f);
        std::fill(p.head_bias.data().begin(), p.head_bias.data().end(), 0.0f);
      });

  // Training and checkpoints.
  py::enum_<LossMode>(m, "LossMode").value("label_smoothing", LossMode::LabelSmoothing).value("nll", LossMode::Nll);

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("epsilon", &TrainConfig::epsilon)
      .def_readwrite("token_budget", &TrainConfig::token_budget)
      .def_readwrite("patience", &TrainConfig::patience)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("loss_mode", &TrainConfig::loss_mode)
      .def_readwrite("clip_norm", &TrainConfig::clip_norm)
      .def_readwrite("max_steps", &TrainConfig::max_steps);

  py::class_<EpochLog>(m, "EpochLog")
      .def_readonly("epoch", &EpochLog::epoch)
      .def_readonly("train_nll", &EpochLog::train_nll)
      .def_readonly("val_nll", &EpochLog::val_nll)
      .def_readonly("seconds", &EpochLog::seconds);

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_static("from_model", &Checkpoint::from_model, py::arg("model"), py::arg("categories"))
      .def("to_model", &Checkpoint::to_model)
      .def_readonly("model_config", &Checkpoint::model)
      .def_readonly("categories", &Checkpoint::categories)
      .def_readonly("log", &Checkpoint::log)
      .def_readonly("epoch", &Checkpoint::epoch);
  m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("checkpoint"));
  m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

  // Trains `model` in place and returns the best-validation checkpoint and the epoch log.
  m.def(
      "fit",
      [](Transformer& model, const CategoryVocab& categories, const std::vector<Layout>& train_set,
         const std::vector<Layout>& val_set, const TrainConfig& config) {
        FitResult r;
        {
          py::gil_scoped_release release;
          r = fit(model, categories, train_set, val_set, config);
        }
        return py::make_tuple(std::move(r.best), std::move(r.log));
      },
      py::arg("model"), py::arg("categories"), py::arg("train_set"), py::arg("val_set"), py::arg("config"));
  m.def("per_token_nll", &per_token_nll, py::arg("model"), py::arg("layouts"), py::arg("token_budget") = 8192,
        py::call_guard<py::gil_scoped_release>());

  // Sampling and scoring.
  py::enum_<Strategy>(m, "Strategy")
      .value("nucleus", Strategy::Nucleus)
      .value("greedy", Strategy::Greedy)
      .value("temperature", Strategy::Temperature);

  py::class_<SamplerConfig>(m, "SamplerConfig")
      .def(py::init<>())
      .def_readwrite("strategy", &SamplerConfig::strategy)
      .def_readwrite("top_p", &SamplerConfig::top_p)
      .def_readwrite("temperature", &SamplerConfig::temperature)
      .def_readwrite("max_elements", &SamplerConfig::max_elements)
      .def_readwrite("grammar_mask", &SamplerConfig::grammar_mask)
      .def_readwrite("seed", &SamplerConfig::seed);

  py::class_<GenerateResult>(m, "GenerateResult")
      .def_readonly("layout", &GenerateResult::layout)
      .def_readonly("tokens", &GenerateResult::tokens);

  py::class_<NllResult>(m, "NllResult")
      .def_readonly("total", &NllResult::total)
      .def_readonly("per_token", &NllResult::per_token)
      .def_readonly("token_nll", &NllResult::token_nll);

  m.def(
      "nucleus_filter", [](const std::vector<double>& probs, double p) { return nucleus_filter(probs, p); },
      py::arg("probs"), py::arg("p"));
  m.def("generate", &generate, py::arg("model"), py::arg("seed_layout"), py::arg("sampler"),
        py::call_guard<py::gil_scoped_release>());
  m.def("generate_many", &generate_many, py::arg("model"), py::arg("seed_layouts"), py::arg("sampler"),
        py::call_guard<py::gil_scoped_release>());
  m.def("score_nll", &score_nll, py::arg("model"), py::arg("layout"));

  // Evaluation.
  py::class_<LayoutStats>(m, "LayoutStats")
      .def_readonly("coverage_pct", &LayoutStats::coverage_pct)
      .def_readonly("overlap_pct", &LayoutStats::overlap_pct)
      .def_readonly("element_count", &LayoutStats::element_count);

  py::class_<FlipScores>(m, "FlipScores")
      .def_readonly("original", &FlipScores::original)
      .def_readonly("left_right", &FlipScores::left_right)
      .def_readonly("up_down", &FlipScores::up_down);

  m.def("iou", &iou, py::arg("a"), py::arg("b"));
  m.def(
      "layout_stats", [](const Layout& l, int grid) { return layout_stats(l, grid); }, py::arg("layout"),
      py::arg("grid") = 256);
  m.def("layout_boxes", &layout_boxes, py::arg("layout"));
  m.def("flip_lr", &flip_lr, py::arg("layout"));
  m.def("flip_ud", &flip_ud, py::arg("layout"));
  m.def("verify_flips", &verify_flips, py::arg("model"), py::arg("layouts"));
  m.def(
      "chamfer_distance", [](const Layout& a, const Layout& b) { return chamfer_distance(a, b); }, py::arg("a"),
      py::arg("b"));
  m.def("nearest_neighbors", &nearest_neighbors, py::arg("query"), py::arg("corpus"), py::arg("k"));
  m.def(
      "ngram_stats",
      [](const std::vector<Layout>& layouts, std::size_t n) {
        std::vector<std::pair<std::vector<int>, std::size_t>> out;
        for (auto& g : ngram_stats(layouts, n)) out.emplace_back(std::move(g.categories), g.count);
        return out;
      },
      py::arg("layouts"), py::arg("n"));

  // Corpus files and rendering.
  m.def(
      "parse_corpus",
      [](const std::string& text, const CategoryVocab& categories, int bits, std::size_t max_elements) {
        auto c = parse_corpus(text, categories, {bits, max_elements});
        return py::make_tuple(std::move(c.layouts), c.dropped);
      },
      py::arg("text"), py::arg("categories"), py::arg("bits") = kDefaultBits,
      py::arg("max_elements") = kDefaultMaxElements);
  m.def(
      "load_corpus",
      [](const std::filesystem::path& path, const CategoryVocab& categories, int bits, std::size_t max_elements) {
        auto c = load_corpus(path, categories, {bits, max_elements});
        return py::make_tuple(std::move(c.layouts), c.dropped);
      },
      py::arg("path"), py::arg("categories"), py::arg("bits") = kDefaultBits,
      py::arg("max_elements") = kDefaultMaxElements);
  m.def("format_corpus", &format_corpus, py::arg("layouts"), py::arg("categories"));
  m.def("save_corpus", &save_corpus, py::arg("path"), py::arg("layouts"), py::arg("categories"));
  m.def(
      "render_svg", [](const Layout& l, const CategoryVocab& c) { return render_svg(l, c); }, py::arg("layout"),
      py::arg("categories"));
}
