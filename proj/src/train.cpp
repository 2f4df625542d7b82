#include "laygen/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "laygen/errors.hpp"
#include "laygen/rng.hpp"

namespace laygen {

void TrainConfig::validate() const {
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw InvalidConfig("label smoothing epsilon must be in [0, 1)");
  if (!(lambda >= 0.0)) throw InvalidConfig("lambda must be >= 0");
  if (!(lr > 0.0)) throw InvalidConfig("learning rate must be positive");
  if (epochs < 1) throw InvalidConfig("epochs must be >= 1");
  if (patience < 1) throw InvalidConfig("patience must be >= 1");
  if (token_budget < 2) throw InvalidConfig("token budget too small");
  if (loss_mode == LossMode::LabelSmoothing && kl_direction == KlDirection::PredictionToTarget && epsilon <= 0.0) {
    throw InvalidConfig("KL(prediction || target) is unbounded for epsilon = 0");
  }
}

std::vector<double> smoothed_target(int true_class, int vocab_size, double epsilon) {
  if (vocab_size < 2) throw InvalidVocab("vocabulary size must be >= 2, got " + std::to_string(vocab_size));
  if (true_class < 0 || true_class >= vocab_size) {
    throw InvalidVocab("class " + std::to_string(true_class) + " outside vocabulary of size " +
                       std::to_string(vocab_size));
  }
  std::vector<double> t(static_cast<std::size_t>(vocab_size), epsilon / (vocab_size - 1));
  t[static_cast<std::size_t>(true_class)] = 1.0 - epsilon;
  return t;
}

template <typename Real>
BasicTensor<Real> sequence_loss(const BasicTensor<Real>& logits, std::span<const int> targets,
                                std::span<const std::uint8_t> loss_mask, const LossOptions& options,
                                const BasicTensor<Real>* continuous_pred, const BasicTensor<Real>* continuous_target) {
  using T = BasicTensor<Real>;
  if (logits.rank() < 1) throw ShapeError("sequence_loss: logits must have a class dimension");
  const std::size_t vocab = logits.shape().back();
  const std::size_t rows = logits.numel() / vocab;
  if (targets.size() != rows || loss_mask.size() != rows) {
    throw ShapeError("sequence_loss: " + std::to_string(rows) + " logit rows but " +
                     std::to_string(targets.size()) + " targets and " + std::to_string(loss_mask.size()) +
                     " mask entries");
  }
  const std::size_t count =
      static_cast<std::size_t>(std::count_if(loss_mask.begin(), loss_mask.end(), [](auto m) { return m != 0; }));
  if (count == 0) throw EmptyBatch("every position is masked");
  for (std::size_t r = 0; r < rows; ++r) {
    if (loss_mask[r] && (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab)) {
      throw VocabError("target " + std::to_string(targets[r]) + " outside vocabulary of size " +
                       std::to_string(vocab));
    }
  }

  const double inv_count = 1.0 / static_cast<double>(count);
  T flat = ops::reshape(logits, {rows, vocab});
  T logp = ops::log_softmax(flat);
  T loss;
  const bool smoothing = options.mode == LossMode::LabelSmoothing && options.epsilon > 0.0;
  const double eps = options.mode == LossMode::LabelSmoothing ? options.epsilon : 0.0;
  const double off = vocab > 1 ? eps / static_cast<double>(vocab - 1) : 0.0;
  const double on = 1.0 - eps;

  if (options.mode == LossMode::LabelSmoothing && options.direction == KlDirection::PredictionToTarget) {
    if (!smoothing) throw InvalidConfig("KL(prediction || target) is unbounded for epsilon = 0");
    // sum_v p_v (log p_v - log t_v), weighted by mask / count.
    std::vector<Real> log_target(rows * vocab, static_cast<Real>(std::log(off)));
    std::vector<Real> weight(rows * vocab, Real(0));
    for (std::size_t r = 0; r < rows; ++r) {
      if (!loss_mask[r]) continue;
      log_target[r * vocab + static_cast<std::size_t>(targets[r])] = static_cast<Real>(std::log(on));
      std::fill_n(weight.begin() + static_cast<long>(r * vocab), vocab, static_cast<Real>(inv_count));
    }
    T probs = ops::softmax(flat);
    T diff = ops::sub(logp, T::from({rows, vocab}, std::move(log_target)));
    loss = ops::sum(ops::mul(ops::mul(probs, diff), T::from({rows, vocab}, std::move(weight))));
  } else {
    // KL(t || p) = sum_v t_v log t_v - sum_v t_v log p_v. The first term is a
    // constant (zero for a one-hot target).
    std::vector<Real> weight(rows * vocab, Real(0));
    double entropy_term = 0.0;
    const double row_neg_entropy =
        (on > 0 ? on * std::log(on) : 0.0) + (off > 0 ? static_cast<double>(vocab - 1) * off * std::log(off) : 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      if (!loss_mask[r]) continue;
      Real* w = weight.data() + r * vocab;
      if (smoothing) std::fill_n(w, vocab, static_cast<Real>(off * inv_count));
      w[targets[r]] = static_cast<Real>(on * inv_count);
      entropy_term += row_neg_entropy;
    }
    loss = ops::scale(ops::sum(ops::mul(logp, T::from({rows, vocab}, std::move(weight)))), -1.0);
    if (smoothing) loss = ops::add(loss, T::scalar(static_cast<Real>(entropy_term * inv_count)));
  }

  if (continuous_pred != nullptr && continuous_target != nullptr && continuous_pred->numel() > 0 &&
      options.lambda > 0.0) {
    loss = ops::add(loss, ops::scale(ops::l1_loss(*continuous_pred, *continuous_target), options.lambda));
  }
  return loss;
}

template BasicTensor<float> sequence_loss(const BasicTensor<float>&, std::span<const int>,
                                          std::span<const std::uint8_t>, const LossOptions&,
                                          const BasicTensor<float>*, const BasicTensor<float>*);
template BasicTensor<double> sequence_loss(const BasicTensor<double>&, std::span<const int>,
                                           std::span<const std::uint8_t>, const LossOptions&,
                                           const BasicTensor<double>*, const BasicTensor<double>*);

std::size_t Batch::target_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::size_t Batch::pad_count() const {
  return static_cast<std::size_t>(std::count(inputs.begin(), inputs.end(), Vocab::kPad));
}

Layout order_elements(const Layout& layout, ElementOrder order, std::uint64_t seed) {
  switch (order) {
    case ElementOrder::Raster:
      return raster_sort(layout);
    case ElementOrder::Random:
      return permute_seed(layout, seed);
    case ElementOrder::PermutedPrefix: {
      Layout sorted = raster_sort(layout);
      const std::size_t n = sorted.size();
      Rng rng(seed);
      const std::size_t visible = static_cast<std::size_t>(rng.below(n + 1));
      std::vector<std::size_t> idx(n);
      std::iota(idx.begin(), idx.end(), std::size_t{0});
      rng.shuffle(idx.begin(), idx.end());
      std::vector<std::size_t> rest(idx.begin() + static_cast<long>(visible), idx.end());
      std::sort(rest.begin(), rest.end());
      Layout out = sorted;
      out.elements.clear();
      for (std::size_t k = 0; k < visible; ++k) out.elements.push_back(sorted.elements[idx[k]]);
      for (std::size_t k : rest) out.elements.push_back(sorted.elements[k]);
      return out;
    }
  }
  return layout;
}

std::vector<Batch> make_batches(const std::vector<Layout>& dataset, const Vocab& vocab, std::size_t token_budget,
                                std::uint64_t seed, ElementOrder order, bool shuffle, int continuous_attrs) {
  std::vector<std::size_t> by_length(dataset.size());
  std::iota(by_length.begin(), by_length.end(), std::size_t{0});
  std::stable_sort(by_length.begin(), by_length.end(),
                   [&](std::size_t a, std::size_t b) { return dataset[a].size() < dataset[b].size(); });

  std::vector<std::vector<std::size_t>> runs;
  std::vector<std::size_t> current;
  for (std::size_t idx : by_length) {
    const std::size_t seq_len = 5 * dataset[idx].size() + 2;
    if (seq_len > token_budget) {
      throw LayoutTooLong("sequence of length " + std::to_string(seq_len) + " exceeds token budget " +
                          std::to_string(token_budget));
    }
    // Sorted ascending, so the newest sequence sets the padded length.
    if (!current.empty() && (current.size() + 1) * seq_len > token_budget) {
      runs.push_back(std::move(current));
      current.clear();
    }
    current.push_back(idx);
  }
  if (!current.empty()) runs.push_back(std::move(current));

  const auto attrs = static_cast<std::size_t>(continuous_attrs);
  std::vector<Batch> batches;
  batches.reserve(runs.size());
  for (const auto& run : runs) {
    std::vector<TokenSequence> seqs;
    std::vector<Layout> ordered;
    std::size_t padded = 0;
    for (std::size_t idx : run) {
      ordered.push_back(order_elements(dataset[idx], order, splitmix64(seed ^ (idx * 0x9E3779B97F4A7C15ULL))));
      seqs.push_back(encode_sequence(ordered.back(), vocab));
      padded = std::max(padded, seqs.back().size());
    }
    Batch b;
    b.indices = run;
    b.rows = run.size();
    b.len = padded - 1;
    b.inputs.assign(b.rows * b.len, Vocab::kPad);
    b.targets.assign(b.rows * b.len, Vocab::kPad);
    b.mask.assign(b.rows * b.len, 0);
    for (std::size_t r = 0; r < b.rows; ++r) {
      const auto& s = seqs[r];
      for (std::size_t t = 0; t + 1 < s.size(); ++t) {
        b.inputs[r * b.len + t] = s[t];
        b.targets[r * b.len + t] = s[t + 1];
        b.mask[r * b.len + t] = 1;
      }
      if (attrs > 0) {
        const auto& elems = ordered[r].elements;
        for (std::size_t k = 0; k < elems.size(); ++k) {
          if (elems[k].attrs.size() != attrs) {
            throw InvalidConfig("element has " + std::to_string(elems[k].attrs.size()) +
                                " continuous attributes, model expects " + std::to_string(attrs));
          }
          b.attr_positions.push_back(static_cast<int>(r * b.len + 1 + 5 * k));
          b.attr_targets.insert(b.attr_targets.end(), elems[k].attrs.begin(), elems[k].attrs.end());
        }
      }
    }
    batches.push_back(std::move(b));
  }
  if (shuffle) Rng(seed).shuffle(batches.begin(), batches.end());
  return batches;
}

namespace {

// Summed NLL of masked targets, computed in double from the logits.
template <typename Real>
double masked_nll(std::span<const Real> logits, std::size_t vocab, std::span<const int> targets,
                  std::span<const std::uint8_t> mask) {
  double total = 0.0;
  for (std::size_t r = 0; r < targets.size(); ++r) {
    if (!mask[r]) continue;
    const Real* row = logits.data() + r * vocab;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < vocab; ++v) mx = std::max(mx, static_cast<double>(row[v]));
    double s = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) s += std::exp(static_cast<double>(row[v]) - mx);
    total += mx + std::log(s) - static_cast<double>(row[targets[r]]);
  }
  return total;
}

std::uint64_t step_seed(std::uint64_t base, std::uint64_t step) {
  return splitmix64(base ^ (0xA0761D6478BD642FULL * (step + 1)));
}

Tensor attr_target_tensor(const Batch& batch, int attrs) {
  std::vector<float> data(batch.attr_targets.begin(), batch.attr_targets.end());
  return Tensor::from({batch.attr_positions.size(), static_cast<std::size_t>(attrs)}, std::move(data));
}

}  // namespace

std::pair<double, std::size_t> evaluate_nll(const Transformer& model, const std::vector<Batch>& batches) {
  double total = 0.0;
  std::size_t count = 0;
  const auto vocab = static_cast<std::size_t>(model.config().vocab_size());
  for (const auto& b : batches) {
    auto result = model.forward(b.inputs, b.rows, b.len, false, 0);
    total += masked_nll<float>(result.logits.data(), vocab, b.targets, b.mask);
    count += b.target_count();
  }
  return {total, count};
}

double per_token_nll(const Transformer& model, const std::vector<Layout>& layouts, std::size_t token_budget) {
  const auto batches = make_batches(layouts, model.config().vocab(), token_budget, 0, ElementOrder::Raster, false);
  const auto [total, count] = evaluate_nll(model, batches);
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

Trainer::Trainer(Transformer& model, TrainConfig config) : model_(&model), config_(config) {
  config_.validate();
  state_.config = AdamConfig{config_.lr, config_.beta1, config_.beta2, 1e-8};
}

Trainer::Trainer(Transformer& model, TrainConfig config, AdamState state)
    : model_(&model), config_(config), state_(std::move(state)) {
  config_.validate();
  state_.config.lr = config_.lr;
}

StepResult Trainer::step(const Batch& batch) {
  model_->zero_grad();
  model_->set_requires_grad(true);
  StepResult out;
  {
    Tape tape;
    Tape::Scope scope(tape);
    auto fwd = model_->forward(batch.inputs, batch.rows, batch.len, true, step_seed(config_.seed, state_.step));
    Tensor loss;
    const int attrs = model_->config().continuous_attrs;
    if (attrs > 0 && !batch.attr_positions.empty()) {
      Tensor pred = model_->attribute_head(fwd.hidden, batch.attr_positions);
      Tensor target = attr_target_tensor(batch, attrs);
      loss = sequence_loss(fwd.logits, batch.targets, batch.mask, config_.loss_options(), &pred, &target);
    } else {
      loss = sequence_loss(fwd.logits, batch.targets, batch.mask, config_.loss_options());
    }
    out.loss = loss.item();
    if (!std::isfinite(out.loss)) {
      throw NumericalError("non-finite loss at step " + std::to_string(state_.step + 1));
    }
    out.nll_total = masked_nll<float>(fwd.logits.data(), static_cast<std::size_t>(model_->config().vocab_size()),
                                      batch.targets, batch.mask);
    out.targets = batch.target_count();
    backward(loss, tape);
  }
  auto params = model_->parameters();
  if (config_.clip_norm > 0.0) clip_grad_norm<float>(params, config_.clip_norm);
  adam_step<float>(params, state_);
  return out;
}

double Trainer::loss(const Batch& batch) const {
  auto fwd = model_->forward(batch.inputs, batch.rows, batch.len, true, step_seed(config_.seed, state_.step));
  const int attrs = model_->config().continuous_attrs;
  if (attrs > 0 && !batch.attr_positions.empty()) {
    Tensor pred = model_->attribute_head(fwd.hidden, batch.attr_positions);
    Tensor target = attr_target_tensor(batch, attrs);
    return sequence_loss(fwd.logits, batch.targets, batch.mask, config_.loss_options(), &pred, &target).item();
  }
  return sequence_loss(fwd.logits, batch.targets, batch.mask, config_.loss_options()).item();
}

FitResult fit(Transformer& model, const CategoryVocab& categories, const std::vector<Layout>& train_set,
              const std::vector<Layout>& val_set, const TrainConfig& config, const FitCallbacks& callbacks,
              const std::optional<FitResume>& resume) {
  config.validate();
  if (train_set.empty() || val_set.empty()) throw EmptyBatch("fit needs non-empty training and validation sets");
  const Vocab vocab = model.config().vocab();
  const int attrs = model.config().continuous_attrs;
  // Validation order is fixed across epochs so epochs are comparable.
  const ElementOrder val_order = config.order == ElementOrder::Random ? ElementOrder::Random : ElementOrder::Raster;
  const auto val_batches = make_batches(val_set, vocab, config.token_budget, config.seed, val_order, false);

  Trainer trainer = resume ? Trainer(model, config, resume->optimizer) : Trainer(model, config);
  const int first_epoch = resume ? resume->epoch + 1 : 1;
  FitResult result;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  bool out_of_steps = false;
  for (int epoch = first_epoch; epoch < first_epoch + config.epochs && !out_of_steps; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto batches = make_batches(train_set, vocab, config.token_budget,
                                      splitmix64(config.seed + static_cast<std::uint64_t>(epoch)), config.order,
                                      true, attrs);
    double train_total = 0.0;
    std::size_t train_count = 0;
    for (const auto& b : batches) {
      const auto r = trainer.step(b);
      train_total += r.nll_total;
      train_count += r.targets;
      if (config.max_steps > 0 && trainer.steps() >= config.max_steps) {
        out_of_steps = true;
        break;
      }
    }
    const auto [val_total, val_count] = evaluate_nll(model, val_batches);
    EpochLog entry;
    entry.epoch = epoch;
    entry.train_nll = train_count ? train_total / static_cast<double>(train_count) : 0.0;
    entry.val_nll = val_count ? val_total / static_cast<double>(val_count) : 0.0;
    entry.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(entry.val_nll)) {
      throw NumericalError("non-finite validation NLL after epoch " + std::to_string(epoch) + " (step " +
                           std::to_string(trainer.steps()) + ")");
    }
    result.log.push_back(entry);
    if (callbacks.on_epoch) callbacks.on_epoch(entry);

    if (entry.val_nll < best_val) {
      best_val = entry.val_nll;
      since_best = 0;
      result.best = Checkpoint::from_model(model, categories);
      result.best.optimizer = trainer.state();
      result.best.train = config;
      result.best.global_step = trainer.steps();
      result.best.epoch = epoch;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  result.best.log = result.log;
  result.steps = trainer.steps();
  return result;
}

std::string to_string(LossMode mode) { return mode == LossMode::Nll ? "nll" : "label_smoothing"; }

std::string to_string(ElementOrder order) {
  switch (order) {
    case ElementOrder::Raster: return "raster";
    case ElementOrder::Random: return "random";
    case ElementOrder::PermutedPrefix: return "permuted_prefix";
  }
  return "raster";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "nll") return LossMode::Nll;
  if (s == "label_smoothing" || s == "ls") return LossMode::LabelSmoothing;
  throw InvalidConfig("unknown loss mode '" + s + "'");
}

ElementOrder parse_element_order(const std::string& s) {
  if (s == "raster") return ElementOrder::Raster;
  if (s == "random") return ElementOrder::Random;
  if (s == "permuted_prefix") return ElementOrder::PermutedPrefix;
  throw InvalidConfig("unknown element order '" + s + "'");
}

}  // namespace laygen
