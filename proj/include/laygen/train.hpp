#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "laygen/layout.hpp"
#include "laygen/model.hpp"
#include "laygen/optim.hpp"

namespace laygen {

enum class LossMode { LabelSmoothing, Nll };

// Direction of the divergence in label-smoothing mode. TargetToPrediction is
// KL(target || softmax), the cross-entropy form. PredictionToTarget is
// KL(softmax || target) and needs epsilon > 0.
enum class KlDirection { TargetToPrediction, PredictionToTarget };

// Element order of training sequences. PermutedPrefix places a random subset
// of elements first, in random order, followed by the rest in raster order.
enum class ElementOrder { Raster, Random, PermutedPrefix };

struct LossOptions {
  LossMode mode = LossMode::LabelSmoothing;
  double epsilon = 0.1;
  double lambda = 1.0;
  KlDirection direction = KlDirection::TargetToPrediction;
};

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  int epochs = 30;
  double epsilon = 0.1;
  double lambda = 1.0;
  std::size_t token_budget = 4096;
  int patience = 5;
  std::uint64_t seed = 0;
  LossMode loss_mode = LossMode::LabelSmoothing;
  KlDirection kl_direction = KlDirection::TargetToPrediction;
  ElementOrder order = ElementOrder::Raster;
  double clip_norm = 0.0;      // 0 disables clipping
  std::size_t max_steps = 0;   // 0 means no step limit

  LossOptions loss_options() const { return {loss_mode, epsilon, lambda, kl_direction}; }
  void validate() const;
};

// Mass 1-eps on `true_class`, eps/(V-1) elsewhere. Throws InvalidVocab when V < 2.
std::vector<double> smoothed_target(int true_class, int vocab_size, double epsilon);

// Mean over unmasked positions of the per-position divergence (or NLL), plus
// lambda * mean L1 over continuous attributes when both are given.
// logits: [..., V]; targets and mask: one entry per logits row.
// Throws EmptyBatch when every position is masked.
template <typename Real>
BasicTensor<Real> sequence_loss(const BasicTensor<Real>& logits, std::span<const int> targets,
                                 std::span<const std::uint8_t> loss_mask, const LossOptions& options,
                                 const BasicTensor<Real>* continuous_pred = nullptr,
                                 const BasicTensor<Real>* continuous_target = nullptr);

struct Batch {
  std::vector<std::size_t> indices;  // dataset indices, in row order
  std::size_t rows = 0;
  std::size_t len = 0;               // input length = padded sequence length - 1
  std::vector<int> inputs;           // [rows, len]
  std::vector<int> targets;          // [rows, len]
  std::vector<std::uint8_t> mask;    // [rows, len], 1 where a real target exists
  // Continuous-attribute supervision: flat (row * len + position) of each
  // element's category slot, and its attribute targets.
  std::vector<int> attr_positions;
  std::vector<double> attr_targets;

  std::size_t target_count() const;
  std::size_t pad_count() const;
};

// Sorts layouts by element count, packs contiguous runs greedily so that
// rows * padded_len <= token_budget, and shuffles batch order with `seed`.
// `order` is applied per layout with a seed derived from `seed`.
// Throws LayoutTooLong when one sequence alone exceeds the budget.
std::vector<Batch> make_batches(const std::vector<Layout>& dataset, const Vocab& vocab, std::size_t token_budget,
                                std::uint64_t seed, ElementOrder order = ElementOrder::Raster,
                                bool shuffle = true, int continuous_attrs = 0);

// Reorders one layout's elements per `order`.
Layout order_elements(const Layout& layout, ElementOrder order, std::uint64_t seed);

struct EpochLog {
  int epoch = 0;
  double train_nll = 0;
  double val_nll = 0;
  double seconds = 0;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelConfig model;
  CategoryVocab categories;
  std::vector<std::pair<std::string, Tensor>> tensors;
  std::optional<AdamState> optimizer;
  std::optional<TrainConfig> train;
  std::vector<EpochLog> log;
  std::uint64_t global_step = 0;
  int epoch = 0;

  static Checkpoint from_model(const Transformer& model, const CategoryVocab& categories);
  // Fresh model holding copies of the stored tensors.
  Transformer to_model() const;
};

// Atomic write (temp file + rename). Throws std::runtime_error on I/O failure.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
// Throws IncompatibleCheckpoint (bad magic/version) or ChecksumError
// (truncated/corrupt).
Checkpoint load_checkpoint(const std::filesystem::path& path);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

// Per-token NLL (nats) of every unmasked target under eval-mode forward.
// Returns {total_nll, target_count}.
std::pair<double, std::size_t> evaluate_nll(const Transformer& model, const std::vector<Batch>& batches);
double per_token_nll(const Transformer& model, const std::vector<Layout>& layouts, std::size_t token_budget = 8192);

struct StepResult {
  double loss = 0;
  double nll_total = 0;       // summed target NLL at the pre-update parameters
  std::size_t targets = 0;
};

// One optimizer step at a time over a model it does not own.
class Trainer {
 public:
  Trainer(Transformer& model, TrainConfig config);
  Trainer(Transformer& model, TrainConfig config, AdamState state);

  // Forward, loss, backward and Adam update on one batch. Reports the loss
  // before the update. Throws NumericalError on a non-finite loss.
  StepResult step(const Batch& batch);
  // Loss of `batch` at the current parameters without updating them.
  double loss(const Batch& batch) const;

  const AdamState& state() const noexcept { return state_; }
  std::uint64_t steps() const noexcept { return state_.step; }
  const TrainConfig& config() const noexcept { return config_; }

 private:
  Transformer* model_;
  TrainConfig config_;
  AdamState state_;
};

struct FitResult {
  Checkpoint best;
  std::vector<EpochLog> log;
  std::uint64_t steps = 0;
};

struct FitCallbacks {
  std::function<void(const EpochLog&)> on_epoch;
};

// Continues a run from a checkpoint: optimizer moments, step count and the
// epoch counter carry over.
struct FitResume {
  AdamState optimizer;
  int epoch = 0;
};

// Teacher-forced training with per-epoch validation and early stopping. The
// model is left at its final parameters; `best` holds the parameters with the
// lowest validation NLL.
FitResult fit(Transformer& model, const CategoryVocab& categories, const std::vector<Layout>& train_set,
              const std::vector<Layout>& val_set, const TrainConfig& config, const FitCallbacks& callbacks = {},
              const std::optional<FitResume>& resume = std::nullopt);

std::string to_string(LossMode mode);
std::string to_string(ElementOrder order);
LossMode parse_loss_mode(const std::string& s);
ElementOrder parse_element_order(const std::string& s);

}  // namespace laygen
