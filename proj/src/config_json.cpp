#include "laygen/config_json.hpp"

#include "laygen/errors.hpp"

namespace laygen {

namespace {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) it->get_to(out);
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Nucleus: return "nucleus";
    case Strategy::Greedy: return "greedy";
    case Strategy::Temperature: return "temperature";
  }
  return "nucleus";
}

Strategy parse_strategy(const std::string& s) {
  if (s == "nucleus") return Strategy::Nucleus;
  if (s == "greedy") return Strategy::Greedy;
  if (s == "temperature") return Strategy::Temperature;
  throw InvalidConfig("unknown sampling strategy '" + s + "'");
}

}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"d", c.d},
       {"layers", c.layers},
       {"heads", c.heads},
       {"d_ff", c.d_ff},
       {"bits", c.bits},
       {"num_categories", c.num_categories},
       {"max_elements", c.max_elements},
       {"dropout", c.dropout},
       {"tie_output", c.tie_output},
       {"continuous_attrs", c.continuous_attrs}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  read(j, "d", c.d);
  read(j, "layers", c.layers);
  read(j, "heads", c.heads);
  read(j, "d_ff", c.d_ff);
  read(j, "bits", c.bits);
  read(j, "num_categories", c.num_categories);
  read(j, "max_elements", c.max_elements);
  read(j, "dropout", c.dropout);
  read(j, "tie_output", c.tie_output);
  read(j, "continuous_attrs", c.continuous_attrs);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"epochs", c.epochs},
       {"epsilon", c.epsilon},
       {"lambda", c.lambda},
       {"token_budget", c.token_budget},
       {"patience", c.patience},
       {"seed", c.seed},
       {"loss", to_string(c.loss_mode)},
       {"kl_direction", c.kl_direction == KlDirection::TargetToPrediction ? "target_to_prediction"
                                                                          : "prediction_to_target"},
       {"order", to_string(c.order)},
       {"clip_norm", c.clip_norm},
       {"max_steps", c.max_steps}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  read(j, "lr", c.lr);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "epochs", c.epochs);
  read(j, "epsilon", c.epsilon);
  read(j, "lambda", c.lambda);
  read(j, "token_budget", c.token_budget);
  read(j, "patience", c.patience);
  read(j, "seed", c.seed);
  if (j.contains("loss")) c.loss_mode = parse_loss_mode(j.at("loss").get<std::string>());
  if (j.contains("kl_direction")) {
    const auto s = j.at("kl_direction").get<std::string>();
    if (s == "target_to_prediction") {
      c.kl_direction = KlDirection::TargetToPrediction;
    } else if (s == "prediction_to_target") {
      c.kl_direction = KlDirection::PredictionToTarget;
    } else {
      throw InvalidConfig("unknown kl_direction '" + s + "'");
    }
  }
  if (j.contains("order")) c.order = parse_element_order(j.at("order").get<std::string>());
  read(j, "clip_norm", c.clip_norm);
  read(j, "max_steps", c.max_steps);
}

void to_json(nlohmann::json& j, const SamplerConfig& c) {
  j = {{"strategy", strategy_name(c.strategy)},
       {"top_p", c.top_p},
       {"temperature", c.temperature},
       {"max_elements", c.max_elements},
       {"grammar_mask", c.grammar_mask},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SamplerConfig& c) {
  if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  read(j, "top_p", c.top_p);
  read(j, "temperature", c.temperature);
  read(j, "max_elements", c.max_elements);
  read(j, "grammar_mask", c.grammar_mask);
  read(j, "seed", c.seed);
}

void to_json(nlohmann::json& j, const SynthGrammarConfig& c) {
  j = {{"kind", to_string(c.kind)},
       {"min_elements", c.min_elements},
       {"max_elements", c.max_elements},
       {"jitter", c.jitter},
       {"bits", c.bits},
       {"categories", c.categories},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthGrammarConfig& c) {
  if (j.contains("kind")) c.kind = parse_synth_kind(j.at("kind").get<std::string>());
  read(j, "min_elements", c.min_elements);
  read(j, "max_elements", c.max_elements);
  read(j, "jitter", c.jitter);
  read(j, "bits", c.bits);
  read(j, "categories", c.categories);
  read(j, "seed", c.seed);
}

void to_json(nlohmann::json& j, const EpochLog& e) {
  j = {{"epoch", e.epoch}, {"train_nll", e.train_nll}, {"val_nll", e.val_nll}, {"seconds", e.seconds}};
}

void from_json(const nlohmann::json& j, EpochLog& e) {
  read(j, "epoch", e.epoch);
  read(j, "train_nll", e.train_nll);
  read(j, "val_nll", e.val_nll);
  read(j, "seconds", e.seconds);
}

}  // namespace laygen
