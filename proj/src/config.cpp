#include "lbkt/config.hpp"

#include <fstream>
#include <set>

#include "lbkt/error.hpp"

namespace lbkt {

namespace {

/// Reads fields of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_, "'" + path_ + "' must be a JSON object");
  }

  template <typename T>
  void read(const char* key, T& dst) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw std::invalid_argument("expected a boolean");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw std::invalid_argument("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (it->is_number_unsigned() == false && it->template get<std::int64_t>() < 0) {
            throw std::invalid_argument("expected a non-negative integer");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw std::invalid_argument("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw std::invalid_argument("expected a string");
      }
      dst = it->template get<T>();
    } catch (const std::exception& e) {
      throw ConfigError(child(key), "invalid value for '" + child(key) + "': " + e.what());
    }
  }

  template <typename E, typename Parse>
  void read_enum(const char* key, E& dst, Parse parse) {
    std::string name;
    read(key, name);
    if (name.empty()) return;
    try {
      dst = parse(name);
    } catch (const std::exception& e) {
      throw ConfigError(child(key), "invalid value for '" + child(key) + "': " + e.what());
    }
  }

  const Json* object(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) throw ConfigError(child(key), "unknown configuration key '" + child(key) + "'");
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

void RunConfig::validate() const {
  model.encoder.validate();
  if (model.num_buckets < 1) throw ConfigError("model.num_buckets", "num_buckets must be positive");
  if (model.lstm_hidden < 1) throw ConfigError("model.lstm_hidden", "lstm_hidden must be positive");
  if (model.max_positions < train.max_len) {
    throw ConfigError("model.max_positions", "max_positions must be >= train.max_len");
  }
  train.validate();
  if (folds < 2) throw ConfigError("folds", "folds must be >= 2");
}

Json to_json(const ModelConfig& c) {
  return Json{{"variant", std::string(cli_name(c.variant))},
              {"num_layers", c.encoder.num_layers},
              {"num_heads", c.encoder.num_heads},
              {"d_model", c.encoder.d_model},
              {"d_ff", c.encoder.d_ff},
              {"dropout", c.encoder.dropout},
              {"mask_mode", std::string(to_string(c.encoder.mask_mode))},
              {"layer_norm_epsilon", c.encoder.layer_norm_epsilon},
              {"num_questions", c.num_questions},
              {"num_buckets", c.num_buckets},
              {"lstm_hidden", c.lstm_hidden},
              {"max_positions", c.max_positions},
              {"init_seed", c.init_seed}};
}

Json to_json(const TrainConfig& c) {
  return Json{{"batch_size", c.batch_size},
              {"test_fraction", c.test_fraction},
              {"validation_fraction", c.validation_fraction},
              {"learning_rate", c.learning_rate},
              {"max_lr", c.max_lr},
              {"epochs", c.epochs},
              {"patience", c.patience},
              {"early_window", c.early_window},
              {"scheduler", std::string(to_string(c.scheduler))},
              {"warmup_fraction", c.warmup_fraction},
              {"div_factor", c.div_factor},
              {"final_div_factor", c.final_div_factor},
              {"grad_clip_norm", c.grad_clip_norm},
              {"adam_beta1", c.adam.beta1},
              {"adam_beta2", c.adam.beta2},
              {"adam_epsilon", c.adam.epsilon},
              {"max_len", c.max_len},
              {"window_policy", std::string(to_string(c.window_policy))},
              {"threads", c.threads}};
}

Json to_json(const RunConfig& c) {
  return Json{{"data", c.data},
              {"model", to_json(c.model)},
              {"train", to_json(c.train)},
              {"run_root", c.run_root},
              {"seed", c.seed},
              {"folds", c.folds},
              {"eval_mode", std::string(to_string(c.eval_mode))}};
}

ModelConfig model_config_from_json(const Json& j, const std::string& path) {
  ModelConfig c;
  ObjectReader r(j, path);
  r.read_enum("variant", c.variant, parse_variant);
  r.read("num_layers", c.encoder.num_layers);
  r.read("num_heads", c.encoder.num_heads);
  r.read("d_model", c.encoder.d_model);
  r.read("d_ff", c.encoder.d_ff);
  r.read("dropout", c.encoder.dropout);
  r.read_enum("mask_mode", c.encoder.mask_mode, parse_mask_mode);
  r.read("layer_norm_epsilon", c.encoder.layer_norm_epsilon);
  r.read("num_questions", c.num_questions);
  r.read("num_buckets", c.num_buckets);
  r.read("lstm_hidden", c.lstm_hidden);
  r.read("max_positions", c.max_positions);
  r.read("init_seed", c.init_seed);
  r.finish();
  return c;
}

TrainConfig train_config_from_json(const Json& j, const std::string& path) {
  TrainConfig c;
  ObjectReader r(j, path);
  r.read("batch_size", c.batch_size);
  r.read("test_fraction", c.test_fraction);
  r.read("validation_fraction", c.validation_fraction);
  r.read("learning_rate", c.learning_rate);
  r.read("max_lr", c.max_lr);
  r.read("epochs", c.epochs);
  r.read("patience", c.patience);
  r.read("early_window", c.early_window);
  r.read_enum("scheduler", c.scheduler, parse_scheduler);
  r.read("warmup_fraction", c.warmup_fraction);
  r.read("div_factor", c.div_factor);
  r.read("final_div_factor", c.final_div_factor);
  r.read("grad_clip_norm", c.grad_clip_norm);
  r.read("adam_beta1", c.adam.beta1);
  r.read("adam_beta2", c.adam.beta2);
  r.read("adam_epsilon", c.adam.epsilon);
  r.read("max_len", c.max_len);
  r.read_enum("window_policy", c.window_policy, parse_window_policy);
  r.read("threads", c.threads);
  r.finish();
  return c;
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  ObjectReader r(j, "");
  r.read("data", c.data);
  if (const Json* m = r.object("model")) c.model = model_config_from_json(*m, "model");
  if (const Json* t = r.object("train")) c.train = train_config_from_json(*t, "train");
  r.read("run_root", c.run_root);
  r.read("seed", c.seed);
  r.read("folds", c.folds);
  r.read_enum("eval_mode", c.eval_mode, parse_attention_mode);
  r.finish();
  c.train.seed = c.seed;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("<root>", std::string("config is not valid JSON: ") + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace lbkt
