#include "nasopt/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "nasopt/errors.hpp"

namespace nasopt {

namespace {

/// Strict field reader that tracks the dotted path for diagnostics.
class Reader {
 public:
  Reader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config field '" + where() + "': expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!it->is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config field '" + child(key) + "': expected " + type_name<T>() + ", got " + it->dump());
    }
  }

  Reader sub(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    static const Json empty = Json::object();
    return Reader(it == j_.end() ? empty : *it, child(key));
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError("config field '" + child(k.c_str()) + "': unknown key");
    }
  }

  std::string child(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "<root>" : path_; }

 private:
  template <class T>
  static std::string type_name() {
    if constexpr (std::is_same_v<T, bool>) return "a boolean";
    else if constexpr (std::is_unsigned_v<T>) return "a non-negative integer";
    else if constexpr (std::is_integral_v<T>) return "an integer";
    else if constexpr (std::is_floating_point_v<T>) return "a number";
    else if constexpr (std::is_same_v<T, std::string>) return "a string";
    else return "a list";
  }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Json adam_to_json(const AdamConfig& a) {
  return Json{{"learning_rate", a.learning_rate},
              {"beta1", a.beta1},
              {"beta2", a.beta2},
              {"epsilon", a.epsilon},
              {"weight_decay", a.weight_decay}};
}

void read_adam(Reader r, AdamConfig& a) {
  r.get("learning_rate", a.learning_rate);
  r.get("beta1", a.beta1);
  r.get("beta2", a.beta2);
  r.get("epsilon", a.epsilon);
  r.get("weight_decay", a.weight_decay);
  r.finish();
}

template <class Fn>
void checked(const std::string& section, Fn fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    throw ConfigError("config section '" + section + "': " + e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (objective.empty()) throw ConfigError("config field 'objective': must not be empty");
  if (seeds.empty()) throw ConfigError("config field 'seeds': at least one seed is required");
  if (budget == 0) throw ConfigError("config field 'budget': must be > 0");
  if (strategy != "random" && strategy != "rl" && strategy != "mac") {
    throw ConfigError("config field 'strategy': unknown strategy '" + strategy + "' (random, rl, mac)");
  }
  if (proposals_per_iteration == 0) throw ConfigError("config field 'proposals_per_iteration': must be >= 1");
  if (max_stall_batches == 0) throw ConfigError("config field 'max_stall_batches': must be >= 1");
  checked("build", [&] {
    if (build.cells < 1) throw ConfigError("cells must be >= 1");
    if (build.channels < 1 || build.num_sol < 1 || build.input_size < 1) {
      throw ConfigError("channels, num_sol and input_size must be >= 1");
    }
  });
  checked("train", [&] { train.validate(); });
  checked("penalty", [&] { penalty.validate(); });
  checked("controller", [&] { controller.validate(); });
  checked("mac", [&] { mac.validate(); });
}

Json train_config_to_json(const TrainConfig& t) {
  return Json{{"max_epochs", t.max_epochs},
              {"psi", t.psi},
              {"initial_epochs", t.initial_epochs},
              {"growth", t.growth},
              {"max_budget", t.max_budget},
              {"f_star", t.f_star},
              {"adam", adam_to_json(t.adam)}};
}

Json config_to_json(const ExperimentConfig& c) {
  return Json{{"version", kConfigVersion},
              {"objective", c.objective},
              {"strategy", c.strategy},
              {"budget", c.budget},
              {"seeds", c.seeds},
              {"workers", c.workers},
              {"proposals_per_iteration", c.proposals_per_iteration},
              {"max_stall_batches", c.max_stall_batches},
              {"build",
               {{"cells", c.build.cells},
                {"channels", c.build.channels},
                {"num_sol", c.build.num_sol},
                {"input_size", c.build.input_size},
                {"input_seed", c.build.input_seed}}},
              {"train", train_config_to_json(c.train)},
              {"penalty", {{"eta1", c.penalty.eta1}, {"eta2", c.penalty.eta2}}},
              {"controller",
               {{"hidden", c.controller.hidden},
                {"batch", c.controller.batch},
                {"baseline_decay", c.controller.baseline_decay},
                {"init_scale", c.controller.init_scale},
                {"entropy_weight", c.controller.entropy_weight},
                {"adam", adam_to_json(c.controller.adam)}}},
              {"mac",
               {{"warmup_fraction", c.mac.warmup_fraction},
                {"trials", c.mac.trials},
                {"ridge", c.mac.ridge},
                {"base_rate", c.mac.base_rate},
                {"mutation_scale", c.mac.mutation_scale}}},
              {"out", c.out}};
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  Reader r(j, "");
  int version = kConfigVersion;
  r.get("version", version);
  if (version != kConfigVersion) {
    throw ConfigError("config field 'version': unsupported version " + std::to_string(version));
  }
  r.get("objective", c.objective);
  r.get("strategy", c.strategy);
  r.get("budget", c.budget);
  r.get("seeds", c.seeds);
  r.get("workers", c.workers);
  r.get("proposals_per_iteration", c.proposals_per_iteration);
  r.get("max_stall_batches", c.max_stall_batches);
  {
    Reader b = r.sub("build");
    b.get("cells", c.build.cells);
    b.get("channels", c.build.channels);
    b.get("num_sol", c.build.num_sol);
    b.get("input_size", c.build.input_size);
    b.get("input_seed", c.build.input_seed);
    b.finish();
  }
  {
    Reader t = r.sub("train");
    t.get("max_epochs", c.train.max_epochs);
    t.get("psi", c.train.psi);
    t.get("initial_epochs", c.train.initial_epochs);
    t.get("growth", c.train.growth);
    t.get("max_budget", c.train.max_budget);
    t.get("f_star", c.train.f_star);
    read_adam(t.sub("adam"), c.train.adam);
    t.finish();
  }
  {
    Reader p = r.sub("penalty");
    p.get("eta1", c.penalty.eta1);
    p.get("eta2", c.penalty.eta2);
    p.finish();
  }
  {
    Reader k = r.sub("controller");
    k.get("hidden", c.controller.hidden);
    k.get("batch", c.controller.batch);
    k.get("baseline_decay", c.controller.baseline_decay);
    k.get("init_scale", c.controller.init_scale);
    k.get("entropy_weight", c.controller.entropy_weight);
    read_adam(k.sub("adam"), c.controller.adam);
    k.finish();
  }
  {
    Reader m = r.sub("mac");
    m.get("warmup_fraction", c.mac.warmup_fraction);
    m.get("trials", c.mac.trials);
    m.get("ridge", c.mac.ridge);
    m.get("base_rate", c.mac.base_rate);
    m.get("mutation_scale", c.mac.mutation_scale);
    m.finish();
  }
  r.get("out", c.out);
  r.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::parse_error& e) {
    const std::size_t at = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < at; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": malformed config (" + e.what() + ")");
  }
  try {
    return config_from_json(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

Json train_report_to_json(const TrainReport& r) {
  return Json{{"f_best", r.f_best},
              {"x_best", r.x_best},
              {"evals", r.evals},
              {"epochs", r.epochs},
              {"stop", stop_reason_name(r.stop)},
              {"loss_history", r.loss_history},
              {"epoch_best", r.epoch_best},
              {"error", r.error}};
}

std::size_t resolve_workers(std::size_t requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

SearchConfig make_search_config(const ExperimentConfig& c, std::uint64_t seed, const std::filesystem::path& run_dir) {
  SearchConfig s;
  s.strategy = c.strategy;
  s.budget = c.budget;
  s.seed = seed;
  s.workers = resolve_workers(c.workers);
  s.proposals_per_iteration = c.proposals_per_iteration;
  s.max_stall_batches = c.max_stall_batches;
  s.build = c.build;
  s.train = c.train;
  s.penalty = c.penalty;
  s.controller = c.controller;
  s.mac = c.mac;
  s.log_path = run_dir / "search.csv";
  s.checkpoint_path = run_dir / "best.json";
  return s;
}

}  // namespace nasopt
