#include "nasopt/search.hpp"

#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <sstream>
#include <thread>

#include "nasopt/errors.hpp"

namespace nasopt {

namespace {

constexpr std::uint64_t kStrategyStream = 1;
constexpr std::uint64_t kWeightStream = 2;
constexpr std::uint64_t kControllerStream = 3;

std::vector<std::string_view> split_csv(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(',', start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <class T>
T parse_number(std::string_view s, const char* what) {
  std::string tmp(s);
  std::size_t used = 0;
  try {
    T v;
    if constexpr (std::is_same_v<T, double>) {
      v = std::stod(tmp, &used);
    } else {
      v = static_cast<T>(std::stoull(tmp, &used));
    }
    if (used != tmp.size()) throw ParseError("");
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("search log: bad ") + what + " '" + tmp + "'");
  }
}

}  // namespace

std::string record_kind_name(RecordKind k) {
  switch (k) {
    case RecordKind::trained: return "trained";
    case RecordKind::invalid: return "invalid";
    case RecordKind::unbuildable: return "unbuildable";
    case RecordKind::duplicate: return "duplicate";
  }
  return "unknown";
}

std::string format_record(const SearchRecord& r) {
  char nums[160];
  std::snprintf(nums, sizeof nums, "%.17g,%llu,%llu,%.17g", r.cost, static_cast<unsigned long long>(r.evals),
                static_cast<unsigned long long>(r.cum_evals), r.best_cost);
  return std::to_string(r.iter) + "," + r.strategy + "," + r.genotype.str() + "," + r.key + "," + nums;
}

SearchRecord parse_record(std::string_view line) {
  const auto f = split_csv(line);
  if (f.size() != 8) throw ParseError("search log: expected 8 fields, got " + std::to_string(f.size()));
  SearchRecord r;
  r.iter = parse_number<std::uint64_t>(f[0], "iter");
  r.strategy = std::string(f[1]);
  r.genotype = Genotype::parse(f[2]);
  r.key = std::string(f[3]);
  r.cost = parse_number<double>(f[4], "cost");
  r.evals = parse_number<std::uint64_t>(f[5], "evals_spent");
  r.cum_evals = parse_number<std::uint64_t>(f[6], "cum_evals");
  r.best_cost = parse_number<double>(f[7], "best_cost");
  if (r.evals > 0) {
    r.kind = RecordKind::trained;
  } else if (r.cost == kInvalidCostOffset) {
    r.kind = RecordKind::unbuildable;
  } else if (r.cost > kInvalidCostOffset) {
    r.kind = RecordKind::invalid;
  } else {
    r.kind = RecordKind::duplicate;
  }
  return r;
}

std::vector<SearchRecord> read_search_log(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<SearchRecord> out;
  std::size_t pos = 0;
  int line_no = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    if (nl == std::string::npos) break;  // incomplete trailing line
    const std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != kSearchLogMagic) throw ParseError("not a search log (missing '" + std::string(kSearchLogMagic) + "')");
      continue;
    }
    if (line_no == 2) {
      if (line != kSearchLogHeader) throw ParseError("search log: unexpected header");
      continue;
    }
    if (line.empty()) continue;
    out.push_back(parse_record(line));
  }
  return out;
}

// ------------------------------------------------------------------ history

void SearchHistory::add(SearchRecord r) {
  evals_ += r.evals;
  if (r.kind == RecordKind::trained) {
    keys_.emplace(r.key, r.cost);
    key_set_.insert(r.key);
  }
  if (r.cost < best_cost_) {
    best_cost_ = r.cost;
    best_ = records_.size();
  }
  records_.push_back(std::move(r));
}

const SearchRecord* SearchHistory::best() const { return best_ ? &records_[*best_] : nullptr; }

std::optional<double> SearchHistory::cost_of(const std::string& key) const {
  const auto it = keys_.find(key);
  if (it == keys_.end()) return std::nullopt;
  return it->second;
}

void SearchConfig::validate() const {
  if (strategy != "random" && strategy != "rl" && strategy != "mac") {
    throw ConfigError("search: unknown strategy '" + strategy + "' (random, rl, mac)");
  }
  if (budget == 0) throw ConfigError("search: budget must be > 0");
  if (workers == 0) throw ConfigError("search: workers must be >= 1");
  if (proposals_per_iteration == 0) throw ConfigError("search: proposals_per_iteration must be >= 1");
  if (max_stall_batches == 0) throw ConfigError("search: max_stall_batches must be >= 1");
  penalty.validate();
  train.validate();
  controller.validate();
  mac.validate();
}

// --------------------------------------------------------------- strategies

std::vector<Genotype> RandomStrategy::propose(std::size_t count, const SearchContext&) {
  std::vector<Genotype> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_uniform(rng_));
  return out;
}

ControllerStrategy::ControllerStrategy(const ControllerConfig& cfg, std::uint64_t seed)
    : controller_(std::vector<int>(gene_alphabets().begin(), gene_alphabets().end()), cfg,
                  derive_seed(seed, kControllerStream)),
      rng_(derive_seed(seed, kStrategyStream)),
      batch_(cfg.batch) {}

std::vector<Genotype> ControllerStrategy::propose(std::size_t count, const SearchContext&) {
  std::vector<Genotype> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(Genotype::from_genes(controller_.sample(rng_).tokens));
  return out;
}

void ControllerStrategy::observe(std::span<const SearchRecord> records, const SearchContext&) {
  for (const auto& r : records) {
    const auto genes = r.genotype.genes();
    pending_seqs_.emplace_back(genes.begin(), genes.end());
    pending_rewards_.push_back(reward_from_cost(r.cost));
    if (pending_seqs_.size() == batch_) {
      controller_.update(pending_seqs_, pending_rewards_);
      pending_seqs_.clear();
      pending_rewards_.clear();
    }
  }
}

MacStrategy::MacStrategy(const MacConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(derive_seed(seed, kStrategyStream)) {}

std::vector<Genotype> MacStrategy::propose(std::size_t count, const SearchContext& ctx) {
  std::vector<Genotype> out;
  const SearchHistory& h = ctx.history;
  const bool warm = static_cast<double>(h.evals()) < cfg_.warmup_fraction * static_cast<double>(ctx.config.budget);
  std::optional<RbfSurrogate> surrogate;
  std::vector<double> weights;
  const SearchRecord* incumbent = nullptr;
  if (!warm) {
    std::vector<std::vector<double>> centers;
    std::vector<double> values;
    std::vector<Genotype> genos;
    std::vector<double> costs;
    for (const auto& r : h.records()) {
      if (r.kind != RecordKind::trained) continue;
      centers.push_back(genotype_features(r.genotype));
      values.push_back(symlog(r.cost));
      genos.push_back(r.genotype);
      costs.push_back(r.cost);
      if (!incumbent || r.cost < incumbent->cost) incumbent = &r;
    }
    if (!centers.empty()) surrogate = RbfSurrogate::fit(std::move(centers), std::move(values), cfg_.ridge);
    if (surrogate) weights = feature_weights(genos, costs);
  }
  std::unordered_set<std::string> seen = h.keys();
  for (std::size_t i = 0; i < count; ++i) {
    std::optional<Genotype> g;
    if (surrogate && incumbent) {
      g = mac_propose(incumbent->genotype, *surrogate, weights, seen, ctx.build, cfg_, rng_);
      if (g) ++surrogate_proposals_;
    }
    if (!g) g = sample_uniform(rng_);
    seen.insert(dedup_key(*g));
    out.push_back(*g);
  }
  return out;
}

std::unique_ptr<SearchStrategy> make_strategy(const SearchConfig& cfg) {
  if (cfg.strategy == "random") return std::make_unique<RandomStrategy>(derive_seed(cfg.seed, kStrategyStream));
  if (cfg.strategy == "rl") return std::make_unique<ControllerStrategy>(cfg.controller, cfg.seed);
  if (cfg.strategy == "mac") return std::make_unique<MacStrategy>(cfg.mac, cfg.seed);
  throw ConfigError("search: unknown strategy '" + cfg.strategy + "'");
}

// ------------------------------------------------------------------- search

namespace {

struct Candidate {
  Genotype genotype;
  std::uint64_t index = 0;  // position in the proposal stream; seeds the weights
};

struct Entry {
  Candidate cand;
  std::string key;
  RecordKind kind = RecordKind::trained;
  double cost = 0.0;
  std::uint64_t evals = 0;
  std::uint64_t allowance = 0;
  std::optional<std::size_t> same_as;  // earlier entry of this batch with the same key
  std::optional<Network> network;
  std::exception_ptr error;
};

void run_tasks(std::vector<Entry*>& tasks, std::size_t workers, const std::function<void(Entry&)>& fn) {
  if (workers <= 1 || tasks.size() <= 1) {
    for (Entry* e : tasks) fn(*e);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const std::size_t n = std::min(workers, tasks.size());
  for (std::size_t w = 0; w < n; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < tasks.size(); i = next++) {
        try {
          fn(*tasks[i]);
        } catch (...) {
          tasks[i]->error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (Entry* e : tasks) {
    if (e->error) std::rethrow_exception(e->error);
  }
}

}  // namespace

SearchResult run_search(const Objective& objective, const SearchConfig& cfg_in) {
  SearchConfig cfg = cfg_in;
  cfg.validate();
  BuildConfig build = cfg.build;
  build.bounds = objective.bounds();
  build.validate();
  const std::uint64_t rung_evals = static_cast<std::uint64_t>(cfg.train.initial_epochs) * build.num_sol;
  if (cfg.budget < rung_evals) {
    throw ConfigError("search: budget " + std::to_string(cfg.budget) + " is smaller than one training rung (" +
                      std::to_string(rung_evals) + " evaluations)");
  }
  const std::uint64_t cap = static_cast<std::uint64_t>(cfg.train.max_budget) * build.num_sol;
  const InputBatch inputs = InputBatch::from_config(build);
  auto strategy = make_strategy(cfg);
  const std::uint64_t weight_master = derive_seed(cfg.seed, kWeightStream);

  SearchResult result;
  SearchHistory& hist = result.history;
  const SearchContext ctx{hist, cfg, build};

  std::vector<SearchRecord> replay;
  if (cfg.resume && !cfg.log_path.empty() && std::filesystem::exists(cfg.log_path)) {
    std::ifstream in(cfg.log_path, std::ios::binary);
    replay = read_search_log(in);
    if (!cfg.checkpoint_path.empty() && std::filesystem::exists(cfg.checkpoint_path)) {
      std::ifstream ck(cfg.checkpoint_path, std::ios::binary);
      result.best_checkpoint = Json::parse(ck);
    }
  }
  std::ofstream log;
  if (!cfg.log_path.empty()) {
    std::string head = std::string(kSearchLogMagic) + "\n" + kSearchLogHeader + "\n";
    for (const auto& r : replay) head += format_record(r) + "\n";
    write_file_atomic(cfg.log_path, head);
    log.open(cfg.log_path, std::ios::binary | std::ios::app);
    if (!log) throw Error("cannot open search log " + cfg.log_path.string());
  }

  const std::uint64_t evals_before = objective.evaluations();
  std::vector<Candidate> deferred;
  std::uint64_t next_index = 0;
  std::size_t stall = 0;

  while (hist.evals() < cfg.budget) {
    std::vector<Candidate> batch = std::move(deferred);
    deferred.clear();
    if (batch.size() < cfg.proposals_per_iteration) {
      for (Genotype& g : strategy->propose(cfg.proposals_per_iteration - batch.size(), ctx)) {
        batch.push_back(Candidate{std::move(g), next_index++});
      }
    }

    const std::uint64_t remaining = cfg.budget - hist.evals();
    std::uint64_t allocated = 0;
    std::vector<Entry> entries;
    entries.reserve(batch.size());
    std::unordered_map<std::string, std::size_t> batch_keys;
    for (Candidate& c : batch) {
      Entry e;
      e.cand = std::move(c);
      e.key = dedup_key(e.cand.genotype);
      const ValidityReport rep = validate(decode(e.cand.genotype), cfg.penalty);
      if (!rep.valid()) {
        e.kind = RecordKind::invalid;
        e.cost = sentinel_cost(rep.penalty);
      } else if (!buildable(e.cand.genotype, build)) {
        e.kind = RecordKind::unbuildable;
        e.cost = sentinel_cost(0.0);
      } else if (auto known = hist.cost_of(e.key)) {
        e.kind = RecordKind::duplicate;
        e.cost = *known;
      } else if (auto it = batch_keys.find(e.key); it != batch_keys.end()) {
        e.kind = RecordKind::duplicate;
        e.same_as = it->second;
      } else {
        e.allowance = std::min(cap, remaining - allocated);
        if (e.allowance == 0) {
          deferred.push_back(std::move(e.cand));
          continue;
        }
        allocated += e.allowance;
        e.kind = RecordKind::trained;
        batch_keys.emplace(e.key, entries.size());
      }
      entries.push_back(std::move(e));
    }

    // Trained entries already present in the log are not retrained.
    std::vector<Entry*> tasks;
    {
      std::size_t pos = hist.size();
      for (Entry& e : entries) {
        if (pos < replay.size()) {
          const SearchRecord& r = replay[pos];
          if (r.genotype != e.cand.genotype) {
            throw StateError("search log record " + std::to_string(r.iter) + " does not match this configuration");
          }
          if (e.kind == RecordKind::trained) {
            e.cost = r.cost;
            e.evals = r.evals;
            ++result.replayed;
          }
        } else if (e.kind == RecordKind::trained) {
          tasks.push_back(&e);
        }
        ++pos;
      }
    }

    run_tasks(tasks, cfg.workers, [&](Entry& e) {
      Network net = nasopt::build(e.cand.genotype, build);
      net.init_weights(derive_seed(weight_master, e.cand.index));
      TrainConfig tc = cfg.train;
      tc.eval_budget = e.allowance;
      tc.epoch_log = nullptr;
      const TrainReport rep = budgeted_train(net, objective, inputs, tc);
      e.evals = rep.evals;
      e.cost = std::isfinite(rep.f_best) ? rep.f_best : sentinel_cost(0.0);
      e.network = std::move(net);
    });

    std::vector<SearchRecord> committed;
    std::uint64_t batch_evals = 0;
    for (Entry& e : entries) {
      if (e.same_as) e.cost = entries[*e.same_as].cost;
      const double best_before = hist.best_cost();
      SearchRecord r;
      r.iter = hist.size() + 1;
      r.strategy = strategy->name();
      r.genotype = e.cand.genotype;
      r.key = e.key;
      r.cost = e.cost;
      r.evals = e.evals;
      r.cum_evals = hist.evals() + e.evals;
      r.best_cost = std::min(best_before, e.cost);
      r.kind = e.kind;
      const bool replayed = hist.size() < replay.size();
      if (replayed) {
        const SearchRecord& old = replay[hist.size()];
        if (format_record(old) != format_record(r)) {
          throw StateError("search log record " + std::to_string(old.iter) + " does not match this configuration");
        }
      } else if (log.is_open()) {
        log << format_record(r) << '\n';
      }
      batch_evals += e.evals;
      hist.add(r);
      if (e.kind == RecordKind::trained && e.cost < best_before && e.network) {
        const Json meta{{"cost", e.cost}, {"iter", r.iter}, {"strategy", r.strategy}, {"evals", e.evals}};
        result.best_checkpoint = checkpoint_to_json(*e.network, meta);
        if (!cfg.checkpoint_path.empty()) {
          write_file_atomic(cfg.checkpoint_path, result.best_checkpoint->dump(1) + "\n");
        }
      }
      committed.push_back(std::move(r));
    }
    if (log.is_open()) log.flush();
    strategy->observe(committed, ctx);

    stall = batch_evals == 0 ? stall + 1 : 0;
    if (stall >= cfg.max_stall_batches) break;
  }

  result.objective_evals = objective.evaluations() - evals_before;
  if (const SearchRecord* b = hist.best()) {
    result.best = b->genotype;
    result.best_cost = b->cost;
  }
  return result;
}

}  // namespace nasopt
