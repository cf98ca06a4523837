// nasopt: search, train, transfer and ensemble runs from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "checks.hpp"
#include "nasopt/config.hpp"
#include "nasopt/ensemble.hpp"
#include "nasopt/errors.hpp"
#include "nasopt/protein.hpp"

namespace fs = std::filesystem;
using namespace nasopt;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> workers;
  bool resume = false;
};

ExperimentConfig load_or_default(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out.empty()) cfg.out = c.out;
  if (c.workers) cfg.workers = *c.workers;
  cfg.validate();
  return cfg;
}

void write_json(const fs::path& path, const Json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, j.dump(2) + "\n");
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int cmd_search(const Common& c) {
  const ExperimentConfig cfg = load_or_default(c);
  const auto objective = make_objective(cfg.objective);
  const fs::path out(cfg.out);
  fs::create_directories(out);
  write_json(out / "config.json", config_to_json(cfg));
  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir = out / ("seed-" + std::to_string(seed));
    fs::create_directories(dir);
    SearchConfig sc = make_search_config(cfg, seed, dir);
    sc.resume = c.resume;
    const SearchResult res = run_search(*objective, sc);
    Json summary{{"format", "nasopt-search-summary"},
                 {"version", 1},
                 {"objective", cfg.objective},
                 {"strategy", cfg.strategy},
                 {"seed", seed},
                 {"records", res.history.size()},
                 {"evals", res.history.evals()},
                 {"replayed", res.replayed},
                 {"best_cost", res.best_cost},
                 {"best_genotype", res.best ? res.best->str() : ""}};
    write_json(dir / "summary.json", summary);
    std::cout << "seed " << seed << ": best " << g17(res.best_cost) << " after " << res.history.evals()
              << " evals, " << res.history.size() << " records";
    if (res.best) std::cout << ", " << res.best->str();
    std::cout << "\n";
  }
  return 0;
}

int cmd_train(const Common& c, const std::string& genotype_text, const std::string& objective_spec, bool budgeted) {
  ExperimentConfig cfg = load_or_default(c);
  if (!objective_spec.empty()) cfg.objective = objective_spec;
  const auto objective = make_objective(cfg.objective);
  const Genotype g = Genotype::parse(genotype_text);
  BuildConfig bc = cfg.build;
  bc.bounds = objective->bounds();
  Network net = build(g, bc);
  const std::uint64_t seed = cfg.seeds.front();
  net.init_weights(seed);
  const InputBatch inputs = InputBatch::from_config(bc);

  TrainConfig tc = cfg.train;
  std::ofstream epochs;
  if (!c.out.empty()) {
    fs::create_directories(c.out);
    epochs.open(fs::path(c.out) / "epochs.csv");
    epochs << kEpochLogHeader << "\n";
    tc.epoch_log = &epochs;
  }
  const TrainReport rep = budgeted ? budgeted_train(net, *objective, inputs, tc) : train(net, *objective, inputs, tc);
  Json j = train_report_to_json(rep);
  j["genotype"] = g.str();
  j["objective"] = cfg.objective;
  j["seed"] = seed;
  if (!c.out.empty()) {
    write_json(fs::path(c.out) / "report.json", j);
    save_checkpoint(fs::path(c.out) / "model.json", net, Json{{"objective", cfg.objective}, {"seed", seed}});
  }
  std::cout << j.dump(2) << "\n";
  return rep.stop == StopReason::numeric_error ? 1 : 0;
}

int cmd_transfer(const Common& c, const std::string& mode, const std::string& checkpoint,
                 const std::string& genotype_text, const std::string& target_spec, std::uint64_t cutoff) {
  const ExperimentConfig cfg = load_or_default(c);
  const auto target = make_objective(target_spec);
  TransferConfig tc;
  tc.cutoff = cutoff;
  tc.adam = cfg.train.adam;
  tc.seed = cfg.seeds.front();
  tc.validate();

  std::optional<Checkpoint> ck;
  if (!checkpoint.empty()) ck = load_checkpoint(checkpoint);
  BuildConfig bc = ck ? ck->network.config() : cfg.build;
  bc.bounds = target->bounds();
  const InputBatch inputs = InputBatch::from_config(bc);

  TrainReport rep;
  std::string genotype;
  if (mode == "nas1") {
    if (!ck) throw ConfigError("transfer --mode nas1 needs --checkpoint");
    rep = transfer_nas1(ck->network, *target, inputs, tc);
    genotype = ck->network.genotype()->str();
    if (!c.out.empty()) save_checkpoint(fs::path(c.out) / "model.json", ck->network, Json{{"objective", target_spec}});
  } else if (mode == "nas2") {
    if (!ck && genotype_text.empty()) throw ConfigError("transfer --mode nas2 needs --checkpoint or --genotype");
    const Genotype g = ck ? *ck->network.genotype() : Genotype::parse(genotype_text);
    rep = transfer_nas2(g, bc, *target, inputs, tc);
    genotype = g.str();
  } else {
    throw ConfigError("transfer --mode must be nas1 or nas2, got '" + mode + "'");
  }
  Json j = train_report_to_json(rep);
  j["mode"] = mode;
  j["genotype"] = genotype;
  j["target"] = target_spec;
  j["cutoff"] = cutoff;
  if (!c.out.empty()) write_json(fs::path(c.out) / "transfer.json", j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_ensemble(const Common& c, const std::string& manifest_path) {
  const EnsembleManifest m = load_manifest(manifest_path);
  const auto target = make_objective(m.objective);
  std::vector<Network> members;
  for (const auto& p : m.members) members.push_back(load_checkpoint(p).network);
  if (members.empty()) throw ConfigError("ensemble manifest lists no members");

  EnsembleConfig ec;
  ec.scheme = m.scheme;
  ec.cutoff = m.cutoff;
  ec.seed = c.seed.value_or(m.seed);
  ec.workers = resolve_workers(c.workers.value_or(0));
  ec.validate();
  BuildConfig bc = members.front().config();
  bc.bounds = target->bounds();
  const InputBatch inputs = InputBatch::from_config(bc);
  const EnsembleReport rep = run_ensemble(members, *target, inputs, ec);

  Json j = train_report_to_json(rep.train);
  j["scheme"] = scheme_name(m.scheme);
  j["members"] = members.size();
  j["member_best"] = rep.member_best;
  j["ensemble_best"] = rep.ensemble_best;
  j["objective"] = m.objective;
  if (!c.out.empty()) write_json(fs::path(c.out) / "ensemble.json", j);
  std::cout << j.dump(2) << "\n";
  return 0;
}

int cmd_protein(const std::string& which, const std::string& angles_path) {
  const bool is_id = which.find_first_not_of("AB") != std::string::npos;
  const ProteinModel model(is_id ? find_protein(which).sequence : which);
  std::vector<double> angles(model.angle_count(), 0.0);
  if (!angles_path.empty()) {
    std::ifstream in(angles_path);
    if (!in) throw ConfigError("cannot open angles file " + angles_path);
    angles.clear();
    std::string tok;
    while (in >> tok) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(tok, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != tok.size()) throw ParseError(angles_path + ": not a number: '" + tok + "'");
      angles.push_back(v);
    }
  }
  const ProteinEnergy e = protein_energy(model, angles);
  std::cout << g17(e.value) << "\n";
  return 0;
}

int cmd_verify() {
  int failed = 0;
  for (const auto& r : checks::verify_suite()) {
    std::cout << (r.passed ? "PASS  " : "FAIL  ") << r.name << ": " << r.detail << "\n";
    failed += !r.passed;
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nasopt: architecture search for networks that emit candidate solutions"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "overrides the config seeds with one seed");
    sub->add_option("--out", common.out, "output directory");
    sub->add_option("--workers", common.workers, "worker threads, 0 for all cores");
  };

  auto* search = app.add_subcommand("search", "architecture search; writes search.csv and best.json per seed");
  add_common(search);
  search->add_flag("--resume", common.resume, "continue from an existing search log");

  std::string genotype, objective;
  bool budgeted = false;
  auto* trainc = app.add_subcommand("train", "train one genotype on an objective");
  add_common(trainc);
  trainc->add_option("--genotype", genotype, "E:<21>|O:<5>|B:<0|1>")->required();
  trainc->add_option("--objective", objective, "overrides the config objective");
  trainc->add_flag("--budgeted", budgeted, "rung schedule with early stopping instead of plain epochs");

  std::string mode = "nas1", checkpoint, target;
  std::uint64_t cutoff = 1000;
  auto* transfer = app.add_subcommand("transfer", "reuse a searched network on a new objective");
  add_common(transfer);
  transfer->add_option("--mode", mode, "nas1 (frozen body, new head) or nas2 (from scratch)");
  transfer->add_option("--checkpoint", checkpoint, "source network")->check(CLI::ExistingFile);
  transfer->add_option("--genotype", genotype, "architecture for nas2 without a checkpoint");
  transfer->add_option("--target", target, "target objective")->required();
  transfer->add_option("--cutoff", cutoff, "objective evaluations");

  std::string manifest;
  auto* ensemble = app.add_subcommand("ensemble", "combine searched networks: bagging, stacking or hybrid");
  add_common(ensemble);
  ensemble->add_option("manifest", manifest, "ensemble manifest (JSON)")->required()->check(CLI::ExistingFile);

  std::string protein, angles;
  auto* proteinc = app.add_subcommand("protein", "AB off-lattice energy of a conformation");
  proteinc->add_option("sequence", protein, "PDB id of a built-in instance or an A/B sequence")->required();
  proteinc->add_option("--angles", angles, "whitespace-separated angles in degrees (default: all zero)");

  auto* verify = app.add_subcommand("verify", "run the oracle checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*search) return cmd_search(common);
    if (*trainc) return cmd_train(common, genotype, objective, budgeted);
    if (*transfer) return cmd_transfer(common, mode, checkpoint, genotype, target, cutoff);
    if (*ensemble) return cmd_ensemble(common, manifest);
    if (*proteinc) return cmd_protein(protein, angles);
    if (*verify) return cmd_verify();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
