// Python access to the core: genotypes, objectives, single-network training,
// search runs and the oracle checks. Structured results cross as JSON text.

#include <filesystem>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "checks.hpp"
#include "nasopt/config.hpp"
#include "nasopt/errors.hpp"
#include "nasopt/genotype.hpp"
#include "nasopt/objectives.hpp"
#include "nasopt/protein.hpp"
#include "nasopt/search.hpp"

namespace py = pybind11;
using namespace nasopt;

namespace {

double protein_energy_of(const std::string& which, const std::vector<double>& angles) {
  const bool is_id = which.find_first_not_of("AB") != std::string::npos;
  const ProteinModel model(is_id ? find_protein(which).sequence : which);
  return protein_energy(model, angles).value;
}

std::string train_json(const std::string& genotype, const std::string& config_json, std::uint64_t seed,
                       bool budgeted) {
  const ExperimentConfig cfg = config_from_json(Json::parse(config_json));
  const auto objective = make_objective(cfg.objective);
  const Genotype g = Genotype::parse(genotype);
  BuildConfig bc = cfg.build;
  bc.bounds = objective->bounds();
  Network net = build(g, bc);
  net.init_weights(seed);
  const InputBatch inputs = InputBatch::from_config(bc);
  const TrainReport rep = budgeted ? budgeted_train(net, *objective, inputs, cfg.train)
                                   : train(net, *objective, inputs, cfg.train);
  Json j = train_report_to_json(rep);
  j["genotype"] = g.str();
  j["objective"] = cfg.objective;
  j["seed"] = seed;
  return j.dump();
}

std::string search_json(const std::string& config_json, std::uint64_t seed, const std::string& run_dir) {
  const ExperimentConfig cfg = config_from_json(Json::parse(config_json));
  const auto objective = make_objective(cfg.objective);
  SearchConfig sc = make_search_config(cfg, seed, run_dir);
  if (run_dir.empty()) {
    sc.log_path.clear();
    sc.checkpoint_path.clear();
  } else {
    std::filesystem::create_directories(run_dir);
  }
  SearchResult res;
  {
    py::gil_scoped_release release;
    res = run_search(*objective, sc);
  }
  Json records = Json::array();
  for (const auto& r : res.history.records()) records.push_back(format_record(r));
  return Json{{"best_cost", res.best_cost},
              {"best_genotype", res.best ? res.best->str() : ""},
              {"evals", res.history.evals()},
              {"records", std::move(records)}}
      .dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Architecture search for networks that emit candidate solutions.";

  // Translators are tried newest first, so the base class goes first.
  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);

  py::class_<Genotype>(m, "Genotype")
      .def_static("parse", [](const std::string& s) { return Genotype::parse(s); })
      .def_static("from_genes", [](const std::vector<int>& genes) { return Genotype::from_genes(genes); })
      .def("genes",
           [](const Genotype& g) {
             const auto genes = g.genes();
             return std::vector<int>(genes.begin(), genes.end());
           })
      .def("penalty", [](const Genotype& g, double eta1, double eta2) {
        return validate(decode(g), PenaltyConfig{eta1, eta2}).penalty;
      }, py::arg("eta1") = 1e6, py::arg("eta2") = 1e6)
      .def("dedup_key", [](const Genotype& g) { return dedup_key(g); })
      .def("__str__", &Genotype::str)
      .def("__repr__", [](const Genotype& g) { return "Genotype('" + g.str() + "')"; })
      .def("__eq__", [](const Genotype& a, const Genotype& b) { return a == b; });

  m.def("space_size", &space_size);
  m.def("sample_genotype", [](std::uint64_t seed) {
    Rng rng(seed);
    return sample_uniform(rng);
  });

  py::class_<Objective, std::shared_ptr<Objective>>(m, "Objective")
      .def_property_readonly("id", &Objective::id)
      .def_property_readonly("dimension", &Objective::dimension)
      .def_property_readonly("lower", [](const Objective& f) { return f.bounds().lo; })
      .def_property_readonly("upper", [](const Objective& f) { return f.bounds().hi; })
      .def_property_readonly("evaluations", &Objective::evaluations)
      .def("__call__", [](const Objective& f, const std::vector<double>& x) { return f.value(x); })
      .def("gradient", [](const Objective& f, const std::vector<double>& x) {
        std::vector<double> g(x.size());
        const double v = f.value_and_gradient(x, g);
        return py::make_tuple(v, g);
      });
  m.def("make_objective", [](const std::string& spec) { return std::shared_ptr<Objective>(make_objective(spec)); });

  m.def("protein_energy", &protein_energy_of, py::arg("sequence"), py::arg("angles"),
        "AB off-lattice energy; `sequence` is a built-in PDB id or an A/B string, angles in degrees.");
  m.def("_train", &train_json);
  m.def("_search", &search_json);
  m.def("_default_config", [] { return config_to_json(ExperimentConfig{}).dump(); });
  m.def("verify", [] {
    std::vector<std::tuple<std::string, bool, std::string>> out;
    for (const auto& r : checks::verify_suite()) out.emplace_back(r.name, r.passed, r.detail);
    return out;
  });
}
