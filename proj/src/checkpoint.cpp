#include "nasopt/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "nasopt/errors.hpp"

namespace nasopt {

namespace {

Json tensor_to_json(const Tensor& t) { return Json{{"shape", t.shape()}, {"data", t.storage()}}; }

Tensor tensor_from_json(const Json& j) {
  auto shape = j.at("shape").get<Shape>();
  auto data = j.at("data").get<std::vector<double>>();
  if (shape_numel(shape) != data.size()) throw LoadError("tensor data does not match shape " + shape_string(shape));
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace

Json bounds_to_json(const Bounds& b) { return Json{{"lo", b.lo}, {"hi", b.hi}}; }

Bounds bounds_from_json(const Json& j) {
  Bounds b{j.at("lo").get<std::vector<double>>(), j.at("hi").get<std::vector<double>>()};
  b.validate();
  return b;
}

Json build_config_to_json(const BuildConfig& cfg) {
  return Json{{"cells", cfg.cells},
              {"channels", cfg.channels},
              {"bounds", bounds_to_json(cfg.bounds)},
              {"num_sol", cfg.num_sol},
              {"input_size", cfg.input_size},
              {"input_seed", cfg.input_seed}};
}

BuildConfig build_config_from_json(const Json& j) {
  BuildConfig cfg;
  cfg.cells = j.at("cells").get<int>();
  cfg.channels = j.at("channels").get<std::size_t>();
  cfg.bounds = bounds_from_json(j.at("bounds"));
  cfg.num_sol = j.at("num_sol").get<std::size_t>();
  cfg.input_size = j.at("input_size").get<std::size_t>();
  cfg.input_seed = j.at("input_seed").get<std::uint64_t>();
  cfg.validate();
  return cfg;
}

Json checkpoint_to_json(const Network& net, const Json& meta) {
  if (!net.genotype()) throw StateError("only genotype-built networks can be checkpointed");
  Json params = Json::array();
  for (const Parameter& p : net.params()) {
    params.push_back(Json{{"name", p.name},
                          {"frozen", p.frozen},
                          {"value", tensor_to_json(p.value)},
                          {"adam_m", tensor_to_json(p.m)},
                          {"adam_v", tensor_to_json(p.v)}});
  }
  return Json{{"format", "nasopt-checkpoint"},
              {"version", kCheckpointVersion},
              {"genotype", net.genotype()->str()},
              {"build", build_config_to_json(net.config())},
              {"adam_step", net.params().step()},
              {"parameters", std::move(params)},
              {"meta", meta}};
}

Checkpoint checkpoint_from_json(const Json& j) {
  try {
    if (j.value("format", "") != "nasopt-checkpoint") throw LoadError("not a checkpoint document");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) throw LoadError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck{build(Genotype::parse(j.at("genotype").get<std::string>()), build_config_from_json(j.at("build"))),
                  j.value("meta", Json::object())};
    ParamStore& store = ck.network.params();
    const Json& params = j.at("parameters");
    if (params.size() != store.size()) throw LoadError("checkpoint parameter count does not match the network");
    for (std::size_t i = 0; i < store.size(); ++i) {
      const Json& pj = params[i];
      Parameter& p = store[i];
      if (pj.at("name").get<std::string>() != p.name) {
        throw LoadError("checkpoint parameter " + pj.at("name").get<std::string>() + " where " + p.name +
                        " was expected");
      }
      Tensor value = tensor_from_json(pj.at("value"));
      if (value.shape() != p.value.shape()) throw LoadError("shape mismatch for parameter " + p.name);
      Tensor m = tensor_from_json(pj.at("adam_m"));
      Tensor v = tensor_from_json(pj.at("adam_v"));
      if (m.shape() != value.shape() || v.shape() != value.shape()) {
        throw LoadError("optimizer state shape mismatch for " + p.name);
      }
      p.value = std::move(value);
      p.m = std::move(m);
      p.v = std::move(v);
      p.frozen = pj.at("frozen").get<bool>();
    }
    store.set_step(j.at("adam_step").get<std::int64_t>());
    return ck;
  } catch (const Json::exception& e) {
    throw LoadError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ParseError& e) {
    throw LoadError(std::string("malformed checkpoint: ") + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(std::string("malformed checkpoint: ") + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Network& net, const Json& meta) {
  write_file_atomic(path, checkpoint_to_json(net, meta).dump(1) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw LoadError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace nasopt
