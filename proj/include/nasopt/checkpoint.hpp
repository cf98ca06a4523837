#pragma once

#include <filesystem>

#include "json.hpp"
#include "nasopt/network.hpp"

namespace nasopt {

using Json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

Json bounds_to_json(const Bounds& b);
Bounds bounds_from_json(const Json& j);
Json build_config_to_json(const BuildConfig& cfg);
BuildConfig build_config_from_json(const Json& j);

struct Checkpoint {
  Network network;
  Json meta;  // training metadata, free form
};

/// Genotype, build config, every parameter with shape, value, frozen flag and
/// Adam moments, the Adam step counter and `meta`. Values survive a round trip
/// bit-exactly.
Json checkpoint_to_json(const Network& net, const Json& meta = Json::object());
/// Rebuilds the network from its genotype and restores the state. Throws
/// LoadError on unknown versions or inconsistent contents.
Checkpoint checkpoint_from_json(const Json& j);

/// Written to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Network& net, const Json& meta = Json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `text` to path atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace nasopt
