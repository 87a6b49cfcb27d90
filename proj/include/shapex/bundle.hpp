#pragma once

// The trained bundle directory: four space weight files, one mapper per
// category, bundle.json (dims, vocabulary, seeds, hashes) and loss logs.

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "shapex/config.hpp"

namespace shapex {

struct Bundle {
  ShapeSpace space;
  JointEmbedding embedding;
  std::map<Category, Clip2ShapeMapper> mappers;
  std::map<std::string, std::string> hashes;  // file stem -> parameter hash
  std::map<std::string, std::uint64_t> seeds;

  bool has_mappers() const { return mappers.size() == 2; }
  const Clip2ShapeMapper& mapper(Category c) const;
  // Hashes recomputed from the loaded networks.
  std::map<std::string, std::string> current_hashes() const;
};

inline constexpr const char* kBundleMetadata = "bundle.json";
// Stage name -> wall seconds; not part of the reproducible bundle.
inline constexpr const char* kTimingsFile = "timings.json";

std::filesystem::path mapper_file(Category c);

// Trains the frozen spaces on the train split and writes them with their
// loss logs; clears any mapper metadata (mappers must be retrained).
void train_spaces_stage(const RunConfig& config, const Dataset& dataset, const std::filesystem::path& bundle_dir);
// Requires the spaces; throws StateError naming the first missing file.
void train_mapper_stage(const RunConfig& config, const Dataset& dataset, const std::filesystem::path& bundle_dir);

// Loads and verifies hashes against bundle.json. With `require_mappers` a
// missing mapper file is a StateError.
Bundle load_bundle(const std::filesystem::path& bundle_dir, bool require_mappers = true);

std::string format_loss_log(const LossLog& log);

}  // namespace shapex
