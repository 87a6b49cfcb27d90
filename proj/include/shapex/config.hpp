#pragma once

// Run configuration: one JSON file plus command-line overrides. Unknown keys
// are rejected; per-stage seeds are derived from the global seed.

#include <filesystem>
#include <string>

#include "shapex/coopt.hpp"
#include "shapex/dataset.hpp"
#include "shapex/explore.hpp"
#include "shapex/mapper.hpp"
#include "shapex/spaces.hpp"

namespace shapex {

struct AlphaPolicy {
  double default_alpha = 3.0;
  double min = 0.0;
  double max = 6.0;
  int count = 13;
};

struct RunConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path bundle_dir = "bundle";
  std::filesystem::path report_dir = "reports";
  std::uint64_t seed = 0;

  int clip_dim = 32;
  int shape_dim = 32;
  int resolution = kDefaultResolution;
  int sketch_width = kDefaultSketchWidth;

  std::size_t chairs = 4000;
  std::size_t tables = 4000;

  AutoencoderConfig autoencoder;
  EmbeddingConfig embedding;
  MapperConfig mapper;
  CoOptConfig coopt;
  SvmConfig svm;
  AlphaPolicy alpha;

  // Fills the per-stage seeds and dims from the top-level fields.
  void resolve();
  void validate() const;

  DatasetConfig dataset() const;
};

RunConfig default_config();
// Throws ConfigError on malformed JSON, unknown keys or bad values.
RunConfig parse_config(std::string_view json_text);
RunConfig load_config(const std::filesystem::path& path);
std::string to_json(const RunConfig& config);

}  // namespace shapex
