#pragma once

// Generated shape corpus: records, deterministic splits and on-disk layout
// (manifest.jsonl, voxels/, sketches/, splits/).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "shapex/shapegen.hpp"

namespace shapex {

enum class Split { train, val, test };
std::string_view to_string(Split s);

struct DatasetConfig {
  std::size_t chairs = 4000;
  std::size_t tables = 4000;
  int resolution = kDefaultResolution;
  int sketch_width = kDefaultSketchWidth;
  std::uint64_t seed = 0;
};

struct ShapeRecord {
  std::string id;
  Category category = Category::chair;
  std::uint64_t seed = 0;
  ShapeSpec spec;
  VoxelGrid grid;
  SketchImage sketch;
  std::string caption;
  Split split = Split::train;
};

// 80/10/10 by hash of the shape seed.
Split split_for_seed(std::uint64_t seed);
std::uint64_t shape_seed(std::uint64_t base, Category category, std::size_t index);

struct Dataset {
  std::vector<ShapeRecord> records;

  std::vector<std::size_t> indices(Split split) const;
  std::vector<std::size_t> indices(Split split, Category category) const;
  // Throws NotFoundError.
  const ShapeRecord& find(std::string_view id) const;
};

ShapeRecord make_record(std::string id, Category category, std::uint64_t seed, int resolution, int sketch_width);
Dataset generate_dataset(const DatasetConfig& config);

// One JSON object per line.
std::string manifest_line(const ShapeRecord& r);
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
// Specs are regenerated from (seed, category); grids and sketches are read back.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace shapex
