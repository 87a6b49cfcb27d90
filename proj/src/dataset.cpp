#include "shapex/dataset.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <sstream>

#include "shapex/error.hpp"
#include "shapex/io.hpp"

namespace shapex {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "";
}

Split split_for_seed(std::uint64_t seed) {
  const auto bucket = io::splitmix64(seed ^ 0x5eed5eed5eed5eedull) % 10;
  if (bucket < 8) return Split::train;
  return bucket == 8 ? Split::val : Split::test;
}

std::uint64_t shape_seed(std::uint64_t base, Category category, std::size_t index) {
  return io::splitmix64(io::derive_seed(base, to_string(category)) + index);
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::indices(Split split, Category category) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].split == split && records[i].category == category) out.push_back(i);
  return out;
}

const ShapeRecord& Dataset::find(std::string_view id) const {
  for (const auto& r : records)
    if (r.id == id) return r;
  throw NotFoundError("unknown shape id: " + std::string(id));
}

ShapeRecord make_record(std::string id, Category category, std::uint64_t seed, int resolution, int sketch_width) {
  ShapeRecord r;
  r.id = std::move(id);
  r.category = category;
  r.seed = seed;
  r.spec = sample_spec(seed, category);
  r.grid = voxelize(r.spec, resolution);
  r.sketch = render_sketch(r.grid, sketch_width);
  r.caption = caption_for(r.spec);
  r.split = split_for_seed(seed);
  return r;
}

Dataset generate_dataset(const DatasetConfig& config) {
  Dataset d;
  d.records.reserve(config.chairs + config.tables);
  for (auto [cat, n] : {std::pair{Category::chair, config.chairs}, std::pair{Category::table, config.tables}}) {
    for (std::size_t i = 0; i < n; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s_%05zu", std::string(to_string(cat)).c_str(), i);
      d.records.push_back(make_record(id, cat, shape_seed(config.seed, cat, i), config.resolution, config.sketch_width));
    }
  }
  if (d.records.empty()) spdlog::warn("dataset is empty");
  return d;
}

std::string manifest_line(const ShapeRecord& r) {
  json attrs = json::object();
  for (Attribute a : applicable_attributes(r.category)) attrs[std::string(to_string(a))] = r.spec.attributes.contains(a);
  json j = {{"id", r.id},
            {"category", to_string(r.category)},
            {"seed", r.seed},
            {"attributes", attrs},
            {"caption", r.caption},
            {"voxels", "voxels/" + r.id + ".lxv"},
            {"sketch", "sketches/" + r.id + ".pgm"},
            {"split", to_string(r.split)}};
  return j.dump();
}

void write_dataset(const Dataset& dataset, const fs::path& dir) {
  try {
    fs::create_directories(dir / "voxels");
    fs::create_directories(dir / "sketches");
    fs::create_directories(dir / "splits");
  } catch (const fs::filesystem_error& e) {
    throw IoError(dir.string() + ": " + e.what());
  }
  std::string manifest;
  std::string splits[3];
  for (const auto& r : dataset.records) {
    write_voxels(dir / "voxels" / (r.id + ".lxv"), r.grid);
    write_pgm(dir / "sketches" / (r.id + ".pgm"), r.sketch);
    manifest += manifest_line(r) + "\n";
    splits[static_cast<int>(r.split)] += r.id + "\n";
  }
  for (Split s : {Split::train, Split::val, Split::test})
    io::write_file_atomic(dir / "splits" / (std::string(to_string(s)) + ".txt"), splits[static_cast<int>(s)]);
  // Manifest last: its presence marks a complete dataset.
  io::write_file_atomic(dir / "manifest.jsonl", manifest);
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.jsonl";
  if (!fs::exists(manifest)) throw StateError("missing dataset manifest: " + manifest.string());
  std::istringstream in(io::read_file(manifest));
  Dataset d;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ShapeRecord r;
      r.id = j.at("id").get<std::string>();
      r.category = parse_category(j.at("category").get<std::string>());
      r.seed = j.at("seed").get<std::uint64_t>();
      r.spec = sample_spec(r.seed, r.category);
      r.caption = j.at("caption").get<std::string>();
      r.grid = read_voxels(dir / j.at("voxels").get<std::string>());
      r.sketch = read_pgm(dir / j.at("sketch").get<std::string>());
      r.split = split_for_seed(r.seed);
      d.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw DataError(manifest.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return d;
}

}  // namespace shapex
