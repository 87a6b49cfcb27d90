#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <json.hpp>

#include "shapex/bundle.hpp"
#include "shapex/config.hpp"
#include "shapex/dataset.hpp"
#include "shapex/error.hpp"
#include "shapex/io.hpp"
#include "support.hpp"

using namespace shapex;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) { return io::read_file(p); }

std::size_t line_count(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("config round trips through JSON") {
  const auto c = default_config();
  CHECK(to_json(parse_config(to_json(c))) == to_json(c));
  CHECK(c.alpha.default_alpha == 3.0);
  CHECK(c.alpha.count == 13);
  CHECK(c.coopt.iterations == 2000);
  CHECK(c.coopt.lr == 2e-4);
  CHECK(c.mapper.lr == 1e-4);
  CHECK(c.mapper.reference_epochs == 5000);
  CHECK(c.svm.lambda == 1e-3);

  const auto t = parse_config(R"({"seed": 9, "dims": {"m": 16}, "alpha": {"default": 2.5}})");
  CHECK(t.seed == 9);
  CHECK(t.clip_dim == 16);
  CHECK(t.embedding.clip_dim == 16);
  CHECK(t.alpha.default_alpha == 2.5);
  CHECK(t.shape_dim == 32);
}

TEST_CASE("config rejects unknown keys, bad types and bad values") {
  CHECK_THROWS_AS(parse_config(R"({"sed": 1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"mapper": {"epoch": 3}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dims": {"m": "big"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"dims": {"R": 4}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"alpha": {"min": 2, "max": 1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"coopt": {"lr": 0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config("[]"), ConfigError);
  try {
    parse_config(R"({"svm": {"lambda": 1e-3, "C": 2}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("svm.C") != std::string::npos);
  }
}

TEST_CASE("stage seeds derive from the global seed") {
  auto a = default_config();
  auto b = default_config();
  b.seed = 1;
  b.resolve();
  CHECK(a.autoencoder.seed != b.autoencoder.seed);
  CHECK(a.mapper.seed != b.mapper.seed);
  CHECK(a.dataset().seed != b.dataset().seed);
  std::set<std::uint64_t> distinct{a.autoencoder.seed, a.embedding.seed, a.mapper.seed, a.svm.seed, a.dataset().seed};
  CHECK(distinct.size() == 5);
  b.seed = 0;
  b.resolve();
  CHECK(to_json(a) == to_json(b));
}

TEST_CASE("load_config names the file on error") {
  test::TempDir dir("config");
  io::write_file_atomic(dir / "bad.json", R"({"extra": true})");
  try {
    load_config(dir / "bad.json");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("bad.json") != std::string::npos);
  }
  CHECK_THROWS_AS(load_config(dir / "missing.json"), IoError);
}

TEST_CASE("splits are 80/10/10 by seed hash") {
  std::size_t counts[3] = {0, 0, 0};
  const std::size_t N = 20000;
  for (std::uint64_t s = 0; s < N; ++s) ++counts[static_cast<int>(split_for_seed(shape_seed(0, Category::chair, s)))];
  CHECK(counts[0] == doctest::Approx(0.8 * N).epsilon(0.02));
  CHECK(counts[1] == doctest::Approx(0.1 * N).epsilon(0.08));
  CHECK(counts[2] == doctest::Approx(0.1 * N).epsilon(0.08));
  CHECK(split_for_seed(123) == split_for_seed(123));
}

TEST_CASE("4000 chairs give 4000 manifest lines and three split files") {
  test::TempDir dir("data4k");
  DatasetConfig dc;
  dc.chairs = 4000;
  dc.tables = 0;
  const auto d = generate_dataset(dc);
  write_dataset(d, dir.path());
  const auto manifest = slurp(dir / "manifest.jsonl");
  CHECK(line_count(manifest) == 4000);
  std::size_t split_lines = 0;
  for (const char* s : {"train", "val", "test"}) {
    const fs::path p = dir.path() / "splits" / (std::string(s) + ".txt");
    REQUIRE(fs::exists(p));
    split_lines += line_count(slurp(p));
  }
  CHECK(split_lines == 4000);

  std::map<Attribute, int> count;
  for (const auto& r : d.records)
    for (Attribute a : r.spec.attributes.sorted()) ++count[a];
  for (Attribute a : applicable_attributes(Category::chair)) {
    CHECK(count[a] >= 1200);
    CHECK(count[a] <= 2800);
  }
}

TEST_CASE("dataset generation is deterministic and round trips") {
  test::TempDir a("data_a"), b("data_b");
  DatasetConfig dc;
  dc.chairs = 40;
  dc.tables = 30;
  dc.seed = 77;
  const auto d = generate_dataset(dc);
  write_dataset(d, a.path());
  write_dataset(generate_dataset(dc), b.path());
  CHECK(slurp(a / "manifest.jsonl") == slurp(b / "manifest.jsonl"));

  const auto loaded = load_dataset(a.path());
  REQUIRE(loaded.records.size() == 70);
  for (std::size_t i = 0; i < 70; ++i) {
    const auto& x = d.records[i];
    const auto& y = loaded.records[i];
    CHECK(x.id == y.id);
    CHECK(x.grid == y.grid);
    CHECK(x.sketch == y.sketch);
    CHECK(x.caption == y.caption);
    CHECK(x.split == y.split);
    CHECK(x.spec.attributes == y.spec.attributes);
  }
  CHECK(loaded.find("table_00003").category == Category::table);
  CHECK_THROWS_AS(loaded.find("sofa_00001"), NotFoundError);

  const auto j = nlohmann::json::parse(manifest_line(d.records[0]));
  for (const char* key : {"id", "category", "seed", "attributes", "caption", "voxels", "sketch", "split"})
    CHECK(j.contains(key));
  CHECK(j["attributes"].size() == 4);
}

TEST_CASE("dataset edge cases: empty, missing and corrupt manifests") {
  test::TempDir dir("data_edge");
  DatasetConfig dc;
  dc.chairs = 0;
  dc.tables = 0;
  const auto d = generate_dataset(dc);
  CHECK(d.records.empty());
  write_dataset(d, dir.path());
  CHECK(slurp(dir / "manifest.jsonl").empty());
  CHECK(load_dataset(dir.path()).records.empty());

  test::TempDir none("data_none");
  CHECK_THROWS_AS(load_dataset(none.path()), StateError);

  io::write_file_atomic(dir / "manifest.jsonl", "{\"id\": 1}\n");
  try {
    load_dataset(dir.path());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find(":1:") != std::string::npos);
  }
}

TEST_CASE("bundle stages: order, hashes and invalidation") {
  test::TempDir root("bundle");
  const auto cfg = test::tiny_config(root.path());
  const auto d = generate_dataset(cfg.dataset());

  try {
    train_mapper_stage(cfg, d, cfg.bundle_dir);
    FAIL("expected StateError");
  } catch (const StateError& e) {
    CHECK(std::string(e.what()).find("bundle.json") != std::string::npos);
  }

  train_spaces_stage(cfg, d, cfg.bundle_dir);
  for (const char* f : {"shape_encoder.lxw", "shape_decoder.lxw", "image_encoder.lxw", "text_encoder.lxw",
                        "bundle.json", "autoencoder_loss.txt", "embedding_loss.txt"})
    CHECK(fs::exists(cfg.bundle_dir / f));
  CHECK_THROWS_AS(load_bundle(cfg.bundle_dir), StateError);
  const auto spaces_only = load_bundle(cfg.bundle_dir, false);
  CHECK_FALSE(spaces_only.has_mappers());

  train_mapper_stage(cfg, d, cfg.bundle_dir);
  const auto b = load_bundle(cfg.bundle_dir);
  CHECK(b.has_mappers());
  CHECK(b.mapper(Category::chair).net.weights().layer_count() == 8);
  CHECK(b.current_hashes() == b.hashes);
  for (const auto& [k, h] : spaces_only.current_hashes()) CHECK(b.hashes.at(k) == h);
  CHECK(line_count(slurp(cfg.bundle_dir / "mapper_chair_loss.txt")) == static_cast<std::size_t>(cfg.mapper.epochs));

  const auto meta = nlohmann::json::parse(slurp(cfg.bundle_dir / "bundle.json"));
  for (const char* key : {"m", "n", "R", "W", "vocabulary", "seeds", "hashes"}) CHECK(meta.contains(key));

  // Same inputs retrain to identical hashes.
  test::TempDir again("bundle_again");
  train_spaces_stage(cfg, d, again.path());
  train_mapper_stage(cfg, d, again.path());
  CHECK(load_bundle(again.path()).hashes == b.hashes);

  // Tampering with a weight file is caught.
  auto bytes = slurp(cfg.bundle_dir / "mapper_table.lxw");
  bytes[bytes.size() - 1] = static_cast<char>(bytes.back() ^ 0x40);
  io::write_file_atomic(cfg.bundle_dir / "mapper_table.lxw", bytes);
  CHECK_THROWS_AS(load_bundle(cfg.bundle_dir), StateError);

  // Retraining the spaces drops the mappers.
  train_spaces_stage(cfg, d, cfg.bundle_dir);
  CHECK_FALSE(fs::exists(cfg.bundle_dir / "mapper_chair.lxw"));
  CHECK_THROWS_AS(load_bundle(cfg.bundle_dir), StateError);
}

TEST_CASE("loss log text") {
  CHECK(format_loss_log({{0, 3.0}, {1, 0.5}}) == "0 3\n1 0.5\n");
}
