#include "shapex/bundle.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>

#include "shapex/io.hpp"

namespace shapex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSpaceFiles[] = {"shape_encoder", "shape_decoder", "image_encoder", "text_encoder"};

fs::path weights_path(const fs::path& dir, std::string_view stem) { return dir / (std::string(stem) + ".lxw"); }

json read_metadata(const fs::path& dir) {
  const fs::path p = dir / kBundleMetadata;
  if (!fs::exists(p)) throw StateError("missing bundle metadata: " + p.string());
  try {
    return json::parse(io::read_file(p));
  } catch (const json::exception& e) {
    throw FormatError(p.string() + ": " + e.what());
  }
}

void write_metadata(const fs::path& dir, const json& j) { io::write_file_atomic(dir / kBundleMetadata, j.dump(2) + "\n"); }

// Returns wall seconds.
template <class F>
double progress_log(const char* stage, int epochs, F&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn([stage, epochs](int epoch, double loss) {
    if (epoch == 0 || (epoch + 1) % 10 == 0 || epoch + 1 == epochs)
      spdlog::info("{} epoch {}/{} loss {:.6g}", stage, epoch + 1, epochs, loss);
  });
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  spdlog::info("{} trained in {:.1f} s", stage, s);
  return s;
}

// Wall-clock stage timings live outside bundle.json so metadata stays reproducible.
void write_timings(const fs::path& dir, const json& entries, bool merge) {
  json t = json::object();
  const fs::path p = dir / kTimingsFile;
  if (merge && fs::exists(p)) {
    try {
      t = json::parse(io::read_file(p));
    } catch (const json::exception&) {
      t = json::object();
    }
  }
  t.update(entries);
  io::write_file_atomic(p, t.dump(2) + "\n");
}

}  // namespace

const Clip2ShapeMapper& Bundle::mapper(Category c) const {
  const auto it = mappers.find(c);
  if (it == mappers.end()) throw StateError("no mapper for category " + std::string(to_string(c)));
  return it->second;
}

std::map<std::string, std::string> Bundle::current_hashes() const {
  std::map<std::string, std::string> h{{"shape_encoder", space.encoder.hash()},
                                       {"shape_decoder", space.decoder.hash()},
                                       {"image_encoder", embedding.image_encoder.hash()},
                                       {"text_encoder", embedding.text_encoder.hash()}};
  for (const auto& [cat, m] : mappers) h["mapper_" + std::string(to_string(cat))] = m.net.hash();
  return h;
}

fs::path mapper_file(Category c) { return "mapper_" + std::string(to_string(c)) + ".lxw"; }

std::string format_loss_log(const LossLog& log) {
  std::string out;
  char buf[64];
  for (const auto& [step, loss] : log) {
    std::snprintf(buf, sizeof buf, "%d %.10g\n", step, loss);
    out += buf;
  }
  return out;
}

void train_spaces_stage(const RunConfig& config, const Dataset& dataset, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<VoxelGrid> grids;
  std::vector<SketchImage> sketches;
  std::vector<std::string> captions;
  for (std::size_t i : dataset.indices(Split::train)) {
    const auto& r = dataset.records[i];
    if (r.grid.resolution() != config.resolution) throw ConfigError("dataset resolution differs from dims.R");
    if (r.sketch.width() != config.sketch_width) throw ConfigError("dataset sketch width differs from dims.W");
    grids.push_back(r.grid);
    sketches.push_back(r.sketch);
    captions.push_back(r.caption);
  }

  LossLog ae_log, emb_log;
  ShapeSpace space;
  const double ae_s = progress_log("autoencoder", config.autoencoder.epochs,
               [&](auto cb) { space = train_shape_autoencoder(grids, config.autoencoder, &ae_log, cb); });
  JointEmbedding embedding;
  const double emb_s = progress_log("embedding", config.embedding.epochs,
               [&](auto cb) { embedding = train_joint_embedding(sketches, captions, config.embedding, &emb_log, cb); });

  nn::save_weights(space.encoder.weights(), weights_path(dir, "shape_encoder"));
  nn::save_weights(space.decoder.weights(), weights_path(dir, "shape_decoder"));
  nn::save_weights(embedding.image_encoder.weights(), weights_path(dir, "image_encoder"));
  nn::save_weights(embedding.text_encoder.weights(), weights_path(dir, "text_encoder"));
  io::write_file_atomic(dir / "autoencoder_loss.txt", format_loss_log(ae_log));
  io::write_file_atomic(dir / "embedding_loss.txt", format_loss_log(emb_log));
  for (Category c : {Category::chair, Category::table}) {
    std::error_code ec;
    fs::remove(dir / mapper_file(c), ec);
  }

  json meta = {{"version", 1},
               {"m", embedding.clip_dim()},
               {"n", space.code_dim()},
               {"R", space.resolution},
               {"W", embedding.sketch_width},
               {"vocabulary", embedding.vocabulary.tokens()},
               {"seeds", {{"global", config.seed}, {"autoencoder", config.autoencoder.seed}, {"embedding", config.embedding.seed}}},
               {"hashes",
                {{"shape_encoder", space.encoder.hash()},
                 {"shape_decoder", space.decoder.hash()},
                 {"image_encoder", embedding.image_encoder.hash()},
                 {"text_encoder", embedding.text_encoder.hash()}}}};
  write_metadata(dir, meta);
  write_timings(dir, {{"autoencoder", ae_s}, {"embedding", emb_s}}, false);
}

void train_mapper_stage(const RunConfig& config, const Dataset& dataset, const fs::path& dir) {
  if (!fs::exists(dir / kBundleMetadata)) throw StateError("missing prerequisite " + (dir / kBundleMetadata).string() + " (run the spaces stage first)");
  for (auto stem : kSpaceFiles)
    if (!fs::exists(weights_path(dir, stem)))
      throw StateError("missing prerequisite " + weights_path(dir, stem).string() + " (run the spaces stage first)");
  Bundle b = load_bundle(dir, false);
  const auto before = b.current_hashes();
  json meta = read_metadata(dir);
  json timings = json::object();

  for (Category cat : {Category::chair, Category::table}) {
    std::vector<SketchImage> sketches;
    std::vector<VoxelGrid> grids;
    for (std::size_t i : dataset.indices(Split::train, cat)) {
      sketches.push_back(dataset.records[i].sketch);
      grids.push_back(dataset.records[i].grid);
    }
    if (sketches.empty()) throw DataError("no training shapes for category " + std::string(to_string(cat)));
    MapperConfig mc = config.mapper;
    mc.seed = io::derive_seed(config.mapper.seed, to_string(cat));
    LossLog log;
    const std::string stage = "mapper_" + std::string(to_string(cat));
    Clip2ShapeMapper m;
    timings[stage] = progress_log(stage.c_str(), mc.epochs,
                 [&](auto cb) { m = train_mapper(sketches, grids, b.embedding, b.space, mc, &log, cb); });
    nn::save_weights(m.net.weights(), dir / mapper_file(cat));
    io::write_file_atomic(dir / (stage + "_loss.txt"), format_loss_log(log));
    meta["hashes"][stage] = m.net.hash();
    meta["seeds"][stage] = mc.seed;
  }

  if (b.current_hashes() != before) throw StateError("frozen space parameters changed during mapper training");
  write_metadata(dir, meta);
  write_timings(dir, timings, true);
}

Bundle load_bundle(const fs::path& dir, bool require_mappers) {
  const json meta = read_metadata(dir);
  for (auto stem : kSpaceFiles)
    if (!fs::exists(weights_path(dir, stem))) throw StateError("missing bundle file " + weights_path(dir, stem).string());
  Bundle b;
  b.space.encoder = Model(nn::load_weights(weights_path(dir, "shape_encoder")));
  b.space.decoder = Model(nn::load_weights(weights_path(dir, "shape_decoder")));
  b.embedding.image_encoder = Model(nn::load_weights(weights_path(dir, "image_encoder")));
  b.embedding.text_encoder = Model(nn::load_weights(weights_path(dir, "text_encoder")));
  for (Model* m : {&b.space.encoder, &b.space.decoder, &b.embedding.image_encoder, &b.embedding.text_encoder})
    if (!m->frozen()) m->freeze();
  try {
    b.space.resolution = meta.at("R").get<int>();
    b.embedding.sketch_width = meta.at("W").get<int>();
    b.embedding.vocabulary = Vocabulary(meta.at("vocabulary").get<std::vector<std::string>>());
    for (const auto& [k, v] : meta.at("seeds").items()) b.seeds[k] = v.get<std::uint64_t>();
    for (const auto& [k, v] : meta.at("hashes").items()) b.hashes[k] = v.get<std::string>();
  } catch (const json::exception& e) {
    throw FormatError("bundle metadata: " + std::string(e.what()));
  }

  for (Category cat : {Category::chair, Category::table}) {
    const fs::path p = dir / mapper_file(cat);
    if (!fs::exists(p)) {
      if (require_mappers) throw StateError("missing bundle file " + p.string() + " (run the mapper stage)");
      continue;
    }
    Clip2ShapeMapper m{Model(nn::load_weights(p))};
    if (!m.net.frozen()) m.net.freeze();
    b.mappers.emplace(cat, std::move(m));
  }

  for (const auto& [name, h] : b.current_hashes()) {
    const auto it = b.hashes.find(name);
    if (it == b.hashes.end()) throw StateError("bundle metadata lacks a hash for " + name);
    if (it->second != h) throw StateError("hash mismatch for " + name + ": file " + h + ", metadata " + it->second);
  }
  return b;
}

}  // namespace shapex
