#include "shapex/config.hpp"

#include <json.hpp>

#include <set>

#include "shapex/io.hpp"

namespace shapex {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, std::string_view where, std::initializer_list<std::string_view> known) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + " must be an object");
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (auto k : known) ok = ok || key == k;
    if (!ok) throw ConfigError("unknown config key: " + std::string(where) + "." + key);
  }
}

template <class T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key ") + key + ": " + e.what());
  }
}

void read_path(const json& obj, const char* key, std::filesystem::path& out) {
  std::string s = out.string();
  read(obj, key, s);
  out = s;
}

}  // namespace

void RunConfig::resolve() {
  autoencoder.seed = io::derive_seed(seed, "autoencoder");
  embedding.seed = io::derive_seed(seed, "embedding");
  mapper.seed = io::derive_seed(seed, "mapper");
  svm.seed = io::derive_seed(seed, "svm");
  autoencoder.code_dim = shape_dim;
  embedding.clip_dim = clip_dim;
}

void RunConfig::validate() const {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  need(clip_dim > 0 && shape_dim > 0, "dims.m and dims.n must be positive");
  need(resolution >= 8 && resolution <= 32, "dims.R must lie in [8, 32]");
  need(sketch_width >= 8 && sketch_width <= 512, "dims.W must lie in [8, 512]");
  need(autoencoder.epochs >= 0 && embedding.epochs >= 0 && mapper.epochs >= 0, "epochs must be non-negative");
  need(autoencoder.batch > 0 && embedding.batch > 1 && mapper.batch > 0, "batch sizes must be positive");
  need(autoencoder.lr > 0 && embedding.lr > 0 && mapper.lr > 0 && coopt.lr > 0, "learning rates must be positive");
  need(embedding.temperature > 0, "embedding.temperature must be positive");
  need(mapper.layers >= 2 && mapper.hidden > 0, "mapper needs >= 2 layers and positive width");
  need(coopt.iterations >= 0, "coopt.iterations must be non-negative");
  need(svm.lambda > 0 && svm.epochs > 0, "svm.lambda and svm.epochs must be positive");
  need(alpha.count >= 1 && alpha.max >= alpha.min, "alpha grid must be non-empty and ordered");
}

DatasetConfig RunConfig::dataset() const {
  return DatasetConfig{chairs, tables, resolution, sketch_width, io::derive_seed(seed, "data")};
}

RunConfig default_config() {
  RunConfig c;
  c.autoencoder.epochs = 20;
  c.embedding.epochs = 5;
  c.resolve();
  return c;
}

RunConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, "config",
                 {"paths", "seed", "dims", "data", "autoencoder", "embedding", "mapper", "coopt", "svm", "alpha"});
  RunConfig c = default_config();
  read(j, "seed", c.seed);
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    reject_unknown(p, "paths", {"data_dir", "bundle_dir", "report_dir"});
    read_path(p, "data_dir", c.data_dir);
    read_path(p, "bundle_dir", c.bundle_dir);
    read_path(p, "report_dir", c.report_dir);
  }
  if (j.contains("dims")) {
    const auto& d = j["dims"];
    reject_unknown(d, "dims", {"m", "n", "R", "W"});
    read(d, "m", c.clip_dim);
    read(d, "n", c.shape_dim);
    read(d, "R", c.resolution);
    read(d, "W", c.sketch_width);
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    reject_unknown(d, "data", {"chairs", "tables"});
    read(d, "chairs", c.chairs);
    read(d, "tables", c.tables);
  }
  if (j.contains("autoencoder")) {
    const auto& a = j["autoencoder"];
    reject_unknown(a, "autoencoder", {"hidden", "epochs", "batch", "lr", "min_examples"});
    read(a, "hidden", c.autoencoder.hidden);
    read(a, "epochs", c.autoencoder.epochs);
    read(a, "batch", c.autoencoder.batch);
    read(a, "lr", c.autoencoder.lr);
    read(a, "min_examples", c.autoencoder.min_examples);
  }
  if (j.contains("embedding")) {
    const auto& e = j["embedding"];
    reject_unknown(e, "embedding",
                   {"image_hidden", "text_embed", "text_hidden", "epochs", "batch", "lr", "temperature", "min_examples"});
    read(e, "image_hidden", c.embedding.image_hidden);
    read(e, "text_embed", c.embedding.text_embed);
    read(e, "text_hidden", c.embedding.text_hidden);
    read(e, "epochs", c.embedding.epochs);
    read(e, "batch", c.embedding.batch);
    read(e, "lr", c.embedding.lr);
    read(e, "temperature", c.embedding.temperature);
    read(e, "min_examples", c.embedding.min_examples);
  }
  if (j.contains("mapper")) {
    const auto& m = j["mapper"];
    reject_unknown(m, "mapper", {"hidden", "layers", "epochs", "reference_epochs", "batch", "lr"});
    read(m, "hidden", c.mapper.hidden);
    read(m, "layers", c.mapper.layers);
    read(m, "epochs", c.mapper.epochs);
    read(m, "reference_epochs", c.mapper.reference_epochs);
    read(m, "batch", c.mapper.batch);
    read(m, "lr", c.mapper.lr);
  }
  if (j.contains("coopt")) {
    const auto& o = j["coopt"];
    reject_unknown(o, "coopt", {"iterations", "lr", "stop_loss"});
    read(o, "iterations", c.coopt.iterations);
    read(o, "lr", c.coopt.lr);
    read(o, "stop_loss", c.coopt.stop_loss);
  }
  if (j.contains("svm")) {
    const auto& s = j["svm"];
    reject_unknown(s, "svm", {"lambda", "epochs"});
    read(s, "lambda", c.svm.lambda);
    read(s, "epochs", c.svm.epochs);
  }
  if (j.contains("alpha")) {
    const auto& a = j["alpha"];
    reject_unknown(a, "alpha", {"default", "min", "max", "count"});
    read(a, "default", c.alpha.default_alpha);
    read(a, "min", c.alpha.min);
    read(a, "max", c.alpha.max);
    read(a, "count", c.alpha.count);
  }
  c.resolve();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  try {
    return parse_config(io::read_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string to_json(const RunConfig& c) {
  json j = {
      {"paths", {{"data_dir", c.data_dir.string()}, {"bundle_dir", c.bundle_dir.string()}, {"report_dir", c.report_dir.string()}}},
      {"seed", c.seed},
      {"dims", {{"m", c.clip_dim}, {"n", c.shape_dim}, {"R", c.resolution}, {"W", c.sketch_width}}},
      {"data", {{"chairs", c.chairs}, {"tables", c.tables}}},
      {"autoencoder",
       {{"hidden", c.autoencoder.hidden}, {"epochs", c.autoencoder.epochs}, {"batch", c.autoencoder.batch},
        {"lr", c.autoencoder.lr}, {"min_examples", c.autoencoder.min_examples}}},
      {"embedding",
       {{"image_hidden", c.embedding.image_hidden}, {"text_embed", c.embedding.text_embed},
        {"text_hidden", c.embedding.text_hidden}, {"epochs", c.embedding.epochs}, {"batch", c.embedding.batch},
        {"lr", c.embedding.lr}, {"temperature", c.embedding.temperature}, {"min_examples", c.embedding.min_examples}}},
      {"mapper",
       {{"hidden", c.mapper.hidden}, {"layers", c.mapper.layers}, {"epochs", c.mapper.epochs},
        {"reference_epochs", c.mapper.reference_epochs}, {"batch", c.mapper.batch}, {"lr", c.mapper.lr}}},
      {"coopt", {{"iterations", c.coopt.iterations}, {"lr", c.coopt.lr}, {"stop_loss", c.coopt.stop_loss}}},
      {"svm", {{"lambda", c.svm.lambda}, {"epochs", c.svm.epochs}}},
      {"alpha", {{"default", c.alpha.default_alpha}, {"min", c.alpha.min}, {"max", c.alpha.max}, {"count", c.alpha.count}}},
  };
  return j.dump(2) + "\n";
}

}  // namespace shapex
