#pragma once

#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "shapex/bundle.hpp"
#include "shapex/config.hpp"
#include "shapex/engine.hpp"
#include "shapex/mapper.hpp"
#include "shapex/spaces.hpp"

namespace shapex::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("shapex_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Small sizes and schedules so that a whole train/eval pipeline runs in
// seconds; the dataset keeps every category and split populated.
inline RunConfig tiny_config(const std::filesystem::path& root) {
  RunConfig c = default_config();
  c.data_dir = root / "data";
  c.bundle_dir = root / "bundle";
  c.report_dir = root / "reports";
  c.seed = 5;
  c.clip_dim = 8;
  c.shape_dim = 8;
  c.chairs = 120;
  c.tables = 120;
  c.autoencoder.hidden = 32;
  c.autoencoder.epochs = 3;
  c.autoencoder.min_examples = 0;
  c.embedding.image_hidden = 32;
  c.embedding.text_embed = 8;
  c.embedding.text_hidden = 16;
  c.embedding.epochs = 3;
  c.embedding.batch = 16;
  c.embedding.min_examples = 0;
  c.mapper.hidden = 16;
  c.mapper.epochs = 2;
  c.mapper.batch = 16;
  c.coopt.iterations = 20;
  c.svm.epochs = 5;
  c.alpha.count = 5;
  c.resolve();
  c.validate();
  return c;
}

// A trained tiny bundle on disk plus an Explorer over it; built once per
// test binary.
struct TinyPipeline {
  TempDir root{"pipeline"};
  RunConfig config;
  Dataset dataset;
  Bundle bundle;
  std::unique_ptr<Explorer> explorer;

  static TinyPipeline& get() {
    static TinyPipeline p;
    return p;
  }

 private:
  TinyPipeline() {
    config = tiny_config(root.path());
    dataset = generate_dataset(config.dataset());
    train_spaces_stage(config, dataset, config.bundle_dir);
    train_mapper_stage(config, dataset, config.bundle_dir);
    bundle = load_bundle(config.bundle_dir);
    explorer = std::make_unique<Explorer>(bundle, dataset, config);
  }
};

// Small frozen models trained on a few dozen shapes; enough structure for
// contract tests, far too little for quality checks.
struct TinyWorld {
  std::vector<ShapeSpec> specs;
  std::vector<VoxelGrid> grids;
  std::vector<SketchImage> sketches;
  std::vector<std::string> captions;
  ShapeSpace space;
  JointEmbedding embedding;
  Clip2ShapeMapper mapper;

  static const TinyWorld& get() {
    static const TinyWorld world = build();
    return world;
  }

 private:
  static TinyWorld build() {
    TinyWorld w;
    for (std::uint64_t i = 0; i < 96; ++i) {
      w.specs.push_back(sample_spec(i, i % 2 ? Category::table : Category::chair));
      w.grids.push_back(voxelize(w.specs.back()));
      w.sketches.push_back(render_sketch(w.grids.back()));
      w.captions.push_back(caption_for(w.specs.back()));
    }
    AutoencoderConfig ac;
    ac.code_dim = 8;
    ac.hidden = 32;
    ac.epochs = 4;
    ac.min_examples = 0;
    w.space = train_shape_autoencoder(w.grids, ac);
    EmbeddingConfig ec;
    ec.clip_dim = 8;
    ec.image_hidden = 32;
    ec.text_embed = 8;
    ec.text_hidden = 16;
    ec.epochs = 4;
    ec.batch = 16;
    ec.min_examples = 0;
    w.embedding = train_joint_embedding(w.sketches, w.captions, ec);
    MapperConfig mc;
    mc.hidden = 16;
    mc.epochs = 3;
    mc.batch = 16;
    w.mapper = train_mapper(w.sketches, w.grids, w.embedding, w.space, mc);
    return w;
  }
};

}  // namespace shapex::test
