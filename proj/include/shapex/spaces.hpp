#pragma once

// The two frozen spaces: a voxel autoencoder (shape space) and a contrastive
// sketch/caption embedding (joint image-text space).

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shapex/nn.hpp"
#include "shapex/shapegen.hpp"

namespace shapex {

struct ShapeCode {
  Eigen::VectorXd values;
  int dim() const { return static_cast<int>(values.size()); }
};

struct ClipCode {
  Eigen::VectorXd values;
  bool normalized = false;
  int dim() const { return static_cast<int>(values.size()); }
};

// A trained network plus its double-precision inference copy. Inference is
// only available once frozen.
class Model {
 public:
  Model() = default;
  explicit Model(nn::Network weights) : weights_(std::move(weights)) {
    if (weights_.frozen()) build_inference();
  }

  const nn::Network& weights() const { return weights_; }
  nn::Network& mutable_weights() {
    if (frozen()) throw StateError("model is frozen");
    return weights_;
  }
  bool frozen() const { return weights_.frozen(); }
  void freeze() {
    weights_.freeze();
    build_inference();
  }
  const nn::DenseNetwork<double>& inference() const {
    if (!frozen()) throw StateError("model must be frozen before inference");
    return inference_;
  }
  std::string hash() const { return nn::parameter_hash(weights_); }

 private:
  void build_inference() { inference_ = weights_.cast<double>(); }
  nn::Network weights_;
  nn::DenseNetwork<double> inference_;
};

using LossLog = std::vector<std::pair<int, double>>;
using ProgressFn = std::function<void(int epoch, double loss)>;

class Vocabulary {
 public:
  // The closed token set used by every caption.
  static Vocabulary standard();
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  int index_of(std::string_view token) const;  // throws DataError when unknown
  std::vector<std::string> tokenize(std::string_view caption) const;
  Eigen::VectorXf bag_of_tokens(std::string_view caption) const;

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> index_;
};

struct AutoencoderConfig {
  int code_dim = 32;
  int hidden = 512;
  int epochs = 200;
  int batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t min_examples = 1000;
};

struct ShapeSpace {
  Model encoder;  // R^3 occupancy -> shape code
  Model decoder;  // shape code -> per-voxel probabilities
  int resolution = kDefaultResolution;
  int code_dim() const { return encoder.weights().output_dim(); }
};

ShapeSpace train_shape_autoencoder(std::span<const VoxelGrid> grids, const AutoencoderConfig& config,
                                   LossLog* log = nullptr, const ProgressFn& progress = {});

ShapeCode encode_shape(const ShapeSpace& space, const VoxelGrid& grid);
VoxelGrid decode_shape(const ShapeSpace& space, const ShapeCode& code);

struct EmbeddingConfig {
  int clip_dim = 32;
  int image_hidden = 256;
  int text_embed = 64;
  int text_hidden = 128;
  int epochs = 300;
  int batch = 64;
  double lr = 1e-3;
  double temperature = 0.07;
  std::uint64_t seed = 2;
  std::size_t min_examples = 1000;
};

struct JointEmbedding {
  Model image_encoder;  // flattened sketch -> code (normalized outside the network)
  Model text_encoder;   // bag of tokens -> code
  Vocabulary vocabulary = Vocabulary::standard();
  int sketch_width = kDefaultSketchWidth;
  int clip_dim() const { return image_encoder.weights().output_dim(); }
};

JointEmbedding train_joint_embedding(std::span<const SketchImage> sketches, std::span<const std::string> captions,
                                     const EmbeddingConfig& config, LossLog* log = nullptr,
                                     const ProgressFn& progress = {});

ClipCode encode_image(const JointEmbedding& embedding, const SketchImage& sketch);
ClipCode encode_text(const JointEmbedding& embedding, std::string_view caption);

// Batched helpers for training downstream models and evaluation.
Eigen::MatrixXd encode_images(const JointEmbedding& embedding, std::span<const SketchImage> sketches);
Eigen::MatrixXd encode_shapes(const ShapeSpace& space, std::span<const VoxelGrid> grids);

}  // namespace shapex
