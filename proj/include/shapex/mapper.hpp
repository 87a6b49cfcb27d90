#pragma once

// Regression network from the joint image-text space to the shape space.

#include <cstdint>
#include <span>

#include "shapex/spaces.hpp"

namespace shapex {

struct MapperConfig {
  int hidden = 256;
  int layers = 8;
  int epochs = 500;
  int reference_epochs = 5000;  // schedule the desk-scale default is scaled from
  int batch = 64;
  double lr = 1e-4;
  std::uint64_t seed = 3;
};

struct Clip2ShapeMapper {
  Model net;
  int clip_dim() const { return net.weights().input_dim(); }
  int shape_dim() const { return net.weights().output_dim(); }
};

// Layer specs of the mapper: input, residual hidden layers, linear output.
std::vector<nn::LayerSpec> mapper_layers(int clip_dim, int shape_dim, const MapperConfig& config);

// Minimizes mean ||F(c_i) - zbar_i||^2. Columns of `clip_codes` and
// `shape_codes` are paired samples.
Clip2ShapeMapper train_mapper(const Eigen::MatrixXd& clip_codes, const Eigen::MatrixXd& shape_codes,
                              const MapperConfig& config, LossLog* log = nullptr, const ProgressFn& progress = {});

// Encodes the training pairs with the frozen spaces first; both must be frozen.
Clip2ShapeMapper train_mapper(std::span<const SketchImage> sketches, std::span<const VoxelGrid> grids,
                              const JointEmbedding& embedding, const ShapeSpace& space, const MapperConfig& config,
                              LossLog* log = nullptr, const ProgressFn& progress = {});

// Inputs beyond this norm are passed through unchanged but logged.
inline constexpr double kLargeCodeNorm = 3.0;

ShapeCode map_code(const Clip2ShapeMapper& mapper, const ClipCode& code);

}  // namespace shapex
