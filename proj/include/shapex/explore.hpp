#pragma once

// Exploration directions in the embedding space, affine tracing, trajectory
// materialization and sketch-driven step selection.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shapex/mapper.hpp"

namespace shapex {

enum class DirectionMode { binary, text, sketch };
std::string_view to_string(DirectionMode m);
DirectionMode parse_direction_mode(std::string_view s);

struct Direction {
  Eigen::VectorXd vector;
  DirectionMode mode = DirectionMode::binary;
  std::string metadata;
  bool unit = false;

  double norm() const { return vector.norm(); }
  bool degenerate() const { return vector.size() == 0 || vector.norm() == 0.0; }
};

struct SvmConfig {
  double lambda = 1e-3;
  int epochs = 50;
  std::uint64_t seed = 4;
};

struct SvmModel {
  Eigen::VectorXd weight;
  double bias = 0.0;
  double lambda = 0.0;
  double training_accuracy = 0.0;
  std::vector<std::string> warnings;

  double decision(const Eigen::VectorXd& x) const { return weight.dot(x) + bias; }
};

// L2-regularized hinge loss by Pegasos sub-gradient steps. `positives` and
// `negatives` hold one code per column.
SvmModel svm_train(const Eigen::MatrixXd& positives, const Eigen::MatrixXd& negatives, const SvmConfig& config = {});
SvmModel svm_train(std::span<const ClipCode> positives, std::span<const ClipCode> negatives,
                   const SvmConfig& config = {});

Direction direction_from_binary(const SvmModel& svm, std::string attribute = {});
Direction direction_from_text(const JointEmbedding& embedding, std::string_view source, std::string_view target);
Direction direction_from_sketch(const JointEmbedding& embedding, const SketchImage& source,
                                const SketchImage& target);

ClipCode trace_code(const ClipCode& start, const Direction& direction, double alpha);

struct TrajectoryCandidate {
  double alpha = 0.0;
  ClipCode code;
  ShapeCode shape;
  VoxelGrid grid;      // decoded probabilities
  SketchImage sketch;  // rendered from the binarized grid
  std::optional<double> similarity;
};

std::vector<TrajectoryCandidate> explore_trajectory(const Clip2ShapeMapper& mapper, const ShapeSpace& space,
                                                    const ClipCode& start, const Direction& direction,
                                                    std::span<const double> alphas,
                                                    int sketch_width = kDefaultSketchWidth);

// Uniform grid over [lo, hi] with `count` points.
std::vector<double> alpha_grid(double lo, double hi, int count);

// Re-encodes each candidate sketch and fills `similarity` with its cosine to
// the edited sketch code; returns the index of the best one (ties: smaller alpha).
std::size_t select_alpha_by_sketch(std::vector<TrajectoryCandidate>& candidates, const JointEmbedding& embedding,
                                   const ClipCode& edited);

}  // namespace shapex
