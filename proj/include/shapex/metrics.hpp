#pragma once

// Geometric and embedding metrics shared by evaluation and the service.

#include <span>
#include <string>
#include <vector>

#include "shapex/spaces.hpp"

namespace shapex {

// |A n B| / |A u B| after binarizing both at `threshold`; two empty grids give 1.
double iou(const VoxelGrid& a, const VoxelGrid& b, double threshold = 0.5);

// Cosine similarity; throws ArgumentError on a zero vector or a dimension mismatch.
double clip_similarity(const ClipCode& a, const ClipCode& b);

struct FlipCase {
  VoxelGrid input;
  VoxelGrid explored;
  Category category = Category::chair;
  std::string attribute;
  int sign = +1;  // +1: attribute should appear, -1: disappear
};

// Whether the explored grid lands on the intended side of the oracle
// threshold while the input was not already there.
bool attribute_flipped(const VoxelGrid& input, const VoxelGrid& explored, const AttributeLabel& label, int sign);

// Fraction of flipped cases; an empty list gives 0. Unknown attribute names
// throw DataError.
double attribute_flip_rate(std::span<const FlipCase> cases);

// Top-1 caption retrieval within consecutive batches of `batch` pairs. A
// sketch counts as retrieved when its best caption has the same text as its
// own (duplicate captions are indistinguishable). A trailing partial batch is
// dropped; fewer than `batch` pairs throw ArgumentError.
double retrieval_top1(const JointEmbedding& embedding, std::span<const SketchImage> sketches,
                      std::span<const std::string> captions, std::size_t batch = 32);

// Mean cosine of matched sketch-caption pairs minus the mean over pairs whose
// captions differ.
double modal_alignment_gap(const JointEmbedding& embedding, std::span<const SketchImage> sketches,
                           std::span<const std::string> captions);

}  // namespace shapex
