#include "shapex/metrics.hpp"

#include <algorithm>
#include <map>

namespace shapex {

double iou(const VoxelGrid& a, const VoxelGrid& b, double threshold) {
  if (a.resolution() != b.resolution() || a.size() != b.size())
    throw ArgumentError("iou: resolutions differ (" + std::to_string(a.resolution()) + " vs " +
                        std::to_string(b.resolution()) + ")");
  const auto t = static_cast<float>(threshold);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.values()[i] >= t, y = b.values()[i] >= t;
    inter += (x && y) ? 1 : 0;
    uni += (x || y) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double clip_similarity(const ClipCode& a, const ClipCode& b) {
  if (a.dim() != b.dim()) throw ArgumentError("clip_similarity: dimensions differ");
  const double na = a.values.norm(), nb = b.values.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw ArgumentError("clip_similarity: zero vector");
  return std::clamp(a.values.dot(b.values) / (na * nb), -1.0, 1.0);
}

bool attribute_flipped(const VoxelGrid& input, const VoxelGrid& explored, const AttributeLabel& label, int sign) {
  const bool before = attribute_present(input, label);
  const bool after = attribute_present(explored.binarized(0.5f), label);
  return sign > 0 ? (after && !before) : (!after && before);
}

double attribute_flip_rate(std::span<const FlipCase> cases) {
  if (cases.empty()) return 0.0;
  std::size_t flipped = 0;
  for (const auto& c : cases) {
    const AttributeLabel label = attribute_label(c.category, parse_attribute(c.attribute));
    flipped += attribute_flipped(c.input, c.explored, label, c.sign) ? 1 : 0;
  }
  return static_cast<double>(flipped) / static_cast<double>(cases.size());
}

namespace {

void check_pairs(std::span<const SketchImage> sketches, std::span<const std::string> captions) {
  if (sketches.size() != captions.size())
    throw ArgumentError("sketch and caption counts differ (" + std::to_string(sketches.size()) + " vs " +
                        std::to_string(captions.size()) + ")");
}

// Unit text codes for each distinct caption.
std::map<std::string, Eigen::VectorXd> caption_codes(const JointEmbedding& e, std::span<const std::string> captions) {
  std::map<std::string, Eigen::VectorXd> out;
  for (const auto& c : captions)
    if (!out.count(c)) out[c] = encode_text(e, c).values.normalized();
  return out;
}

}  // namespace

double retrieval_top1(const JointEmbedding& embedding, std::span<const SketchImage> sketches,
                      std::span<const std::string> captions, std::size_t batch) {
  check_pairs(sketches, captions);
  if (batch == 0 || sketches.size() < batch)
    throw ArgumentError("retrieval needs at least one full batch of " + std::to_string(batch));
  const Eigen::MatrixXd img = encode_images(embedding, sketches);
  const auto text = caption_codes(embedding, captions);
  std::size_t hits = 0, total = 0;
  for (std::size_t s = 0; s + batch <= sketches.size(); s += batch) {
    for (std::size_t i = s; i < s + batch; ++i) {
      std::size_t best = s;
      double best_cos = -2.0;
      for (std::size_t j = s; j < s + batch; ++j) {
        const double c = img.col(static_cast<Eigen::Index>(i)).dot(text.at(captions[j]));
        if (c > best_cos) {
          best_cos = c;
          best = j;
        }
      }
      hits += captions[best] == captions[i] ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

double modal_alignment_gap(const JointEmbedding& embedding, std::span<const SketchImage> sketches,
                           std::span<const std::string> captions) {
  check_pairs(sketches, captions);
  const Eigen::MatrixXd img = encode_images(embedding, sketches);
  const auto text = caption_codes(embedding, captions);
  double matched = 0.0, mismatched = 0.0;
  std::size_t nm = 0, nx = 0;
  for (std::size_t i = 0; i < sketches.size(); ++i)
    for (const auto& [caption, code] : text) {
      const double c = img.col(static_cast<Eigen::Index>(i)).dot(code);
      if (caption == captions[i]) {
        matched += c;
        ++nm;
      } else {
        mismatched += c;
        ++nx;
      }
    }
  if (nm == 0 || nx == 0) throw ArgumentError("alignment needs at least two distinct captions");
  return matched / static_cast<double>(nm) - mismatched / static_cast<double>(nx);
}

}  // namespace shapex
