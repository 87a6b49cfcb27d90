#include "shapex/explore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "shapex/io.hpp"

namespace shapex {

std::string_view to_string(DirectionMode m) {
  switch (m) {
    case DirectionMode::binary: return "binary";
    case DirectionMode::text: return "text";
    case DirectionMode::sketch: return "sketch";
  }
  return "";
}

DirectionMode parse_direction_mode(std::string_view s) {
  if (s == "binary") return DirectionMode::binary;
  if (s == "text") return DirectionMode::text;
  if (s == "sketch") return DirectionMode::sketch;
  throw DataError("unknown exploration mode: " + std::string(s));
}

namespace {

// Label-independent content key so that flipping the labels replays the
// same visiting order.
std::uint64_t content_key(const Eigen::VectorXd& x) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    std::uint64_t bits;
    const double v = x[i];
    std::memcpy(&bits, &v, sizeof bits);
    h = io::splitmix64(h ^ bits);
  }
  return h;
}

Eigen::MatrixXd stack(std::span<const ClipCode> codes) {
  if (codes.empty()) return {};
  Eigen::MatrixXd m(codes.front().dim(), static_cast<Eigen::Index>(codes.size()));
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (codes[i].dim() != m.rows()) throw ArgumentError("SVM inputs differ in dimension");
    m.col(static_cast<Eigen::Index>(i)) = codes[i].values;
  }
  return m;
}

}  // namespace

SvmModel svm_train(const Eigen::MatrixXd& positives, const Eigen::MatrixXd& negatives, const SvmConfig& config) {
  if (positives.cols() == 0 || negatives.cols() == 0) throw ArgumentError("SVM needs non-empty positive and negative sets");
  if (positives.rows() != negatives.rows()) throw ArgumentError("SVM classes differ in dimension");
  if (!(config.lambda > 0.0) || config.epochs <= 0) throw ConfigError("SVM needs lambda > 0 and epochs > 0");

  SvmModel model;
  model.lambda = config.lambda;
  const auto np = positives.cols(), nneg = negatives.cols();
  if (std::min(np, nneg) < 1000)
    model.warnings.push_back("fewer than 1000 samples in a class (" + std::to_string(np) + " positive, " +
                             std::to_string(nneg) + " negative)");
  if (static_cast<double>(std::max(np, nneg)) > 1.5 * static_cast<double>(std::min(np, nneg)))
    model.warnings.push_back("unbalanced classes (" + std::to_string(np) + " vs " + std::to_string(nneg) + ")");
  for (const auto& w : model.warnings) spdlog::warn("svm_train: {}", w);

  const Eigen::Index dim = positives.rows();
  struct Example {
    std::uint64_t key;
    Eigen::VectorXd x;
    double y;
  };
  std::vector<Example> data;
  data.reserve(static_cast<std::size_t>(np + nneg));
  for (Eigen::Index i = 0; i < np; ++i) data.push_back({content_key(positives.col(i)), positives.col(i), 1.0});
  for (Eigen::Index i = 0; i < nneg; ++i) data.push_back({content_key(negatives.col(i)), negatives.col(i), -1.0});
  std::stable_sort(data.begin(), data.end(), [](const Example& a, const Example& b) { return a.key < b.key; });

  // Bias is folded in as a constant feature.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(dim + 1);
  Eigen::VectorXd xa(dim + 1);
  const double radius = 1.0 / std::sqrt(config.lambda);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::uint64_t t = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      const auto& ex = data[idx];
      ++t;
      const double eta = 1.0 / (config.lambda * static_cast<double>(t));
      xa.head(dim) = ex.x;
      xa[dim] = 1.0;
      const bool violated = ex.y * w.dot(xa) < 1.0;
      w *= 1.0 - eta * config.lambda;
      if (violated) w += (eta * ex.y) * xa;
      const double n = w.norm();
      if (n > radius) w *= radius / n;
    }
  }
  model.weight = w.head(dim);
  model.bias = w[dim];
  if (!(model.weight.norm() > 0.0)) throw NumericError("degenerate SVM: weight vector is zero");

  std::size_t correct = 0;
  for (const auto& ex : data) correct += ex.y * model.decision(ex.x) > 0.0 ? 1 : 0;
  model.training_accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return model;
}

SvmModel svm_train(std::span<const ClipCode> positives, std::span<const ClipCode> negatives, const SvmConfig& config) {
  if (positives.empty() || negatives.empty()) throw ArgumentError("SVM needs non-empty positive and negative sets");
  return svm_train(stack(positives), stack(negatives), config);
}

Direction direction_from_binary(const SvmModel& svm, std::string attribute) {
  const double n = svm.weight.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw NumericError("degenerate SVM: cannot normalize the hyperplane normal");
  return Direction{svm.weight / n, DirectionMode::binary, std::move(attribute), true};
}

Direction direction_from_text(const JointEmbedding& embedding, std::string_view source, std::string_view target) {
  const ClipCode a = encode_text(embedding, source);
  const ClipCode b = encode_text(embedding, target);
  Direction d{b.values - a.values, DirectionMode::text, std::string(source) + " -> " + std::string(target), false};
  if (d.degenerate()) spdlog::warn("text direction is zero; tracing it is a no-op");
  return d;
}

Direction direction_from_sketch(const JointEmbedding& embedding, const SketchImage& source, const SketchImage& target) {
  if (source.width() != target.width()) throw ArgumentError("sketch pair differs in dimensions");
  const ClipCode a = encode_image(embedding, source);
  const ClipCode b = encode_image(embedding, target);
  Direction d{b.values - a.values, DirectionMode::sketch, "sketch edit", false};
  if (d.degenerate()) spdlog::warn("sketch direction is zero; tracing it is a no-op");
  return d;
}

ClipCode trace_code(const ClipCode& start, const Direction& direction, double alpha) {
  if (start.dim() != direction.vector.size()) throw ArgumentError("direction does not match code dimension");
  return ClipCode{start.values + alpha * direction.vector, false};
}

std::vector<double> alpha_grid(double lo, double hi, int count) {
  if (count < 1) throw ConfigError("alpha grid needs at least one point");
  if (count == 1) return {lo};
  std::vector<double> out(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
  return out;
}

std::vector<TrajectoryCandidate> explore_trajectory(const Clip2ShapeMapper& mapper, const ShapeSpace& space,
                                                    const ClipCode& start, const Direction& direction,
                                                    std::span<const double> alphas, int sketch_width) {
  if (alphas.empty()) throw ArgumentError("explore_trajectory needs at least one alpha");
  std::vector<double> sorted(alphas.begin(), alphas.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<TrajectoryCandidate> out;
  out.reserve(sorted.size());
  for (double alpha : sorted) {
    try {
      TrajectoryCandidate cand;
      cand.alpha = alpha;
      cand.code = trace_code(start, direction, alpha);
      cand.shape = map_code(mapper, cand.code);
      cand.grid = decode_shape(space, cand.shape);
      cand.sketch = render_sketch(cand.grid.binarized(0.5f), sketch_width);
      out.push_back(std::move(cand));
    } catch (const Error& e) {
      rethrow_with_context(e, "alpha " + std::to_string(alpha));
    }
  }
  return out;
}

std::size_t select_alpha_by_sketch(std::vector<TrajectoryCandidate>& candidates, const JointEmbedding& embedding,
                                   const ClipCode& edited) {
  if (candidates.empty()) throw ArgumentError("select_alpha_by_sketch needs candidates");
  const double en = edited.values.norm();
  if (!(en > 0.0)) throw ArgumentError("edited sketch code is zero");
  std::size_t best = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const ClipCode code = encode_image(embedding, candidates[i].sketch);
    const double sim = code.values.dot(edited.values) / (code.values.norm() * en);
    candidates[i].similarity = sim;
    const bool better = sim > *candidates[best].similarity ||
                        (sim == *candidates[best].similarity && candidates[i].alpha < candidates[best].alpha);
    if (i == 0 || better) best = i;
  }
  return best;
}

}  // namespace shapex
