#include "shapex/mapper.hpp"

#include <algorithm>
#include <atomic>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "shapex/io.hpp"

namespace shapex {

std::vector<nn::LayerSpec> mapper_layers(int clip_dim, int shape_dim, const MapperConfig& config) {
  if (config.layers < 2) throw ConfigError("mapper needs at least two layers");
  using nn::Activation;
  std::vector<nn::LayerSpec> specs;
  specs.push_back({"map0", clip_dim, config.hidden, Activation::leaky_relu});
  for (int i = 1; i + 1 < config.layers; ++i)
    specs.push_back({"map" + std::to_string(i), config.hidden, config.hidden, Activation::leaky_relu, nn::kLeakySlope,
                     true});
  specs.push_back({"map" + std::to_string(config.layers - 1), config.hidden, shape_dim, Activation::identity});
  return specs;
}

Clip2ShapeMapper train_mapper(const Eigen::MatrixXd& clip_codes, const Eigen::MatrixXd& shape_codes,
                              const MapperConfig& config, LossLog* log, const ProgressFn& progress) {
  if (clip_codes.cols() != shape_codes.cols()) throw ArgumentError("mapper training pairs are misaligned");
  if (clip_codes.cols() == 0) throw ConfigError("mapper needs training pairs");
  if (config.batch <= 0 || config.epochs < 0) throw ConfigError("mapper batch/epochs must be positive");
  nn::FlushDenormals ftz;

  const nn::Matrix<float> inputs = clip_codes.cast<float>();
  const nn::Matrix<float> targets = shape_codes.cast<float>();
  nn::Network net = nn::Network::initialized(
      mapper_layers(static_cast<int>(clip_codes.rows()), static_cast<int>(shape_codes.rows()), config),
      io::splitmix64(config.seed * 16 + 1));
  nn::NetworkOptimizer<float> opt(net, nn::AdamConfig{.lr = config.lr});
  std::mt19937_64 rng(io::splitmix64(config.seed * 16 + 2));
  std::vector<std::size_t> order(static_cast<std::size_t>(clip_codes.cols()));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      const auto B = static_cast<Eigen::Index>(end - start);
      nn::Matrix<float> x(inputs.rows(), B), t(targets.rows(), B);
      for (Eigen::Index i = 0; i < B; ++i) {
        const auto c = static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(i)]);
        x.col(i) = inputs.col(c);
        t.col(i) = targets.col(c);
      }
      const auto tape = net.forward(x);
      const nn::Matrix<float> diff = tape.output - t;
      const double batch_loss = diff.cast<double>().colwise().squaredNorm().sum();
      if (!std::isfinite(batch_loss)) throw NumericError("non-finite mapper loss at epoch " + std::to_string(epoch), epoch);
      // d/dy of the batch mean of squared distances.
      const nn::Matrix<float> grad = diff * (2.0f / static_cast<float>(B));
      opt.step(net, net.backward(tape, grad));
      total += batch_loss;
    }
    const double mean = total / static_cast<double>(order.size());
    if (log) log->emplace_back(epoch, mean);
    if (progress) progress(epoch, mean);
  }

  Clip2ShapeMapper mapper{Model(std::move(net))};
  mapper.net.freeze();
  return mapper;
}

Clip2ShapeMapper train_mapper(std::span<const SketchImage> sketches, std::span<const VoxelGrid> grids,
                              const JointEmbedding& embedding, const ShapeSpace& space, const MapperConfig& config,
                              LossLog* log, const ProgressFn& progress) {
  if (!embedding.image_encoder.frozen()) throw StateError("image encoder must be frozen before mapper training");
  if (!space.encoder.frozen()) throw StateError("shape encoder must be frozen before mapper training");
  if (sketches.size() != grids.size()) throw ArgumentError("sketch and grid counts differ");
  return train_mapper(encode_images(embedding, sketches), encode_shapes(space, grids), config, log, progress);
}

ShapeCode map_code(const Clip2ShapeMapper& mapper, const ClipCode& code) {
  const auto& net = mapper.net.inference();
  if (code.dim() != net.input_dim())
    throw ArgumentError("clip code dimension " + std::to_string(code.dim()) + " does not match mapper input " +
                        std::to_string(net.input_dim()));
  const double norm = code.values.norm();
  if (norm > kLargeCodeNorm) {
    // Logged at powers of two so long sweeps do not flood the log.
    static std::atomic<std::uint64_t> seen{0};
    const auto n = ++seen;
    if ((n & (n - 1)) == 0) spdlog::warn("mapper input norm {:.3f} exceeds {} ({} such inputs so far)", norm, kLargeCodeNorm, n);
  }
  return ShapeCode{net.infer(code.values)};
}

}  // namespace shapex
