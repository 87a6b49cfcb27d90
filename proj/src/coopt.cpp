#include "shapex/coopt.hpp"

#include <cmath>
#include <cstdio>
#include <limits>

namespace shapex {

CoOptResult co_optimize(const Clip2ShapeMapper& mapper, const ClipCode& start, const ShapeCode& target,
                        const CoOptConfig& config) {
  if (!mapper.net.frozen()) throw StateError("mapper must be frozen for co-optimization");
  const auto& net = mapper.net.inference();
  if (start.dim() != net.input_dim()) throw ArgumentError("start code does not match mapper input");
  if (target.dim() != net.output_dim()) throw ArgumentError("target shape code does not match mapper output");
  if (config.iterations < 0 || !(config.lr > 0.0)) throw ConfigError("co-optimization needs iterations >= 0 and lr > 0");

  Eigen::VectorXd c = start.values;
  nn::AdamState<double> adam(static_cast<std::size_t>(c.size()), nn::AdamConfig{.lr = config.lr});
  CoOptResult result;
  result.trace.reserve(static_cast<std::size_t>(config.iterations) + 1);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_code = c;
  Eigen::VectorXd best_shape;

  for (int it = 0;; ++it) {
    const auto tape = net.forward(c);
    const Eigen::VectorXd diff = tape.output.col(0) - target.values;
    const double loss = diff.squaredNorm();
    if (!std::isfinite(loss)) throw NumericError("non-finite co-optimization loss at iteration " + std::to_string(it), it);
    result.trace.emplace_back(it, loss);
    if (it == 0) result.initial_loss = loss;
    if (loss < best) {
      best = loss;
      best_code = c;
      best_shape = tape.output.col(0);
      result.best_iteration = it;
    }
    if (it >= config.iterations || loss < config.stop_loss) break;
    const auto grads = net.backward(tape, nn::Matrix<double>(2.0 * diff));
    const Eigen::VectorXd g = grads.input.col(0);
    adam.step(std::span<double>(c.data(), static_cast<std::size_t>(c.size())),
              std::span<const double>(g.data(), static_cast<std::size_t>(g.size())));
  }

  result.code = ClipCode{best_code, false};
  result.shape = ShapeCode{best_shape};
  result.final_loss = best;
  return result;
}

std::string format_loss_trace(const std::vector<std::pair<int, double>>& trace) {
  std::string out;
  char buf[64];
  for (const auto& [it, loss] : trace) {
    std::snprintf(buf, sizeof buf, "%d %.10g\n", it, loss);
    out += buf;
  }
  return out;
}

}  // namespace shapex
