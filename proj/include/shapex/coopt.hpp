#pragma once

// Refines a starting embedding code so that its mapped shape code approaches
// the direct encoding of the shape. The mapper stays fixed.

#include <string>
#include <utility>
#include <vector>

#include "shapex/mapper.hpp"

namespace shapex {

struct CoOptConfig {
  int iterations = 2000;
  double lr = 2e-4;
  double stop_loss = 1e-6;
};

struct CoOptResult {
  ClipCode code;    // best iterate, normalized = false
  ShapeCode shape;  // F(code)
  std::vector<std::pair<int, double>> trace;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  int best_iteration = 0;
};

CoOptResult co_optimize(const Clip2ShapeMapper& mapper, const ClipCode& start, const ShapeCode& target,
                        const CoOptConfig& config = {});

// Two-column "iteration loss" text.
std::string format_loss_trace(const std::vector<std::pair<int, double>>& trace);

}  // namespace shapex
