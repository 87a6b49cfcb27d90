#pragma once

// Exploration cases end to end: start point (encode, map, co-optimize),
// direction for the case's mode, trajectory, alpha policy, and outcome metrics.

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "shapex/bundle.hpp"
#include "shapex/metrics.hpp"

namespace shapex {

struct StartPoint {
  Category category = Category::chair;
  SketchImage sketch;
  ClipCode initial;    // E_I(sketch)
  ShapeCode target;    // zbar
  CoOptResult coopt;   // c~ and F(c~)
  VoxelGrid start;     // decode(F(c~))
};

struct SeparationStats {
  double training_accuracy = 0.0;
  double mean_positive = 0.0;  // held-out projections onto the direction
  double mean_negative = 0.0;
  double pooled_sd = 0.0;
  double gap = 0.0;  // (mean_positive - mean_negative) / pooled_sd
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::vector<std::string> warnings;
};

struct BinaryDirection {
  Direction direction;
  SvmModel svm;
  SeparationStats stats;
};

struct EditStep {
  enum class Kind { erase_attribute, erase_rect, segment, paste };
  Kind kind = Kind::erase_rect;
  Attribute attribute = Attribute::armrest;  // erase_attribute
  PixelRect rect;                            // erase_rect; paste source rect
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;        // segment; paste target in (x0, y0)
  std::string from_shape;                    // paste source
};

enum class AlphaMode { fixed, sketch, candidates };
std::string_view to_string(AlphaMode m);
AlphaMode parse_alpha_mode(std::string_view s);

struct ExploreCase {
  std::string id;
  DirectionMode mode = DirectionMode::binary;
  std::string shape_id;
  std::optional<Attribute> attribute;  // binary: the SVM attribute; otherwise the oracle to score
  int sign = +1;
  std::string source_caption, target_caption;
  std::vector<EditStep> edits;
  AlphaMode alpha_mode = AlphaMode::fixed;
  std::optional<double> alpha;          // fixed policy; defaults to the configured value
  std::optional<double> planted_alpha;  // sketch policy: select against the render at this alpha
};

ExploreCase parse_case(std::string_view json_line);
std::string case_to_json(const ExploreCase& c);
std::vector<ExploreCase> read_cases(const std::filesystem::path& path);
void write_cases(const std::filesystem::path& path, const std::vector<ExploreCase>& cases);

struct CaseOutcome {
  std::string id;
  DirectionMode mode = DirectionMode::binary;
  std::string shape_id;
  Category category = Category::chair;
  std::string attribute;
  int sign = +1;
  bool ok = false;
  std::string error;

  double alpha = 0.0;
  std::optional<double> planted_alpha;
  double direction_norm = 0.0;
  double code_norm = 0.0;  // ||c(alpha)||
  double coopt_initial = 0.0, coopt_final = 0.0;
  double iou_mapped = 0.0;  // decode(F(c)) vs ground truth
  double iou_coopt = 0.0;   // decode(F(c~)) vs ground truth
  double iou_result = 0.0;  // selected candidate vs ground truth
  double clip_s = 0.0;        // selected render vs condition
  double clip_s_input = 0.0;  // input sketch vs condition
  double oracle_input = 0.0, oracle_start = 0.0, oracle_result = 0.0;
  bool flipped = false;
  bool moved = false;

  std::vector<TrajectoryCandidate> candidates;
  std::optional<std::size_t> selected;
};

class Explorer {
 public:
  Explorer(const Bundle& bundle, const Dataset& dataset, const RunConfig& config);

  const Bundle& bundle() const { return bundle_; }
  const Dataset& dataset() const { return dataset_; }
  const RunConfig& config() const { return config_; }

  StartPoint start_from_shape(const ShapeRecord& record) const;
  // For an uploaded sketch without geometry, zbar := E_S(binarize(D_S(F(c)))).
  StartPoint start_from_sketch(const SketchImage& sketch, Category category) const;
  StartPoint start_from_grid(const VoxelGrid& grid, const SketchImage& sketch, Category category) const;

  // Trained on the train split on first use; cached. Thread-safe.
  const BinaryDirection& binary_direction(Category category, Attribute attribute) const;

  SketchImage apply_edits(const SketchImage& sketch, const ShapeRecord& record, const std::vector<EditStep>& edits) const;
  std::vector<double> alpha_grid() const;

  CaseOutcome run_case(const ExploreCase& c) const;

 private:
  const Bundle& bundle_;
  const Dataset& dataset_;
  RunConfig config_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<Category, Attribute>, std::unique_ptr<BinaryDirection>> binary_;
};

// Standard suites over the test split; each has 25 chairs and 25 tables
// (the planted suite has 25 cases in total).
std::vector<ExploreCase> standard_suite(const Dataset& dataset, DirectionMode mode);
std::vector<ExploreCase> planted_suite(const Dataset& dataset);

}  // namespace shapex
