#pragma once

// Procedural furniture family: specs, voxelization, front-view line sketches,
// template captions and regional attribute oracles.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace shapex {

enum class Category { chair, table };
enum class PartKind { box, cylinder };
enum class PartRole { seat, back, leg, armrest, stretcher, tabletop, drawer, shelf, slat };

// Canonical order; captions list attribute phrases in this order.
enum class Attribute { armrest, stretcher, drawer, shelf, tall, slatted_back };

inline constexpr std::array<Attribute, 6> kAllAttributes = {
    Attribute::armrest, Attribute::stretcher, Attribute::drawer,
    Attribute::shelf,   Attribute::tall,      Attribute::slatted_back};

std::string_view to_string(Category c);
std::string_view to_string(Attribute a);
std::string_view to_string(PartRole r);
Category parse_category(std::string_view s);
Attribute parse_attribute(std::string_view s);

// Attributes a category can carry; the others never occur for it.
std::span<const Attribute> applicable_attributes(Category c);
bool is_applicable(Category c, Attribute a);

using Vec3 = std::array<double, 3>;

struct Box3 {
  Vec3 lo{};
  Vec3 hi{};
  bool contains(const Vec3& p) const;
};

// Cylinders are vertical (axis along z) with an elliptical cross-section
// given by half_extents[0], half_extents[1].
struct PartPrimitive {
  PartKind kind = PartKind::box;
  Vec3 center{};
  Vec3 half_extents{};
  PartRole role = PartRole::seat;

  Box3 bounds() const;
  bool contains(const Vec3& p) const;
};

class AttributeSet {
 public:
  AttributeSet() = default;
  void insert(Attribute a) { bits_ |= bit(a); }
  void erase(Attribute a) { bits_ &= ~bit(a); }
  bool contains(Attribute a) const { return (bits_ & bit(a)) != 0; }
  bool empty() const { return bits_ == 0; }
  std::vector<Attribute> sorted() const;
  friend bool operator==(const AttributeSet&, const AttributeSet&) = default;

 private:
  static std::uint8_t bit(Attribute a) { return static_cast<std::uint8_t>(1u << static_cast<int>(a)); }
  std::uint8_t bits_ = 0;
};

struct ShapeSpec {
  Category category = Category::chair;
  std::vector<PartPrimitive> parts;
  AttributeSet attributes;
  std::uint64_t seed = 0;
};

struct AttributeLabel {
  Attribute name;
  Box3 region;
};

class VoxelGrid {
 public:
  VoxelGrid() = default;
  explicit VoxelGrid(int resolution, float fill = 0.0f);
  VoxelGrid(int resolution, std::vector<float> values);

  int resolution() const { return resolution_; }
  std::size_t size() const { return values_.size(); }
  // x-fastest ordering: index = x + R * (y + R * z).
  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(resolution_) *
               (static_cast<std::size_t>(y) + static_cast<std::size_t>(resolution_) * static_cast<std::size_t>(z));
  }
  float at(int x, int y, int z) const { return values_[index(x, y, z)]; }
  float& at(int x, int y, int z) { return values_[index(x, y, z)]; }
  std::span<const float> values() const { return values_; }
  std::span<float> values() { return values_; }
  VoxelGrid binarized(float threshold = 0.5f) const;
  std::size_t occupied_count(float threshold = 0.5f) const;
  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;

 private:
  int resolution_ = 0;
  std::vector<float> values_;
};

class SketchImage {
 public:
  SketchImage() = default;
  explicit SketchImage(int width, float fill = 0.0f);
  SketchImage(int width, std::vector<float> pixels);

  int width() const { return width_; }
  // (x = column, y = row); row 0 is the top of the image.
  float at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  float& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const float> pixels() const { return pixels_; }
  std::size_t stroke_count() const;
  friend bool operator==(const SketchImage&, const SketchImage&) = default;

 private:
  int width_ = 0;
  std::vector<float> pixels_;
};

inline constexpr int kDefaultResolution = 16;
inline constexpr int kDefaultSketchWidth = 64;
inline constexpr double kEdgeThreshold = 2.0;      // voxel depths
inline constexpr double kAttributeThreshold = 0.15;

ShapeSpec sample_spec(std::uint64_t seed, Category category);

VoxelGrid voxelize(const ShapeSpec& spec, int resolution = kDefaultResolution);

// Orthographic front view along -y. Occupancy is tested at >= 0.5.
SketchImage render_sketch(const VoxelGrid& grid, int width = kDefaultSketchWidth,
                          double edge_threshold = kEdgeThreshold);

std::string caption_for(const ShapeSpec& spec);
std::string caption_for(Category category, const AttributeSet& attributes);

AttributeLabel attribute_label(Category category, Attribute name);
double attribute_score(const VoxelGrid& grid, const AttributeLabel& label);
bool attribute_present(const VoxelGrid& grid, const AttributeLabel& label,
                       double threshold = kAttributeThreshold);

// Sketch edits. Rectangles are half-open: [x, x + w) x [y, y + h).
struct PixelRect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;
  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
};

struct EraseRect {
  PixelRect rect;
};
struct DrawSegment {
  int x0, y0, x1, y1;
};
struct PastePatch {
  const SketchImage* source = nullptr;
  PixelRect from;
  int to_x = 0;
  int to_y = 0;
};
using SketchEdit = std::variant<EraseRect, DrawSegment, PastePatch>;

SketchImage apply_sketch_edit(const SketchImage& sketch, const SketchEdit& edit);
// Bounding rectangle of every pixel the edit may touch.
PixelRect edit_region(const SketchEdit& edit);

// Image rectangles covering the visible strokes of an attribute's parts,
// excluding leg columns; used to build "remove this part" edits.
std::vector<PixelRect> attribute_erase_rects(const ShapeSpec& spec, Attribute attribute,
                                             int resolution = kDefaultResolution,
                                             int width = kDefaultSketchWidth);

// File formats.
void write_voxels(const std::filesystem::path& path, const VoxelGrid& grid);
VoxelGrid read_voxels(const std::filesystem::path& path);
std::string encode_pgm(const SketchImage& sketch);
SketchImage decode_pgm(std::string_view bytes);
void write_pgm(const std::filesystem::path& path, const SketchImage& sketch);
SketchImage read_pgm(const std::filesystem::path& path);

}  // namespace shapex
