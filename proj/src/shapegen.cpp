#include "shapex/shapegen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

#include "shapex/error.hpp"
#include "shapex/io.hpp"

namespace shapex {

namespace {

constexpr std::array<Attribute, 4> kChairAttributes = {Attribute::armrest, Attribute::stretcher,
                                                      Attribute::tall, Attribute::slatted_back};
constexpr std::array<Attribute, 3> kTableAttributes = {Attribute::stretcher, Attribute::drawer,
                                                      Attribute::shelf};

// Shapes are laid out on a 16-cell lattice; part faces sit on cell
// boundaries so voxel centers never straddle a face at R = 16.
constexpr double kCell = 1.0 / 16.0;

PartPrimitive cell_box(PartRole role, int x0, int x1, int y0, int y1, int z0, int z1,
                       PartKind kind = PartKind::box) {
  PartPrimitive p;
  p.kind = kind;
  p.role = role;
  p.center = {0.5 * (x0 + x1) * kCell, 0.5 * (y0 + y1) * kCell, 0.5 * (z0 + z1) * kCell};
  p.half_extents = {0.5 * (x1 - x0) * kCell, 0.5 * (y1 - y0) * kCell, 0.5 * (z1 - z0) * kCell};
  return p;
}

Box3 cell_region(int x0, int x1, int y0, int y1, int z0, int z1) {
  return Box3{{x0 * kCell, y0 * kCell, z0 * kCell}, {x1 * kCell, y1 * kCell, z1 * kCell}};
}

class SpecSampler {
 public:
  explicit SpecSampler(std::uint64_t seed, Category category)
      : rng_(io::splitmix64(seed * 2 + static_cast<std::uint64_t>(category))) {}

  int pick(int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng_); }
  bool coin() { return std::bernoulli_distribution(0.5)(rng_); }

 private:
  std::mt19937_64 rng_;
};

void add_legs(std::vector<PartPrimitive>& parts, int x0, int x1, int y0, int y1, int height, int thick,
              bool round) {
  const PartKind kind = round ? PartKind::cylinder : PartKind::box;
  for (int xs : {x0, x1 - thick})
    for (int ys : {y0, y1 - thick})
      parts.push_back(cell_box(PartRole::leg, xs, xs + thick, ys, ys + thick, 0, height, kind));
}

ShapeSpec sample_chair(std::uint64_t seed) {
  SpecSampler s(seed, Category::chair);
  ShapeSpec spec;
  spec.category = Category::chair;
  spec.seed = seed;

  const int xs0 = s.pick(3, 4);
  const int xs1 = 16 - xs0;
  const int ys0 = s.pick(3, 4);
  const int ys1 = s.pick(12, 13);
  const int seat_z = s.pick(6, 7);
  const int leg = s.pick(1, 2);
  const bool round_legs = leg == 2 && s.coin();
  const bool tall = s.coin();
  const bool slatted = s.coin();
  const bool armrest = s.coin();
  const bool stretcher = s.coin();
  const int back_top = tall ? s.pick(15, 16) : s.pick(12, 13);
  const int stretcher_z = s.pick(2, 3);

  auto& parts = spec.parts;
  parts.push_back(cell_box(PartRole::seat, xs0, xs1, ys0, ys1, seat_z, seat_z + 1));
  add_legs(parts, xs0, xs1, ys0, ys1, seat_z, leg, round_legs);
  parts.push_back(cell_box(PartRole::back, xs0, xs0 + 1, ys0, ys0 + 1, seat_z + 1, back_top));
  parts.push_back(cell_box(PartRole::back, xs1 - 1, xs1, ys0, ys0 + 1, seat_z + 1, back_top));
  parts.push_back(cell_box(PartRole::back, xs0, xs1, ys0, ys0 + 1, back_top - 1, back_top));
  if (slatted) {
    for (auto [a, b] : {std::pair{5, 6}, std::pair{7, 9}, std::pair{10, 11}})
      parts.push_back(cell_box(PartRole::slat, a, b, ys0, ys0 + 1, seat_z + 1, back_top - 1));
  }
  if (armrest) {
    const int arm_z = seat_z + 3;
    for (int xa : {xs0, xs1 - 1}) {
      parts.push_back(cell_box(PartRole::armrest, xa, xa + 1, ys0 + 1, ys1, arm_z, arm_z + 1));
      parts.push_back(cell_box(PartRole::armrest, xa, xa + 1, ys1 - 1, ys1, seat_z + 1, arm_z));
    }
  }
  if (stretcher) {
    parts.push_back(cell_box(PartRole::stretcher, xs0, xs1, ys1 - 1, ys1, stretcher_z, stretcher_z + 1));
    parts.push_back(cell_box(PartRole::stretcher, xs0, xs1, ys0, ys0 + 1, stretcher_z, stretcher_z + 1));
    parts.push_back(cell_box(PartRole::stretcher, xs0, xs0 + 1, ys0, ys1, stretcher_z, stretcher_z + 1));
    parts.push_back(cell_box(PartRole::stretcher, xs1 - 1, xs1, ys0, ys1, stretcher_z, stretcher_z + 1));
  }

  if (armrest) spec.attributes.insert(Attribute::armrest);
  if (stretcher) spec.attributes.insert(Attribute::stretcher);
  if (tall) spec.attributes.insert(Attribute::tall);
  if (slatted) spec.attributes.insert(Attribute::slatted_back);
  return spec;
}

ShapeSpec sample_table(std::uint64_t seed) {
  SpecSampler s(seed, Category::table);
  ShapeSpec spec;
  spec.category = Category::table;
  spec.seed = seed;

  const int tx0 = s.pick(1, 2);
  const int tx1 = 16 - tx0;
  const int ty0 = s.pick(3, 4);
  const int ty1 = s.pick(12, 13);
  const int top_z = s.pick(9, 10);
  const int leg = s.pick(1, 2);
  const bool round_legs = leg == 2 && s.coin();
  const bool stretcher = s.coin();
  const bool drawer = s.coin();
  const bool shelf = s.coin();
  const int stretcher_z = s.pick(2, 3);
  const int shelf_z = s.pick(5, 6);

  auto& parts = spec.parts;
  parts.push_back(cell_box(PartRole::tabletop, tx0, tx1, ty0, ty1, top_z, top_z + 1));
  add_legs(parts, tx0, tx1, ty0, ty1, top_z, leg, round_legs);
  if (stretcher) {
    parts.push_back(cell_box(PartRole::stretcher, tx0, tx1, ty1 - 1, ty1, stretcher_z, stretcher_z + 1));
    parts.push_back(cell_box(PartRole::stretcher, tx0, tx1, ty0, ty0 + 1, stretcher_z, stretcher_z + 1));
  }
  if (shelf) {
    parts.push_back(cell_box(PartRole::shelf, tx0 + leg, tx1 - leg, ty0 + 1, ty1 - 1, shelf_z, shelf_z + 1));
  }
  if (drawer) {
    parts.push_back(cell_box(PartRole::drawer, 9, 12, ty0 + 1, ty1 - 1, top_z - 2, top_z));
  }

  if (stretcher) spec.attributes.insert(Attribute::stretcher);
  if (drawer) spec.attributes.insert(Attribute::drawer);
  if (shelf) spec.attributes.insert(Attribute::shelf);
  return spec;
}

std::string_view attribute_phrase(Attribute a) {
  switch (a) {
    case Attribute::armrest: return "armrests";
    case Attribute::stretcher: return "stretchers";
    case Attribute::drawer: return "a drawer";
    case Attribute::shelf: return "a shelf";
    case Attribute::tall: return "a tall back";
    case Attribute::slatted_back: return "a slatted back";
  }
  return "";
}

// Maps a pixel-space interval of the lattice to image coordinates.
int to_pixel(double coord, int width) { return static_cast<int>(std::lround(coord * width)); }

}  // namespace

std::string_view to_string(Category c) { return c == Category::chair ? "chair" : "table"; }

std::string_view to_string(Attribute a) {
  switch (a) {
    case Attribute::armrest: return "armrest";
    case Attribute::stretcher: return "stretcher";
    case Attribute::drawer: return "drawer";
    case Attribute::shelf: return "shelf";
    case Attribute::tall: return "tall";
    case Attribute::slatted_back: return "slatted_back";
  }
  return "";
}

std::string_view to_string(PartRole r) {
  switch (r) {
    case PartRole::seat: return "seat";
    case PartRole::back: return "back";
    case PartRole::leg: return "leg";
    case PartRole::armrest: return "armrest";
    case PartRole::stretcher: return "stretcher";
    case PartRole::tabletop: return "tabletop";
    case PartRole::drawer: return "drawer";
    case PartRole::shelf: return "shelf";
    case PartRole::slat: return "slat";
  }
  return "";
}

Category parse_category(std::string_view s) {
  if (s == "chair") return Category::chair;
  if (s == "table") return Category::table;
  throw DataError("unknown category: " + std::string(s));
}

Attribute parse_attribute(std::string_view s) {
  for (Attribute a : kAllAttributes)
    if (to_string(a) == s) return a;
  throw DataError("unknown attribute: " + std::string(s));
}

std::span<const Attribute> applicable_attributes(Category c) {
  if (c == Category::chair) return kChairAttributes;
  return kTableAttributes;
}

bool is_applicable(Category c, Attribute a) {
  auto attrs = applicable_attributes(c);
  return std::find(attrs.begin(), attrs.end(), a) != attrs.end();
}

bool Box3::contains(const Vec3& p) const {
  for (int i = 0; i < 3; ++i)
    if (p[i] < lo[i] || p[i] > hi[i]) return false;
  return true;
}

Box3 PartPrimitive::bounds() const {
  Box3 b;
  for (int i = 0; i < 3; ++i) {
    b.lo[i] = center[i] - half_extents[i];
    b.hi[i] = center[i] + half_extents[i];
  }
  return b;
}

bool PartPrimitive::contains(const Vec3& p) const {
  if (kind == PartKind::box) return bounds().contains(p);
  const double dx = (p[0] - center[0]) / half_extents[0];
  const double dy = (p[1] - center[1]) / half_extents[1];
  return dx * dx + dy * dy <= 1.0 && std::abs(p[2] - center[2]) <= half_extents[2];
}

std::vector<Attribute> AttributeSet::sorted() const {
  std::vector<Attribute> out;
  for (Attribute a : kAllAttributes)
    if (contains(a)) out.push_back(a);
  return out;
}

VoxelGrid::VoxelGrid(int resolution, float fill)
    : resolution_(resolution),
      values_(static_cast<std::size_t>(resolution) * resolution * resolution, fill) {}

VoxelGrid::VoxelGrid(int resolution, std::vector<float> values)
    : resolution_(resolution), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(resolution) * resolution * resolution)
    throw ArgumentError("voxel grid payload does not match resolution");
}

VoxelGrid VoxelGrid::binarized(float threshold) const {
  VoxelGrid out(resolution_);
  for (std::size_t i = 0; i < values_.size(); ++i) out.values_[i] = values_[i] >= threshold ? 1.0f : 0.0f;
  return out;
}

std::size_t VoxelGrid::occupied_count(float threshold) const {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(), [&](float v) { return v >= threshold; }));
}

SketchImage::SketchImage(int width, float fill)
    : width_(width), pixels_(static_cast<std::size_t>(width) * width, fill) {}

SketchImage::SketchImage(int width, std::vector<float> pixels) : width_(width), pixels_(std::move(pixels)) {
  if (pixels_.size() != static_cast<std::size_t>(width) * width)
    throw ArgumentError("sketch payload does not match width");
}

std::size_t SketchImage::stroke_count() const {
  return static_cast<std::size_t>(std::count_if(pixels_.begin(), pixels_.end(), [](float v) { return v >= 0.5f; }));
}

ShapeSpec sample_spec(std::uint64_t seed, Category category) {
  return category == Category::chair ? sample_chair(seed) : sample_table(seed);
}

VoxelGrid voxelize(const ShapeSpec& spec, int resolution) {
  if (resolution < 8 || resolution > 32)
    throw ConfigError("voxel resolution must lie in [8, 32], got " + std::to_string(resolution));
  VoxelGrid grid(resolution);
  const double step = 1.0 / resolution;
  for (int z = 0; z < resolution; ++z)
    for (int y = 0; y < resolution; ++y)
      for (int x = 0; x < resolution; ++x) {
        const Vec3 p{(x + 0.5) * step, (y + 0.5) * step, (z + 0.5) * step};
        for (const auto& part : spec.parts) {
          if (part.contains(p)) {
            grid.at(x, y, z) = 1.0f;
            break;
          }
        }
      }
  return grid;
}

SketchImage render_sketch(const VoxelGrid& grid, int width, double edge_threshold) {
  const int R = grid.resolution();
  if (R <= 0 || width <= 0) throw ArgumentError("render_sketch needs a non-empty grid and width");
  // Depth per image column; -1 marks a miss.
  std::vector<int> column_depth(static_cast<std::size_t>(R) * R, -1);
  for (int z = 0; z < R; ++z)
    for (int x = 0; x < R; ++x)
      for (int y = R - 1; y >= 0; --y)
        if (grid.at(x, y, z) >= 0.5f) {
          column_depth[static_cast<std::size_t>(z) * R + x] = R - 1 - y;
          break;
        }

  std::vector<int> depth(static_cast<std::size_t>(width) * width);
  for (int v = 0; v < width; ++v) {
    const int z = R - 1 - static_cast<int>((v + 0.5) * R / width);
    for (int u = 0; u < width; ++u) {
      const int x = static_cast<int>((u + 0.5) * R / width);
      depth[static_cast<std::size_t>(v) * width + u] = column_depth[static_cast<std::size_t>(z) * R + x];
    }
  }

  // A hit pixel is a stroke when a 4-neighbor misses (or lies outside the
  // image) or sits farther away by more than the edge threshold.
  SketchImage out(width);
  constexpr int kDu[4] = {1, -1, 0, 0};
  constexpr int kDv[4] = {0, 0, 1, -1};
  for (int v = 0; v < width; ++v)
    for (int u = 0; u < width; ++u) {
      const int d = depth[static_cast<std::size_t>(v) * width + u];
      if (d < 0) continue;
      bool edge = false;
      for (int k = 0; k < 4 && !edge; ++k) {
        const int nu = u + kDu[k];
        const int nv = v + kDv[k];
        if (nu < 0 || nv < 0 || nu >= width || nv >= width) {
          edge = true;
          break;
        }
        const int nd = depth[static_cast<std::size_t>(nv) * width + nu];
        if (nd < 0 || nd - d > edge_threshold) edge = true;
      }
      if (edge) out.at(u, v) = 1.0f;
    }
  return out;
}

std::string caption_for(Category category, const AttributeSet& attributes) {
  const auto attrs = attributes.sorted();
  std::string cat{to_string(category)};
  if (attrs.empty()) return "a plain " + cat;
  std::string out = "a " + cat + " with ";
  for (std::size_t i = 0; i < attrs.size(); ++i) {
    if (i) out += " and ";
    out += attribute_phrase(attrs[i]);
  }
  return out;
}

std::string caption_for(const ShapeSpec& spec) { return caption_for(spec.category, spec.attributes); }

AttributeLabel attribute_label(Category category, Attribute name) {
  if (!is_applicable(category, name))
    throw DataError("attribute " + std::string(to_string(name)) + " is not defined for category " +
                    std::string(to_string(category)));
  if (category == Category::chair) {
    switch (name) {
      case Attribute::armrest: return {name, cell_region(3, 5, 6, 11, 9, 11)};
      case Attribute::stretcher: return {name, cell_region(6, 10, 11, 13, 2, 4)};
      case Attribute::tall: return {name, cell_region(5, 11, 3, 5, 14, 16)};
      case Attribute::slatted_back: return {name, cell_region(5, 11, 3, 5, 9, 11)};
      default: break;
    }
  } else {
    switch (name) {
      case Attribute::stretcher: return {name, cell_region(6, 10, 11, 13, 2, 4)};
      case Attribute::shelf: return {name, cell_region(6, 10, 6, 10, 4, 7)};
      case Attribute::drawer: return {name, cell_region(10, 13, 6, 10, 7, 9)};
      default: break;
    }
  }
  throw DataError("no region for attribute " + std::string(to_string(name)));
}

double attribute_score(const VoxelGrid& grid, const AttributeLabel& label) {
  const int R = grid.resolution();
  const double step = 1.0 / R;
  double sum = 0.0;
  std::size_t count = 0;
  for (int z = 0; z < R; ++z)
    for (int y = 0; y < R; ++y)
      for (int x = 0; x < R; ++x) {
        const Vec3 p{(x + 0.5) * step, (y + 0.5) * step, (z + 0.5) * step};
        if (!label.region.contains(p)) continue;
        sum += grid.at(x, y, z);
        ++count;
      }
  return count ? sum / static_cast<double>(count) : 0.0;
}

bool attribute_present(const VoxelGrid& grid, const AttributeLabel& label, double threshold) {
  return attribute_score(grid, label) >= threshold;
}

namespace {

void check_rect(const PixelRect& r, int width, const char* what) {
  if (r.w < 0 || r.h < 0 || r.x < 0 || r.y < 0 || r.x + r.w > width || r.y + r.h > width)
    throw ArgumentError(std::string(what) + " rectangle out of image bounds");
}

void check_point(int x, int y, int width) {
  if (x < 0 || y < 0 || x >= width || y >= width) throw ArgumentError("segment endpoint out of image bounds");
}

}  // namespace

SketchImage apply_sketch_edit(const SketchImage& sketch, const SketchEdit& edit) {
  SketchImage out = sketch;
  const int W = sketch.width();
  if (const auto* e = std::get_if<EraseRect>(&edit)) {
    check_rect(e->rect, W, "erase");
    for (int y = e->rect.y; y < e->rect.y + e->rect.h; ++y)
      for (int x = e->rect.x; x < e->rect.x + e->rect.w; ++x) out.at(x, y) = 0.0f;
  } else if (const auto* d = std::get_if<DrawSegment>(&edit)) {
    check_point(d->x0, d->y0, W);
    check_point(d->x1, d->y1, W);
    // Bresenham.
    int x = d->x0, y = d->y0;
    const int dx = std::abs(d->x1 - d->x0), sx = d->x0 < d->x1 ? 1 : -1;
    const int dy = -std::abs(d->y1 - d->y0), sy = d->y0 < d->y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      out.at(x, y) = 1.0f;
      if (x == d->x1 && y == d->y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y += sy;
      }
    }
  } else {
    const auto& p = std::get<PastePatch>(edit);
    if (p.source == nullptr) throw ArgumentError("paste_patch needs a source sketch");
    check_rect(p.from, p.source->width(), "paste source");
    check_rect(PixelRect{p.to_x, p.to_y, p.from.w, p.from.h}, W, "paste destination");
    for (int j = 0; j < p.from.h; ++j)
      for (int i = 0; i < p.from.w; ++i) out.at(p.to_x + i, p.to_y + j) = p.source->at(p.from.x + i, p.from.y + j);
  }
  return out;
}

PixelRect edit_region(const SketchEdit& edit) {
  if (const auto* e = std::get_if<EraseRect>(&edit)) return e->rect;
  if (const auto* d = std::get_if<DrawSegment>(&edit)) {
    const int x = std::min(d->x0, d->x1), y = std::min(d->y0, d->y1);
    return {x, y, std::abs(d->x1 - d->x0) + 1, std::abs(d->y1 - d->y0) + 1};
  }
  const auto& p = std::get<PastePatch>(edit);
  return {p.to_x, p.to_y, p.from.w, p.from.h};
}

std::vector<PixelRect> attribute_erase_rects(const ShapeSpec& spec, Attribute attribute, int resolution,
                                             int width) {
  (void)resolution;
  PartRole role;
  switch (attribute) {
    case Attribute::armrest: role = PartRole::armrest; break;
    case Attribute::stretcher: role = PartRole::stretcher; break;
    case Attribute::drawer: role = PartRole::drawer; break;
    case Attribute::shelf: role = PartRole::shelf; break;
    case Attribute::slatted_back: role = PartRole::slat; break;
    case Attribute::tall: role = PartRole::back; break;
    default: role = PartRole::seat;
  }
  // Leg columns are kept intact; everything else inside the part's
  // projected x-z box is erased.
  std::vector<std::pair<double, double>> leg_spans;
  for (const auto& p : spec.parts)
    if (p.role == PartRole::leg) {
      const Box3 b = p.bounds();
      leg_spans.emplace_back(b.lo[0], b.hi[0]);
    }

  std::vector<PixelRect> rects;
  for (const auto& p : spec.parts) {
    if (p.role != role) continue;
    Box3 b = p.bounds();
    if (attribute == Attribute::tall) b.lo[2] = std::max(b.lo[2], 13.0 * kCell);
    if (b.hi[2] <= b.lo[2]) continue;
    std::vector<std::pair<double, double>> spans{{b.lo[0], b.hi[0]}};
    for (const auto& [l0, l1] : leg_spans) {
      std::vector<std::pair<double, double>> next;
      for (auto [s0, s1] : spans) {
        if (l1 <= s0 || l0 >= s1) {
          next.emplace_back(s0, s1);
          continue;
        }
        if (l0 > s0) next.emplace_back(s0, l0);
        if (l1 < s1) next.emplace_back(l1, s1);
      }
      spans = std::move(next);
    }
    const int row0 = to_pixel(1.0 - b.hi[2], width);
    const int row1 = to_pixel(1.0 - b.lo[2], width);
    for (auto [s0, s1] : spans) {
      const int col0 = to_pixel(s0, width);
      const int col1 = to_pixel(s1, width);
      if (col1 > col0 && row1 > row0) rects.push_back({col0, row0, col1 - col0, row1 - row0});
    }
  }
  return rects;
}

void write_voxels(const std::filesystem::path& path, const VoxelGrid& grid) {
  const int R = grid.resolution();
  std::string bytes = "LXV1";
  bytes.push_back(static_cast<char>(R & 0xFF));
  bytes.push_back(static_cast<char>((R >> 8) & 0xFF));
  bytes.reserve(bytes.size() + grid.size());
  for (float v : grid.values()) bytes.push_back(v >= 0.5f ? 1 : 0);
  io::write_file_atomic(path, bytes);
}

VoxelGrid read_voxels(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  if (bytes.size() < 6 || bytes.compare(0, 4, "LXV1") != 0) throw FormatError("bad voxel magic: " + path.string());
  const int R = static_cast<unsigned char>(bytes[4]) | (static_cast<unsigned char>(bytes[5]) << 8);
  const std::size_t n = static_cast<std::size_t>(R) * R * R;
  if (bytes.size() != 6 + n) throw FormatError("voxel payload length mismatch: " + path.string());
  std::vector<float> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto b = static_cast<unsigned char>(bytes[6 + i]);
    if (b > 1) throw FormatError("voxel byte outside {0,1}: " + path.string());
    values[i] = static_cast<float>(b);
  }
  return VoxelGrid(R, std::move(values));
}

std::string encode_pgm(const SketchImage& sketch) {
  const int W = sketch.width();
  std::string out = "P5\n" + std::to_string(W) + " " + std::to_string(W) + "\n255\n";
  for (float v : sketch.pixels())
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f))));
  return out;
}

SketchImage decode_pgm(std::string_view bytes) {
  // Header: "P5" whitespace width whitespace height whitespace maxval single-whitespace.
  std::size_t pos = 0;
  auto skip_ws = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&]() -> int {
    skip_ws();
    int v = 0;
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1 << 20) throw DataError("PGM header value too large");
      ++pos;
    }
    if (pos == start) throw DataError("malformed PGM header");
    return v;
  };
  if (bytes.size() < 2 || bytes.substr(0, 2) != "P5") throw DataError("sketch is not a binary PGM (P5)");
  pos = 2;
  const int w = read_int();
  const int h = read_int();
  const int maxval = read_int();
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw DataError("malformed PGM header");
  ++pos;
  if (w != h) throw DataError("sketch must be square, got " + std::to_string(w) + "x" + std::to_string(h));
  if (maxval <= 0 || maxval > 255) throw DataError("unsupported PGM maxval");
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() - pos != n) throw DataError("PGM payload length mismatch");
  std::vector<float> px(n);
  for (std::size_t i = 0; i < n; ++i) px[i] = static_cast<unsigned char>(bytes[pos + i]) / static_cast<float>(maxval);
  return SketchImage(w, std::move(px));
}

void write_pgm(const std::filesystem::path& path, const SketchImage& sketch) {
  io::write_file_atomic(path, encode_pgm(sketch));
}

SketchImage read_pgm(const std::filesystem::path& path) { return decode_pgm(io::read_file(path)); }

}  // namespace shapex
