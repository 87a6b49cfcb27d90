#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>

#include "shapex/error.hpp"
#include "shapex/shapegen.hpp"
#include "support.hpp"

using namespace shapex;

namespace {

ShapeSpec single_box(Vec3 center, Vec3 half) {
  ShapeSpec spec;
  PartPrimitive p;
  p.center = center;
  p.half_extents = half;
  spec.parts.push_back(p);
  return spec;
}

ShapeSpec without_role(ShapeSpec spec, PartRole role) {
  std::erase_if(spec.parts, [&](const PartPrimitive& p) { return p.role == role; });
  return spec;
}

bool specs_equal(const ShapeSpec& a, const ShapeSpec& b) {
  if (a.category != b.category || a.seed != b.seed || !(a.attributes == b.attributes)) return false;
  if (a.parts.size() != b.parts.size()) return false;
  for (std::size_t i = 0; i < a.parts.size(); ++i) {
    const auto& p = a.parts[i];
    const auto& q = b.parts[i];
    if (p.kind != q.kind || p.role != q.role || p.center != q.center || p.half_extents != q.half_extents) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("sample_spec is deterministic") {
  CHECK(specs_equal(sample_spec(7, Category::chair), sample_spec(7, Category::chair)));
  CHECK(specs_equal(sample_spec(7, Category::table), sample_spec(7, Category::table)));
  CHECK_FALSE(specs_equal(sample_spec(7, Category::chair), sample_spec(8, Category::chair)));
}

TEST_CASE("tables never carry chair-only attributes") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto spec = sample_spec(seed, Category::table);
    CHECK_FALSE(spec.attributes.contains(Attribute::armrest));
    CHECK_FALSE(spec.attributes.contains(Attribute::tall));
    CHECK_FALSE(spec.attributes.contains(Attribute::slatted_back));
  }
  CHECK_THROWS_AS(attribute_label(Category::table, Attribute::armrest), DataError);
}

TEST_CASE("parts lie inside the unit cube with positive extents") {
  for (Category cat : {Category::chair, Category::table})
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
      const auto spec = sample_spec(seed, cat);
      for (const auto& p : spec.parts)
        for (int k = 0; k < 3; ++k) {
          CHECK(p.half_extents[k] > 0.0);
          CHECK(p.center[k] - p.half_extents[k] >= 0.0);
          CHECK(p.center[k] + p.half_extents[k] <= 1.0);
        }
    }
}

TEST_CASE("attribute flags match the parts that were placed") {
  auto role_of = [](Attribute a) {
    switch (a) {
      case Attribute::armrest: return PartRole::armrest;
      case Attribute::stretcher: return PartRole::stretcher;
      case Attribute::drawer: return PartRole::drawer;
      case Attribute::shelf: return PartRole::shelf;
      case Attribute::slatted_back: return PartRole::slat;
      case Attribute::tall: break;
    }
    return PartRole::seat;
  };
  for (Category cat : {Category::chair, Category::table})
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
      const auto spec = sample_spec(seed, cat);
      for (Attribute a : applicable_attributes(cat)) {
        if (a == Attribute::tall) continue;
        const bool has_part = std::any_of(spec.parts.begin(), spec.parts.end(),
                                          [&](const PartPrimitive& p) { return p.role == role_of(a); });
        CHECK(has_part == spec.attributes.contains(a));
      }
    }
}

TEST_CASE("every attribute occurs in 30 to 70 percent of 4000 samples") {
  for (Category cat : {Category::chair, Category::table}) {
    std::map<Attribute, int> count;
    for (std::uint64_t seed = 0; seed < 4000; ++seed)
      for (Attribute a : sample_spec(seed * 7919 + 13, cat).attributes.sorted()) ++count[a];
    for (Attribute a : applicable_attributes(cat)) {
      INFO(to_string(cat), " ", to_string(a), " ", count[a]);
      CHECK(count[a] >= 1200);
      CHECK(count[a] <= 2800);
    }
  }
}

TEST_CASE("voxelize: full cube, empty spec and range errors") {
  const auto full = voxelize(single_box({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}), 16);
  CHECK(full.size() == 4096);
  CHECK(full.occupied_count() == 4096);
  const auto empty = voxelize(ShapeSpec{}, 16);
  CHECK(empty.occupied_count() == 0);
  CHECK_THROWS_AS(voxelize(ShapeSpec{}, 7), ConfigError);
  CHECK_THROWS_AS(voxelize(ShapeSpec{}, 33), ConfigError);
  CHECK_NOTHROW(voxelize(ShapeSpec{}, 8));
  CHECK_NOTHROW(voxelize(ShapeSpec{}, 32));
}

TEST_CASE("voxelize matches brute-force point-in-box enumeration") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.05, 0.3);
  for (int trial = 0; trial < 40; ++trial) {
    const Vec3 half{u(rng), u(rng), u(rng)};
    const Vec3 center{0.5, 0.5, 0.5};
    const int R = 8 + trial % 25;
    std::size_t expected = 0;
    for (int z = 0; z < R; ++z)
      for (int y = 0; y < R; ++y)
        for (int x = 0; x < R; ++x) {
          const double p[3] = {(x + 0.5) / R, (y + 0.5) / R, (z + 0.5) / R};
          bool in = true;
          for (int k = 0; k < 3; ++k) in = in && std::abs(p[k] - center[k]) <= half[k];
          expected += in;
        }
    CHECK(voxelize(single_box(center, half), R).occupied_count() == expected);
  }
  CHECK(voxelize(single_box({0.5, 0.5, 0.5}, {0.25, 0.25, 0.25}), 16).occupied_count() == 512);
}

TEST_CASE("voxel values are binary and sized R^3") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto g = voxelize(sample_spec(seed, seed % 2 ? Category::chair : Category::table), 16);
    CHECK(g.size() == 4096);
    for (float v : g.values()) CHECK((v == 0.0f || v == 1.0f));
  }
}

TEST_CASE("render_sketch: blank grid, determinism and box outline") {
  CHECK(render_sketch(VoxelGrid(16), 64).stroke_count() == 0);

  const auto g = voxelize(single_box({0.5, 0.5, 0.5}, {0.25, 0.25, 0.25}), 16);
  const auto s = render_sketch(g, 64);
  CHECK(s == render_sketch(g, 64));
  // The box spans cells 4..11 on x and z; each cell is 4 pixels wide.
  for (int v = 0; v < 64; ++v)
    for (int u = 0; u < 64; ++u) {
      const bool inside = u >= 16 && u < 48 && v >= 16 && v < 48;
      const bool border = inside && (u == 16 || u == 47 || v == 16 || v == 47);
      CHECK(s.at(u, v) == (border ? 1.0f : 0.0f));
    }
}

TEST_CASE("stroke pixels project onto occupied columns") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto cat = seed % 2 ? Category::chair : Category::table;
    const auto g = voxelize(sample_spec(seed, cat), 16);
    const auto s = render_sketch(g, 64);
    auto column_hit = [&](int x, int z) {
      if (x < 0 || z < 0 || x >= 16 || z >= 16) return false;
      for (int y = 0; y < 16; ++y)
        if (g.at(x, y, z) >= 0.5f) return true;
      return false;
    };
    for (int v = 0; v < 64; ++v)
      for (int u = 0; u < 64; ++u) {
        if (s.at(u, v) == 0.0f) continue;
        const int x = u * 16 / 64;
        const int z = 15 - v * 16 / 64;
        const bool ok = column_hit(x, z) || column_hit(x + 1, z) || column_hit(x - 1, z) || column_hit(x, z + 1) ||
                        column_hit(x, z - 1);
        CHECK(ok);
      }
  }
}

TEST_CASE("captions follow the template and canonical order") {
  AttributeSet a;
  a.insert(Attribute::armrest);
  CHECK(caption_for(Category::chair, a) == "a chair with armrests");
  CHECK(caption_for(Category::table, AttributeSet{}) == "a plain table");
  AttributeSet b;
  b.insert(Attribute::stretcher);
  b.insert(Attribute::armrest);
  CHECK(caption_for(Category::chair, b) == "a chair with armrests and stretchers");
  const auto spec = sample_spec(3, Category::table);
  CHECK(caption_for(spec) == caption_for(spec));
}

TEST_CASE("attribute score: empty, full and removal pairs") {
  const VoxelGrid zero(16, 0.0f), one(16, 1.0f);
  for (Category cat : {Category::chair, Category::table})
    for (Attribute a : applicable_attributes(cat)) {
      const auto label = attribute_label(cat, a);
      CHECK(attribute_score(zero, label) == 0.0);
      CHECK(attribute_score(one, label) == 1.0);
      for (int k = 0; k < 3; ++k) {
        CHECK(label.region.lo[k] >= 0.0);
        CHECK(label.region.hi[k] <= 1.0);
        CHECK(label.region.lo[k] < label.region.hi[k]);
      }
    }

  int checked = 0;
  const auto label = attribute_label(Category::chair, Attribute::armrest);
  for (std::uint64_t seed = 0; seed < 200 && checked < 20; ++seed) {
    const auto spec = sample_spec(seed, Category::chair);
    if (!spec.attributes.contains(Attribute::armrest)) continue;
    ++checked;
    CHECK(attribute_score(voxelize(spec), label) >= kAttributeThreshold);
    CHECK(attribute_score(voxelize(without_role(spec, PartRole::armrest)), label) < kAttributeThreshold);
  }
  CHECK(checked == 20);
}

TEST_CASE("oracle classification agrees with spec flags on 500 fresh specs") {
  std::size_t agree = 0, total = 0;
  for (std::uint64_t i = 0; i < 500; ++i) {
    const auto cat = i % 2 ? Category::chair : Category::table;
    const auto spec = sample_spec(1000003 + i * 31, cat);
    const auto g = voxelize(spec);
    bool all = true;
    for (Attribute a : applicable_attributes(cat))
      all = all && attribute_present(g, attribute_label(cat, a)) == spec.attributes.contains(a);
    agree += all;
    ++total;
  }
  CHECK(static_cast<double>(agree) / total >= 0.95);
}

TEST_CASE("sketch edits: full erase, vertical segment and bounds") {
  const auto base = render_sketch(voxelize(sample_spec(1, Category::chair)), 64);
  CHECK(apply_sketch_edit(base, EraseRect{{0, 0, 64, 64}}).stroke_count() == 0);
  CHECK(apply_sketch_edit(SketchImage(64), DrawSegment{10, 10, 10, 20}).stroke_count() == 11);
  CHECK(apply_sketch_edit(SketchImage(64), DrawSegment{3, 5, 40, 17}).stroke_count() == 38);
  CHECK_THROWS_AS(apply_sketch_edit(base, EraseRect{{60, 0, 5, 4}}), ArgumentError);
  CHECK_THROWS_AS(apply_sketch_edit(base, DrawSegment{0, 0, 64, 3}), ArgumentError);
  CHECK_THROWS_AS(apply_sketch_edit(base, PastePatch{nullptr, {0, 0, 4, 4}, 0, 0}), ArgumentError);
  const auto other = render_sketch(voxelize(sample_spec(2, Category::table)), 64);
  CHECK_THROWS_AS(apply_sketch_edit(base, PastePatch{&other, {0, 0, 8, 8}, 60, 60}), ArgumentError);

  const auto pasted = apply_sketch_edit(base, PastePatch{&other, {10, 12, 20, 9}, 30, 40});
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 20; ++x) CHECK(pasted.at(30 + x, 40 + y) == other.at(10 + x, 12 + y));
}

TEST_CASE("sketch edits change nothing outside their region") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> coord(0, 63);
  const auto other = render_sketch(voxelize(sample_spec(5, Category::table)), 64);
  for (int trial = 0; trial < 300; ++trial) {
    const auto base = render_sketch(voxelize(sample_spec(trial, trial % 2 ? Category::chair : Category::table)), 64);
    SketchEdit edit;
    const int kind = trial % 3;
    if (kind == 0) {
      const int x = coord(rng), y = coord(rng);
      edit = EraseRect{{x, y, std::uniform_int_distribution<int>(0, 64 - x)(rng),
                        std::uniform_int_distribution<int>(0, 64 - y)(rng)}};
    } else if (kind == 1) {
      edit = DrawSegment{coord(rng), coord(rng), coord(rng), coord(rng)};
    } else {
      const int w = std::uniform_int_distribution<int>(1, 20)(rng), h = std::uniform_int_distribution<int>(1, 20)(rng);
      edit = PastePatch{&other,
                        {std::uniform_int_distribution<int>(0, 64 - w)(rng),
                         std::uniform_int_distribution<int>(0, 64 - h)(rng), w, h},
                        std::uniform_int_distribution<int>(0, 64 - w)(rng),
                        std::uniform_int_distribution<int>(0, 64 - h)(rng)};
    }
    const auto out = apply_sketch_edit(base, edit);
    const auto region = edit_region(edit);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (!region.contains(x, y)) CHECK(out.at(x, y) == base.at(x, y));
  }
}

TEST_CASE("erasing a stretcher changes pixels only inside its rectangles") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 100 && checked < 10; ++seed) {
    const auto spec = sample_spec(seed, Category::chair);
    if (!spec.attributes.contains(Attribute::stretcher)) continue;
    ++checked;
    const auto base = render_sketch(voxelize(spec), 64);
    const auto rects = attribute_erase_rects(spec, Attribute::stretcher);
    REQUIRE_FALSE(rects.empty());
    SketchImage out = base;
    for (const auto& r : rects) out = apply_sketch_edit(out, EraseRect{r});
    int changed = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        if (out.at(x, y) == base.at(x, y)) continue;
        ++changed;
        CHECK(std::any_of(rects.begin(), rects.end(), [&](const PixelRect& r) { return r.contains(x, y); }));
      }
    CHECK(changed > 0);
  }
  CHECK(checked == 10);
}

TEST_CASE("voxel and PGM files round trip and reject corruption") {
  test::TempDir dir("shapegen");
  const auto g = voxelize(sample_spec(9, Category::chair));
  write_voxels(dir / "a.lxv", g);
  CHECK(read_voxels(dir / "a.lxv") == g);

  const auto s = render_sketch(g);
  write_pgm(dir / "a.pgm", s);
  CHECK(read_pgm(dir / "a.pgm") == s);
  const auto bytes = encode_pgm(s);
  CHECK(bytes.substr(0, 2) == "P5");
  CHECK(decode_pgm(bytes) == s);
  CHECK_THROWS_AS(decode_pgm("P2\n64 64\n255\n"), DataError);
  CHECK_THROWS_AS(decode_pgm(bytes.substr(0, bytes.size() - 1)), DataError);
  CHECK_THROWS_AS(decode_pgm("P5\n64 32\n255\n" + std::string(64 * 32, '\0')), DataError);

  {
    std::ofstream f(dir / "bad.lxv", std::ios::binary);
    f << "LXV2" << std::string(2 + 4096, '\0');
  }
  CHECK_THROWS_AS(read_voxels(dir / "bad.lxv"), FormatError);
  {
    std::ofstream f(dir / "short.lxv", std::ios::binary);
    f << "LXV1" << '\x10' << '\0' << std::string(100, '\0');
  }
  CHECK_THROWS_AS(read_voxels(dir / "short.lxv"), FormatError);
}

TEST_CASE("parse helpers reject unknown names") {
  CHECK(parse_category("chair") == Category::chair);
  CHECK(parse_attribute("slatted_back") == Attribute::slatted_back);
  CHECK_THROWS_AS(parse_category("sofa"), DataError);
  CHECK_THROWS_AS(parse_attribute("wheels"), DataError);
}
