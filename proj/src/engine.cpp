#include "shapex/engine.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cmath>
#include <sstream>

#include "shapex/io.hpp"

namespace shapex {

using nlohmann::json;

std::string_view to_string(AlphaMode m) {
  switch (m) {
    case AlphaMode::fixed: return "fixed";
    case AlphaMode::sketch: return "sketch";
    case AlphaMode::candidates: return "candidates";
  }
  return "";
}

AlphaMode parse_alpha_mode(std::string_view s) {
  if (s == "fixed") return AlphaMode::fixed;
  if (s == "sketch") return AlphaMode::sketch;
  if (s == "candidates") return AlphaMode::candidates;
  throw DataError("unknown alpha policy: " + std::string(s));
}

// ------------------------------------------------------------------ case files

namespace {

PixelRect rect_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("rectangle must be [x, y, w, h]");
  return PixelRect{j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

json rect_to(const PixelRect& r) { return json::array({r.x, r.y, r.w, r.h}); }

EditStep edit_from(const json& j) {
  EditStep e;
  if (j.contains("erase_attribute")) {
    e.kind = EditStep::Kind::erase_attribute;
    e.attribute = parse_attribute(j.at("erase_attribute").get<std::string>());
  } else if (j.contains("erase_rect")) {
    e.kind = EditStep::Kind::erase_rect;
    e.rect = rect_from(j.at("erase_rect"));
  } else if (j.contains("segment")) {
    e.kind = EditStep::Kind::segment;
    const auto& s = j.at("segment");
    if (!s.is_array() || s.size() != 4) throw DataError("segment must be [x0, y0, x1, y1]");
    e.x0 = s[0].get<int>();
    e.y0 = s[1].get<int>();
    e.x1 = s[2].get<int>();
    e.y1 = s[3].get<int>();
  } else if (j.contains("paste")) {
    e.kind = EditStep::Kind::paste;
    const auto& p = j.at("paste");
    e.from_shape = p.at("from").get<std::string>();
    e.rect = rect_from(p.at("rect"));
    const auto& to = p.at("to");
    if (!to.is_array() || to.size() != 2) throw DataError("paste target must be [x, y]");
    e.x0 = to[0].get<int>();
    e.y0 = to[1].get<int>();
  } else {
    throw DataError("unknown sketch edit: " + j.dump());
  }
  return e;
}

json edit_to(const EditStep& e) {
  switch (e.kind) {
    case EditStep::Kind::erase_attribute: return {{"erase_attribute", to_string(e.attribute)}};
    case EditStep::Kind::erase_rect: return {{"erase_rect", rect_to(e.rect)}};
    case EditStep::Kind::segment: return {{"segment", json::array({e.x0, e.y0, e.x1, e.y1})}};
    case EditStep::Kind::paste:
      return {{"paste", {{"from", e.from_shape}, {"rect", rect_to(e.rect)}, {"to", json::array({e.x0, e.y0})}}}};
  }
  return {};
}

}  // namespace

ExploreCase parse_case(std::string_view line) {
  try {
    const json j = json::parse(line);
    ExploreCase c;
    c.id = j.at("id").get<std::string>();
    c.mode = parse_direction_mode(j.at("mode").get<std::string>());
    c.shape_id = j.at("shape").get<std::string>();
    if (j.contains("attribute")) c.attribute = parse_attribute(j["attribute"].get<std::string>());
    if (j.contains("sign")) c.sign = j["sign"].get<int>() >= 0 ? +1 : -1;
    if (c.mode == DirectionMode::text) {
      c.source_caption = j.at("source").get<std::string>();
      c.target_caption = j.at("target").get<std::string>();
    }
    if (c.mode == DirectionMode::binary && !c.attribute) throw DataError("binary case needs an attribute");
    if (j.contains("edits"))
      for (const auto& e : j["edits"]) c.edits.push_back(edit_from(e));
    if (c.mode == DirectionMode::sketch && c.edits.empty()) throw DataError("sketch case needs edits");
    c.alpha_mode = c.mode == DirectionMode::sketch ? AlphaMode::sketch : AlphaMode::fixed;
    if (j.contains("alpha_policy")) c.alpha_mode = parse_alpha_mode(j["alpha_policy"].get<std::string>());
    if (j.contains("alpha")) c.alpha = j["alpha"].get<double>();
    if (j.contains("planted_alpha")) c.planted_alpha = j["planted_alpha"].get<double>();
    return c;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed case: ") + e.what());
  }
}

std::string case_to_json(const ExploreCase& c) {
  json j = {{"id", c.id}, {"mode", to_string(c.mode)}, {"shape", c.shape_id}};
  if (c.attribute) j["attribute"] = to_string(*c.attribute);
  j["sign"] = c.sign;
  if (c.mode == DirectionMode::text) {
    j["source"] = c.source_caption;
    j["target"] = c.target_caption;
  }
  if (!c.edits.empty()) {
    j["edits"] = json::array();
    for (const auto& e : c.edits) j["edits"].push_back(edit_to(e));
  }
  j["alpha_policy"] = to_string(c.alpha_mode);
  if (c.alpha) j["alpha"] = *c.alpha;
  if (c.planted_alpha) j["planted_alpha"] = *c.planted_alpha;
  return j.dump();
}

std::vector<ExploreCase> read_cases(const std::filesystem::path& path) {
  std::istringstream in(io::read_file(path));
  std::vector<ExploreCase> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_case(line));
    } catch (const Error& e) {
      rethrow_with_context(e, path.string() + ":" + std::to_string(n));
    }
  }
  return out;
}

void write_cases(const std::filesystem::path& path, const std::vector<ExploreCase>& cases) {
  std::string out;
  for (const auto& c : cases) out += case_to_json(c) + "\n";
  io::write_file_atomic(path, out);
}

// -------------------------------------------------------------------- explorer

Explorer::Explorer(const Bundle& bundle, const Dataset& dataset, const RunConfig& config)
    : bundle_(bundle), dataset_(dataset), config_(config) {}

StartPoint Explorer::start_from_grid(const VoxelGrid& grid, const SketchImage& sketch, Category category) const {
  StartPoint s;
  s.category = category;
  s.sketch = sketch;
  s.initial = encode_image(bundle_.embedding, sketch);
  s.target = encode_shape(bundle_.space, grid);
  s.coopt = co_optimize(bundle_.mapper(category), s.initial, s.target, config_.coopt);
  s.start = decode_shape(bundle_.space, s.coopt.shape);
  return s;
}

StartPoint Explorer::start_from_shape(const ShapeRecord& record) const {
  return start_from_grid(record.grid, record.sketch, record.category);
}

StartPoint Explorer::start_from_sketch(const SketchImage& sketch, Category category) const {
  if (sketch.width() != bundle_.embedding.sketch_width)
    throw DataError("sketch must be " + std::to_string(bundle_.embedding.sketch_width) + "x" +
                    std::to_string(bundle_.embedding.sketch_width) + ", got " + std::to_string(sketch.width()));
  const ClipCode c = encode_image(bundle_.embedding, sketch);
  const VoxelGrid guess = decode_shape(bundle_.space, map_code(bundle_.mapper(category), c)).binarized(0.5f);
  return start_from_grid(guess, sketch, category);
}

const BinaryDirection& Explorer::binary_direction(Category category, Attribute attribute) const {
  if (!is_applicable(category, attribute))
    throw DataError("attribute " + std::string(to_string(attribute)) + " does not apply to " +
                    std::string(to_string(category)));
  std::lock_guard lock(mutex_);
  auto& slot = binary_[{category, attribute}];
  if (slot) return *slot;

  auto split_codes = [&](Split split) {
    std::vector<SketchImage> pos, neg;
    for (std::size_t i : dataset_.indices(split, category)) {
      const auto& r = dataset_.records[i];
      (r.spec.attributes.contains(attribute) ? pos : neg).push_back(r.sketch);
    }
    return std::pair{encode_images(bundle_.embedding, pos), encode_images(bundle_.embedding, neg)};
  };
  const auto [pos, neg] = split_codes(Split::train);
  auto out = std::make_unique<BinaryDirection>();
  out->svm = svm_train(pos, neg, config_.svm);
  out->direction = direction_from_binary(out->svm, std::string(to_string(attribute)));

  auto& st = out->stats;
  st.training_accuracy = out->svm.training_accuracy;
  st.warnings = out->svm.warnings;
  const auto [hpos, hneg] = split_codes(Split::val);
  st.positives = static_cast<std::size_t>(hpos.cols());
  st.negatives = static_cast<std::size_t>(hneg.cols());
  if (hpos.cols() > 1 && hneg.cols() > 1) {
    const Eigen::VectorXd pp = hpos.transpose() * out->direction.vector;
    const Eigen::VectorXd pn = hneg.transpose() * out->direction.vector;
    st.mean_positive = pp.mean();
    st.mean_negative = pn.mean();
    const double vp = (pp.array() - st.mean_positive).square().sum() / static_cast<double>(pp.size() - 1);
    const double vn = (pn.array() - st.mean_negative).square().sum() / static_cast<double>(pn.size() - 1);
    st.pooled_sd = std::sqrt(0.5 * (vp + vn));
    st.gap = st.pooled_sd > 0 ? (st.mean_positive - st.mean_negative) / st.pooled_sd : 0.0;
  }
  spdlog::info("svm {}/{}: accuracy {:.4f}, held-out gap {:.3f}", to_string(category), to_string(attribute),
               st.training_accuracy, st.gap);
  slot = std::move(out);
  return *slot;
}

SketchImage Explorer::apply_edits(const SketchImage& sketch, const ShapeRecord& record,
                                  const std::vector<EditStep>& edits) const {
  SketchImage out = sketch;
  const int R = record.grid.resolution();
  for (const auto& e : edits) {
    switch (e.kind) {
      case EditStep::Kind::erase_attribute:
        if (!record.spec.attributes.contains(e.attribute))
          throw DataError("shape " + record.id + " has no " + std::string(to_string(e.attribute)) + " to erase");
        for (const auto& rect : attribute_erase_rects(record.spec, e.attribute, R, out.width()))
          out = apply_sketch_edit(out, EraseRect{rect});
        break;
      case EditStep::Kind::erase_rect: out = apply_sketch_edit(out, EraseRect{e.rect}); break;
      case EditStep::Kind::segment: out = apply_sketch_edit(out, DrawSegment{e.x0, e.y0, e.x1, e.y1}); break;
      case EditStep::Kind::paste: {
        const auto& src = dataset_.find(e.from_shape);
        out = apply_sketch_edit(out, PastePatch{&src.sketch, e.rect, e.x0, e.y0});
        break;
      }
    }
  }
  return out;
}

std::vector<double> Explorer::alpha_grid() const {
  return shapex::alpha_grid(config_.alpha.min, config_.alpha.max, config_.alpha.count);
}

CaseOutcome Explorer::run_case(const ExploreCase& c) const {
  CaseOutcome o;
  o.id = c.id;
  o.mode = c.mode;
  o.shape_id = c.shape_id;
  o.sign = c.sign;
  if (c.attribute) o.attribute = std::string(to_string(*c.attribute));
  try {
    const ShapeRecord& rec = dataset_.find(c.shape_id);
    o.category = rec.category;
    const auto& F = bundle_.mapper(rec.category);
    const StartPoint sp = start_from_shape(rec);
    o.coopt_initial = sp.coopt.initial_loss;
    o.coopt_final = sp.coopt.final_loss;
    o.iou_mapped = iou(decode_shape(bundle_.space, map_code(F, sp.initial)), rec.grid);
    o.iou_coopt = iou(sp.start, rec.grid);

    Direction dir;
    ClipCode condition;
    SketchImage edited;
    switch (c.mode) {
      case DirectionMode::binary: {
        dir = binary_direction(rec.category, *c.attribute).direction;
        if (c.sign < 0) dir.vector = -dir.vector;
        AttributeSet want = rec.spec.attributes;
        if (c.sign > 0) want.insert(*c.attribute);
        else want.erase(*c.attribute);
        condition = encode_text(bundle_.embedding, caption_for(rec.category, want));
        break;
      }
      case DirectionMode::text:
        dir = direction_from_text(bundle_.embedding, c.source_caption, c.target_caption);
        condition = encode_text(bundle_.embedding, c.target_caption);
        break;
      case DirectionMode::sketch:
        edited = apply_edits(rec.sketch, rec, c.edits);
        dir = direction_from_sketch(bundle_.embedding, rec.sketch, edited);
        condition = encode_image(bundle_.embedding, edited);
        break;
    }
    o.direction_norm = dir.norm();

    std::vector<double> alphas;
    if (c.alpha_mode == AlphaMode::fixed) alphas = {0.0, c.alpha.value_or(config_.alpha.default_alpha)};
    else alphas = alpha_grid();
    o.candidates = explore_trajectory(F, bundle_.space, sp.coopt.code, dir, alphas, bundle_.embedding.sketch_width);

    std::size_t sel = 0;
    if (c.alpha_mode == AlphaMode::fixed) {
      sel = o.candidates.size() - 1;
    } else if (c.alpha_mode == AlphaMode::sketch) {
      ClipCode reference = condition;
      if (c.planted_alpha) {
        o.planted_alpha = *c.planted_alpha;
        const double pa = *c.planted_alpha;
        const auto planted = explore_trajectory(F, bundle_.space, sp.coopt.code, dir, std::span(&pa, 1),
                                                bundle_.embedding.sketch_width);
        reference = encode_image(bundle_.embedding, planted.front().sketch);
      }
      sel = select_alpha_by_sketch(o.candidates, bundle_.embedding, reference);
    } else {
      // Candidate policy: the caller picks; metrics use the configured default's neighbour.
      const double target = c.alpha.value_or(config_.alpha.default_alpha);
      for (std::size_t i = 0; i < o.candidates.size(); ++i)
        if (std::abs(o.candidates[i].alpha - target) < std::abs(o.candidates[sel].alpha - target)) sel = i;
    }
    o.selected = sel;
    const auto& chosen = o.candidates[sel];
    o.alpha = chosen.alpha;
    o.code_norm = chosen.code.values.norm();
    o.iou_result = iou(chosen.grid, rec.grid);
    const ClipCode render = encode_image(bundle_.embedding, chosen.sketch);
    o.clip_s = clip_similarity(render, condition);
    o.clip_s_input = clip_similarity(encode_image(bundle_.embedding, rec.sketch), condition);
    if (c.attribute) {
      const AttributeLabel label = attribute_label(rec.category, *c.attribute);
      o.oracle_input = attribute_score(rec.grid, label);
      o.oracle_start = attribute_score(sp.start.binarized(0.5f), label);
      o.oracle_result = attribute_score(chosen.grid.binarized(0.5f), label);
      o.flipped = attribute_flipped(rec.grid, chosen.grid, label, c.sign);
      o.moved = c.sign * (o.oracle_result - o.oracle_start) > 0.0;
    }
    o.ok = true;
  } catch (const Error& e) {
    o.ok = false;
    o.error = std::string(to_string(e.kind())) + ": " + e.what();
    spdlog::warn("case {} failed: {}", c.id, o.error);
  }
  return o;
}

// ---------------------------------------------------------------------- suites

namespace {

std::vector<const ShapeRecord*> test_shapes(const Dataset& d, Category cat, Attribute attr, bool has, std::size_t n) {
  std::vector<const ShapeRecord*> out;
  for (std::size_t i : d.indices(Split::test, cat)) {
    if (out.size() == n) break;
    if (d.records[i].spec.attributes.contains(attr) == has) out.push_back(&d.records[i]);
  }
  if (out.size() < n)
    throw DataError("test split has only " + std::to_string(out.size()) + " " + std::string(to_string(cat)) + "s " +
                    (has ? "with " : "without ") + std::string(to_string(attr)) + "; need " + std::to_string(n));
  return out;
}

}  // namespace

std::vector<ExploreCase> standard_suite(const Dataset& d, DirectionMode mode) {
  std::vector<ExploreCase> out;
  auto add = [&](const ShapeRecord* r, auto&& fill) {
    ExploreCase c;
    c.mode = mode;
    c.shape_id = r->id;
    c.id = std::string(to_string(mode)) + "_" + std::to_string(out.size());
    fill(c);
    out.push_back(std::move(c));
  };
  switch (mode) {
    case DirectionMode::binary:
      for (auto [cat, attr] : {std::pair{Category::chair, Attribute::armrest}, std::pair{Category::table, Attribute::drawer}})
        for (const auto* r : test_shapes(d, cat, attr, false, 25)) add(r, [&](ExploreCase& c) { c.attribute = attr; });
      break;
    case DirectionMode::text: {
      struct Pair {
        Category cat;
        Attribute attr;
        const char* source;
        const char* target;
        std::size_t n;
      };
      const Pair pairs[] = {{Category::chair, Attribute::armrest, "a plain chair", "a chair with armrests", 13},
                            {Category::chair, Attribute::stretcher, "a plain chair", "a chair with stretchers", 12},
                            {Category::table, Attribute::drawer, "a plain table", "a table with a drawer", 13},
                            {Category::table, Attribute::shelf, "a plain table", "a table with a shelf", 12}};
      for (const auto& p : pairs)
        for (const auto* r : test_shapes(d, p.cat, p.attr, false, p.n))
          add(r, [&](ExploreCase& c) {
            c.attribute = p.attr;
            c.source_caption = p.source;
            c.target_caption = p.target;
          });
      break;
    }
    case DirectionMode::sketch:
      // Armrests barely show in the front view, so both categories erase stretchers.
      for (auto [cat, attr] : {std::pair{Category::chair, Attribute::stretcher}, std::pair{Category::table, Attribute::stretcher}})
        for (const auto* r : test_shapes(d, cat, attr, true, 25))
          add(r, [&](ExploreCase& c) {
            c.attribute = attr;
            c.sign = -1;
            c.alpha_mode = AlphaMode::sketch;
            EditStep e;
            e.kind = EditStep::Kind::erase_attribute;
            e.attribute = attr;
            c.edits.push_back(e);
          });
      break;
  }
  return out;
}

std::vector<ExploreCase> planted_suite(const Dataset& d) {
  std::vector<ExploreCase> out;
  const auto chairs = test_shapes(d, Category::chair, Attribute::stretcher, true, 13);
  const auto tables = test_shapes(d, Category::table, Attribute::stretcher, true, 12);
  std::vector<std::pair<const ShapeRecord*, Attribute>> picks;
  for (const auto* r : chairs) picks.emplace_back(r, Attribute::stretcher);
  for (const auto* r : tables) picks.emplace_back(r, Attribute::stretcher);
  for (std::size_t k = 0; k < picks.size(); ++k) {
    ExploreCase c;
    c.id = "planted_" + std::to_string(k);
    c.mode = DirectionMode::sketch;
    c.shape_id = picks[k].first->id;
    c.attribute = picks[k].second;
    c.sign = -1;
    c.alpha_mode = AlphaMode::sketch;
    EditStep e;
    e.kind = EditStep::Kind::erase_attribute;
    e.attribute = picks[k].second;
    c.edits.push_back(e);
    // Off-grid values between grid points, spread over the range.
    c.planted_alpha = 0.25 + 0.5 * static_cast<double>(k % 12);
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace shapex
