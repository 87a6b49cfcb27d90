#include "shapex/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "shapex/io.hpp"

namespace shapex {

using nlohmann::json;

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string group_key(const CaseOutcome& o) {
  std::string k = std::string(to_string(o.mode)) + "/" + std::string(to_string(o.category));
  if (!o.attribute.empty()) k += "/" + o.attribute;
  if (o.planted_alpha) k += "/planted";
  return k;
}

std::vector<GroupAggregate> aggregate(const std::vector<CaseOutcome>& records, double grid_step) {
  std::map<std::string, std::vector<const CaseOutcome*>> groups;
  for (const auto& r : records) groups[group_key(r)].push_back(&r);
  std::vector<GroupAggregate> out;
  for (const auto& [key, rs] : groups) {
    GroupAggregate g;
    g.key = key;
    g.cases = rs.size();
    std::vector<double> init, fin;
    std::size_t ok = 0, flips = 0, moves = 0, gains = 0, recovered = 0;
    for (const auto* r : rs) {
      if (!r->ok) {
        ++g.failed;
        continue;
      }
      ++ok;
      g.mean_iou_coopt += r->iou_coopt;
      g.mean_iou_result += r->iou_result;
      g.mean_clip_s += r->clip_s;
      init.push_back(r->coopt_initial);
      fin.push_back(r->coopt_final);
      flips += r->flipped ? 1 : 0;
      moves += r->moved ? 1 : 0;
      gains += r->clip_s > r->clip_s_input ? 1 : 0;
      if (r->planted_alpha) {
        ++g.planted;
        recovered += std::abs(r->alpha - *r->planted_alpha) <= grid_step + 1e-9 ? 1 : 0;
      }
    }
    // Failed cases count against the rates.
    const double n = static_cast<double>(g.cases);
    if (ok) {
      g.mean_iou_coopt /= static_cast<double>(ok);
      g.mean_iou_result /= static_cast<double>(ok);
      g.mean_clip_s /= static_cast<double>(ok);
    }
    g.median_coopt_initial = median(init);
    g.median_coopt_final = median(fin);
    g.flip_rate = static_cast<double>(flips) / n;
    g.movement_rate = static_cast<double>(moves) / n;
    g.clip_s_gain_rate = static_cast<double>(gains) / n;
    g.planted_recovery = g.planted ? static_cast<double>(recovered) / static_cast<double>(g.planted) : 0.0;
    out.push_back(g);
  }
  return out;
}

EvalFingerprint fingerprint_of(const Bundle& bundle, const RunConfig& config) {
  EvalFingerprint f;
  f.hashes = bundle.current_hashes();
  f.seeds = bundle.seeds;
  // Output locations do not change results, so they stay out of the hash.
  RunConfig c = config;
  c.data_dir = c.bundle_dir = c.report_dir = std::filesystem::path();
  f.config_hash = io::sha256_hex(to_json(c));
  return f;
}

EvalReport run_eval(const std::vector<ExploreCase>& cases, const Explorer& explorer) {
  EvalReport r;
  r.fingerprint = fingerprint_of(explorer.bundle(), explorer.config());
  r.records.reserve(cases.size());
  for (const auto& c : cases) {
    CaseOutcome o = explorer.run_case(c);
    o.candidates.clear();
    r.records.push_back(std::move(o));
  }
  const auto& a = explorer.config().alpha;
  const double step = a.count > 1 ? (a.max - a.min) / (a.count - 1) : 0.0;
  r.aggregates = aggregate(r.records, step);
  return r;
}

std::string outcome_json(const CaseOutcome& o) {
  json j = {{"type", "case"},
            {"id", o.id},
            {"mode", to_string(o.mode)},
            {"shape", o.shape_id},
            {"category", to_string(o.category)},
            {"attribute", o.attribute},
            {"sign", o.sign},
            {"ok", o.ok}};
  if (!o.ok) {
    j["error"] = o.error;
    return j.dump();
  }
  j["alpha"] = o.alpha;
  if (o.planted_alpha) j["planted_alpha"] = *o.planted_alpha;
  j["direction_norm"] = o.direction_norm;
  j["code_norm"] = o.code_norm;
  j["coopt_initial"] = o.coopt_initial;
  j["coopt_final"] = o.coopt_final;
  j["iou_mapped"] = o.iou_mapped;
  j["iou_coopt"] = o.iou_coopt;
  j["iou_result"] = o.iou_result;
  j["clip_s"] = o.clip_s;
  j["clip_s_input"] = o.clip_s_input;
  j["oracle_input"] = o.oracle_input;
  j["oracle_start"] = o.oracle_start;
  j["oracle_result"] = o.oracle_result;
  j["flipped"] = o.flipped;
  j["moved"] = o.moved;
  return j.dump();
}

std::string report_jsonl(const EvalReport& r) {
  json fp = {{"type", "fingerprint"}, {"hashes", r.fingerprint.hashes}, {"seeds", r.fingerprint.seeds},
             {"config_hash", r.fingerprint.config_hash}};
  std::string out = fp.dump() + "\n";
  for (const auto& o : r.records) out += outcome_json(o) + "\n";
  for (const auto& g : r.aggregates) {
    json a = {{"type", "aggregate"},          {"group", g.key},
              {"cases", g.cases},             {"failed", g.failed},
              {"mean_iou_coopt", g.mean_iou_coopt}, {"mean_iou_result", g.mean_iou_result},
              {"mean_clip_s", g.mean_clip_s}, {"median_coopt_initial", g.median_coopt_initial},
              {"median_coopt_final", g.median_coopt_final}, {"flip_rate", g.flip_rate},
              {"movement_rate", g.movement_rate}, {"clip_s_gain_rate", g.clip_s_gain_rate}};
    if (g.planted) a["planted_recovery"] = g.planted_recovery;
    out += a.dump() + "\n";
  }
  return out;
}

std::string report_text(const EvalReport& r) {
  std::string out = "shapex evaluation report\n";
  out += "config " + r.fingerprint.config_hash.substr(0, 16) + "\n";
  for (const auto& [k, h] : r.fingerprint.hashes) out += "model " + k + " " + h.substr(0, 16) + "\n";
  out += "\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %-6s %-8s %6s %7s %7s %7s %7s %7s %5s %5s\n", "case", "shape", "attr", "alpha",
                "iou_c", "iou_r", "clip_s", "orc_0", "orc_a", "flip", "move");
  out += line;
  for (const auto& o : r.records) {
    if (!o.ok) {
      out += o.id + "  FAILED  " + o.error + "\n";
      continue;
    }
    std::snprintf(line, sizeof line, "%-14s %-6s %-8s %6.2f %7.4f %7.4f %7.4f %7.4f %7.4f %5s %5s\n", o.id.c_str(),
                  std::string(to_string(o.category)).c_str(), o.attribute.c_str(), o.alpha, o.iou_coopt, o.iou_result,
                  o.clip_s, o.oracle_start, o.oracle_result, o.flipped ? "yes" : "no", o.moved ? "yes" : "no");
    out += line;
  }
  out += "\n";
  for (const auto& g : r.aggregates) {
    out += g.key + ": cases " + std::to_string(g.cases) + ", failed " + std::to_string(g.failed) + ", iou(c~) " +
           fmt(g.mean_iou_coopt) + ", clip_s " + fmt(g.mean_clip_s) + ", flip " + fmt(g.flip_rate) + ", moved " +
           fmt(g.movement_rate) + ", clip_s gain " + fmt(g.clip_s_gain_rate) + ", co-opt median " +
           fmt(g.median_coopt_initial) + " -> " + fmt(g.median_coopt_final);
    if (g.planted) out += ", planted recovery " + fmt(g.planted_recovery);
    out += "\n";
  }
  return out;
}

void write_report(const EvalReport& report, const std::filesystem::path& stem) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  io::write_file_atomic(stem.string() + ".jsonl", report_jsonl(report));
  io::write_file_atomic(stem.string() + ".txt", report_text(report));
}

}  // namespace shapex
