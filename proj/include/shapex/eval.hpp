#pragma once

// Evaluation harness: runs exploration cases against a bundle and writes a
// human-readable table plus machine-readable per-case lines.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "shapex/engine.hpp"

namespace shapex {

struct EvalFingerprint {
  std::map<std::string, std::string> hashes;
  std::map<std::string, std::uint64_t> seeds;
  std::string config_hash;
};

// Aggregates over one (mode, category, attribute) group.
struct GroupAggregate {
  std::string key;
  std::size_t cases = 0;
  std::size_t failed = 0;
  double mean_iou_coopt = 0.0;
  double mean_iou_result = 0.0;
  double mean_clip_s = 0.0;
  double median_coopt_initial = 0.0;
  double median_coopt_final = 0.0;
  double flip_rate = 0.0;
  double movement_rate = 0.0;
  double clip_s_gain_rate = 0.0;  // clip_s > clip_s_input
  double planted_recovery = 0.0;  // fraction with |alpha - planted| within one grid step
  std::size_t planted = 0;
};

struct EvalReport {
  EvalFingerprint fingerprint;
  std::vector<CaseOutcome> records;
  std::vector<GroupAggregate> aggregates;
};

std::string group_key(const CaseOutcome& o);
std::vector<GroupAggregate> aggregate(const std::vector<CaseOutcome>& records, double grid_step);

EvalFingerprint fingerprint_of(const Bundle& bundle, const RunConfig& config);

EvalReport run_eval(const std::vector<ExploreCase>& cases, const Explorer& explorer);
// Writes `<stem>.txt` and `<stem>.jsonl` atomically.
void write_report(const EvalReport& report, const std::filesystem::path& stem);

std::string report_text(const EvalReport& report);
std::string report_jsonl(const EvalReport& report);
std::string outcome_json(const CaseOutcome& o);

}  // namespace shapex
