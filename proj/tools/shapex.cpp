// shapex command-line entry point.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <filesystem>
#include <iostream>

#include "shapex/eval.hpp"
#include "shapex/io.hpp"
#include "shapex/service.hpp"

using namespace shapex;
namespace fs = std::filesystem;

namespace {

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config:
    case ErrorKind::argument: return 1;
    case ErrorKind::numeric: return 3;
    default: return 2;
  }
}

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string data_dir, bundle_dir, out;
  std::optional<double> alpha;
  std::string mode;
  int port = 8080;
  std::string stage = "all";
  std::string cases;
};

RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? default_config() : load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.data_dir.empty()) c.data_dir = o.data_dir;
  if (!o.bundle_dir.empty()) c.bundle_dir = o.bundle_dir;
  if (o.alpha) c.alpha.default_alpha = *o.alpha;
  c.resolve();
  c.validate();
  return c;
}

void echo_config(const RunConfig& c, const fs::path& dir, const std::string& command) {
  fs::create_directories(dir);
  io::write_file_atomic(dir / (command + "_config.json"), to_json(c));
  spdlog::info("{}: resolved config written to {}", command, (dir / (command + "_config.json")).string());
}

std::vector<ExploreCase> suite_cases(const RunConfig& c, const Options& o) {
  std::vector<ExploreCase> cases;
  if (!o.cases.empty()) {
    cases = read_cases(o.cases);
  } else {
    for (const char* name : {"binary", "text", "sketch", "planted"}) {
      const fs::path p = c.data_dir / "suites" / (std::string(name) + ".jsonl");
      if (!fs::exists(p)) throw StateError("missing suite " + p.string() + " (run gen-data)");
      for (auto& k : read_cases(p)) cases.push_back(std::move(k));
    }
  }
  if (!o.mode.empty()) {
    const DirectionMode m = parse_direction_mode(o.mode);
    std::erase_if(cases, [m](const ExploreCase& k) { return k.mode != m; });
  }
  if (o.alpha)
    for (auto& k : cases)
      if (k.alpha_mode == AlphaMode::fixed) k.alpha = *o.alpha;
  return cases;
}

int cmd_gen_data(const Options& o) {
  const RunConfig c = resolve(o);
  echo_config(c, c.data_dir, "gen-data");
  const Dataset d = generate_dataset(c.dataset());
  write_dataset(d, c.data_dir);
  fs::create_directories(c.data_dir / "suites");
  if (d.records.empty()) return 0;
  for (DirectionMode m : {DirectionMode::binary, DirectionMode::text, DirectionMode::sketch}) {
    try {
      write_cases(c.data_dir / "suites" / (std::string(to_string(m)) + ".jsonl"), standard_suite(d, m));
    } catch (const DataError& e) {
      spdlog::warn("standard {} suite not written: {}", to_string(m), e.what());
    }
  }
  try {
    write_cases(c.data_dir / "suites" / "planted.jsonl", planted_suite(d));
  } catch (const DataError& e) {
    spdlog::warn("planted suite not written: {}", e.what());
  }
  spdlog::info("gen-data: {} shapes in {}", d.records.size(), c.data_dir.string());
  return 0;
}

int cmd_train(const Options& o) {
  const RunConfig c = resolve(o);
  echo_config(c, c.bundle_dir, "train");
  if (o.stage != "spaces" && o.stage != "mapper" && o.stage != "all")
    throw ArgumentError("unknown stage '" + o.stage + "' (spaces, mapper, all)");
  if (o.stage == "mapper") {
    // Fail fast on ordering before loading the dataset.
    if (!fs::exists(c.bundle_dir / kBundleMetadata))
      throw StateError("missing prerequisite " + (c.bundle_dir / kBundleMetadata).string() + " (run --stage spaces first)");
  }
  const Dataset d = load_dataset(c.data_dir);
  if (o.stage == "spaces" || o.stage == "all") train_spaces_stage(c, d, c.bundle_dir);
  if (o.stage == "mapper" || o.stage == "all") train_mapper_stage(c, d, c.bundle_dir);
  return 0;
}

int cmd_explore(const Options& o) {
  const RunConfig c = resolve(o);
  const fs::path out = o.out.empty() ? c.report_dir / "explore" : fs::path(o.out);
  echo_config(c, out, "explore");
  const Dataset d = load_dataset(c.data_dir);
  const Bundle b = load_bundle(c.bundle_dir);
  const Explorer ex(b, d, c);
  int code = 0;
  for (const auto& k : suite_cases(c, o)) {
    const CaseOutcome r = ex.run_case(k);
    const fs::path dir = out / k.id;
    fs::create_directories(dir);
    std::string summary = "# alpha similarity code_norm oracle_scores\n";
    for (std::size_t i = 0; i < r.candidates.size(); ++i) {
      const auto& cand = r.candidates[i];
      char name[32];
      std::snprintf(name, sizeof name, "alpha_%06.3f", cand.alpha);
      write_voxels(dir / (std::string(name) + ".lxv"), cand.grid.binarized(0.5f));
      write_pgm(dir / (std::string(name) + ".pgm"), cand.sketch);
      char line[256];
      std::snprintf(line, sizeof line, "%.4f %s %.6f", cand.alpha,
                    cand.similarity ? std::to_string(*cand.similarity).c_str() : "-", cand.code.values.norm());
      summary += line;
      const VoxelGrid g = cand.grid.binarized(0.5f);
      for (Attribute a : applicable_attributes(r.category))
        summary += " " + std::string(to_string(a)) + "=" + std::to_string(attribute_score(g, attribute_label(r.category, a)));
      if (r.selected && *r.selected == i) summary += " selected";
      summary += "\n";
    }
    io::write_file_atomic(dir / "summary.txt", summary);
    io::write_file_atomic(dir / "outcome.json", outcome_json(r) + "\n");
    if (!r.ok) {
      spdlog::error("case {}: {}", k.id, r.error);
      code = std::max(code, r.error.rfind("numeric", 0) == 0 ? 3 : 2);
    } else {
      spdlog::info("case {}: alpha {:.2f}, oracle {:.3f} -> {:.3f}", k.id, r.alpha, r.oracle_start, r.oracle_result);
    }
  }
  return code;
}

int cmd_eval(const Options& o) {
  const RunConfig c = resolve(o);
  const fs::path stem = o.out.empty() ? c.report_dir / "report" : fs::path(o.out);
  echo_config(c, stem.has_parent_path() ? stem.parent_path() : fs::path("."), "eval");
  const Dataset d = load_dataset(c.data_dir);
  const Bundle b = load_bundle(c.bundle_dir);
  const Explorer ex(b, d, c);
  const EvalReport r = run_eval(suite_cases(c, o), ex);
  write_report(r, stem);
  std::cout << report_text(r);
  return 0;
}

HttpServer* g_server = nullptr;

int cmd_serve(const Options& o) {
  const RunConfig c = resolve(o);
  echo_config(c, c.report_dir, "serve");
  const Dataset d = load_dataset(c.data_dir);
  const Bundle b = load_bundle(c.bundle_dir);
  const Explorer ex(b, d, c);
  ExplorationService svc(ex);
  HttpServer http(svc);
  const int port = http.bind("127.0.0.1", o.port);
  g_server = &http;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  spdlog::info("serving on 127.0.0.1:{}", port);
  http.run();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled latent-space shape exploration"};
  app.require_subcommand(1);
  Options o;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "global seed");
    sub->add_option("--data-dir", o.data_dir, "dataset directory");
    sub->add_option("--bundle-dir", o.bundle_dir, "model bundle directory");
  };
  auto* gen = app.add_subcommand("gen-data", "sample, voxelize, render and caption the shape corpus");
  common(gen);
  auto* train = app.add_subcommand("train", "train the frozen spaces and the mappers");
  common(train);
  train->add_option("--stage", o.stage, "spaces, mapper or all");
  auto* explore = app.add_subcommand("explore", "run exploration cases and export trajectories");
  common(explore);
  auto* eval = app.add_subcommand("eval", "evaluate cases and write a report");
  common(eval);
  for (auto* sub : {explore, eval}) {
    sub->add_option("--cases", o.cases, "case file (default: the standard suites)");
    sub->add_option("--out", o.out, "output directory (explore) or report stem (eval)");
    sub->add_option("--alpha", o.alpha, "alpha for fixed-policy cases");
    sub->add_option("--mode", o.mode, "only run cases of this mode");
  }
  auto* serve = app.add_subcommand("serve", "start the HTTP exploration service");
  common(serve);
  serve->add_option("--port", o.port, "TCP port");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  try {
    if (*gen) return cmd_gen_data(o);
    if (*train) return cmd_train(o);
    if (*explore) return cmd_explore(o);
    if (*eval) return cmd_eval(o);
    if (*serve) return cmd_serve(o);
  } catch (const Error& e) {
    spdlog::error("{}: {}", to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 2;
  }
  return 1;
}
