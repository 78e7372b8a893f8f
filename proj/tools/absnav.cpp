// absnav: scene generation, benchmark runs and reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "absnav/errors.hpp"
#include "absnav/harness.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace absnav;

namespace {

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << text;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw ConfigError("cannot open " + p.string());
  return json::parse(in);
}

ExperimentConfig base_config(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_config(path);
}

int cmd_gen_scenes(const std::string& out, int count, std::uint64_t seed, const std::string& config) {
  const ExperimentConfig cfg = base_config(config);
  fs::create_directories(out);
  const auto scenes = generate_scenes(count, seed, cfg.scenes);
  for (const auto& s : scenes) save_scene(s, fs::path(out) / (s.id + ".json"));
  std::printf("wrote %zu scenes to %s\n", scenes.size(), out.c_str());
  return 0;
}

struct RunArgs {
  std::string variant = "all";
  std::string scenes;
  int episodes = -1;
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  int threads = 0;
  bool save_store = false;
};

int cmd_run(const RunArgs& a) {
  ExperimentConfig cfg = base_config(a.config);
  if (a.episodes > 0) cfg.episodes_per_scene = a.episodes;
  validate_experiment_config(cfg);
  const int threads = a.threads > 0 ? a.threads : default_threads();

  std::vector<Variant> variants;
  if (a.variant == "all")
    variants = {Variant::Baseline, Variant::HardPre, Variant::SoftPre, Variant::SoftIncr};
  else
    variants = {variant_from_string(a.variant)};

  std::vector<Scene> scenes =
      a.scenes.empty() ? generate_scenes(cfg.scene_count, a.seed, cfg.scenes) : load_scenes(a.scenes);
  Suite suite = make_suite(std::move(scenes), a.seed, cfg);
  fs::create_directories(a.out);

  std::optional<ModelStore> store;
  for (Variant v : variants)
    if (v == Variant::HardPre || v == Variant::SoftPre) {
      std::fprintf(stderr, "pre-exploring %zu scenes\n", suite.scenes.size());
      store = pre_explore(suite, cfg, threads);
      if (a.save_store) save_store(*store, fs::path(a.out) / "store");
      break;
    }

  json summary;
  json timing;
  std::map<std::string, std::vector<double>> curves;
  std::map<std::string, std::map<std::string, int>> failures;
  std::string csv = episodes_csv_header();
  std::ofstream traces(fs::path(a.out) / "traces.jsonl");
  for (Variant v : variants) {
    std::fprintf(stderr, "running %s\n", to_string(v));
    const VariantRun run = run_variant(v, suite, cfg, store ? &*store : nullptr, threads);
    const Summary s = summarize({&run});
    summary[to_string(v)] = summary_to_json(s);
    timing[to_string(v)] = {{"seconds", run.seconds}, {"steps", run.steps}};
    curves[to_string(v)] = s.moving_avg_success;
    failures[to_string(v)] = s.failures;
    const std::string rows = episodes_csv(run, suite);
    csv += rows.substr(rows.find('\n') + 1);
    traces << traces_jsonl(run);
    std::printf("%-10s success=%.3f spl=%.3f soft_spl=%.3f dts=%.3f relocated=%.3f (%.1fs)\n", to_string(v),
                s.success, s.spl, s.soft_spl, s.dts, s.relocation_rate, run.seconds);
    if (v == variants.back())
      for (std::size_t i = 0; i < std::min<std::size_t>(2, suite.scenes.size()); ++i)
        write_file(fs::path(a.out) / ("snapshot_" + suite.scenes[i].id + ".svg"),
                   svg_scene_snapshot(suite.scenes[i], run.records[i]));
  }
  write_file(fs::path(a.out) / "episodes.csv", csv);
  write_file(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
  write_file(fs::path(a.out) / "success_curve.svg", svg_success_curve(curves));
  write_file(fs::path(a.out) / "failures.svg", svg_failure_bars(failures));
  json meta = {{"csv_schema_version", kCsvSchemaVersion},
               {"seed", a.seed},
               {"threads", threads},
               {"scenes", a.scenes.empty() ? json("generated") : json(a.scenes)},
               {"timing", timing},
               {"config", config_to_json(cfg)}};
  write_file(fs::path(a.out) / "meta.json", meta.dump(2) + "\n");
  return 0;
}

int cmd_report(const std::string& in, const std::string& format) {
  const json summary = read_json(fs::path(in) / "summary.json");
  if (format == "csv") {
    std::printf("variant,episodes,success,spl,soft_spl,dts,relocation_rate\n");
    for (const auto& [name, s] : summary.items())
      std::printf("%s,%d,%.10g,%.10g,%.10g,%.10g,%.10g\n", name.c_str(), s["episodes"].get<int>(),
                  s["success"].get<double>(), s["spl"].get<double>(), s["soft_spl"].get<double>(),
                  s["dts"].get<double>(), s["relocation_rate"].get<double>());
  } else if (format == "md") {
    std::printf("| variant | episodes | success | SPL | soft SPL | DTS | relocated |\n");
    std::printf("|---|---|---|---|---|---|---|\n");
    for (const auto& [name, s] : summary.items())
      std::printf("| %s | %d | %.3f | %.3f | %.3f | %.3f | %.3f |\n", name.c_str(), s["episodes"].get<int>(),
                  s["success"].get<double>(), s["spl"].get<double>(), s["soft_spl"].get<double>(),
                  s["dts"].get<double>(), s["relocation_rate"].get<double>());
    std::printf("\n| variant | last_mile | hallucination | detection | exploration | misc |\n|---|---|---|---|---|---|\n");
    for (const auto& [name, s] : summary.items()) {
      auto n = [&](const char* k) { return s["failures"].contains(k) ? s["failures"][k].get<int>() : 0; };
      std::printf("| %s | %d | %d | %d | %d | %d |\n", name.c_str(), n("last_mile"), n("hallucination"),
                  n("detection"), n("exploration"), n("misc"));
    }
  } else if (format == "svg") {
    std::map<std::string, std::vector<double>> curves;
    for (const auto& [name, s] : summary.items()) curves[name] = s["moving_avg_success"].get<std::vector<double>>();
    std::cout << svg_success_curve(curves);
  } else {
    throw ConfigError("unknown format '" + format + "'");
  }
  return 0;
}

int cmd_compare(const std::string& a, const std::string& b) {
  const json ja = read_json(fs::path(a) / "summary.json");
  const json jb = read_json(fs::path(b) / "summary.json");
  std::printf("%-10s %-16s %10s %10s %10s\n", "variant", "metric", "a", "b", "b-a");
  for (const auto& [name, sa] : ja.items()) {
    if (!jb.contains(name)) continue;
    const json& sb = jb[name];
    for (const char* m : {"success", "spl", "soft_spl", "dts", "relocation_rate"}) {
      const double x = sa[m].get<double>(), y = sb[m].get<double>();
      std::printf("%-10s %-16s %10.4f %10.4f %+10.4f\n", name.c_str(), m, x, y, y - x);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"absnav: object-goal navigation benchmark"};
  app.require_subcommand(1);

  std::string gen_out, gen_config;
  int gen_count = 8;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("gen-scenes", "Generate scene JSON files");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--count", gen_count, "Number of scenes")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Generator seed");
  gen->add_option("--config", gen_config, "Experiment config JSON")->check(CLI::ExistingFile);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "Run benchmark variants");
  run->add_option("--variant", run_args.variant, "baseline|hard-pre|soft-pre|soft-incr|all");
  run->add_option("--scenes", run_args.scenes, "Scene directory (default: generate from --seed)")
      ->check(CLI::ExistingDirectory);
  run->add_option("--episodes", run_args.episodes, "Episodes per scene")->check(CLI::PositiveNumber);
  run->add_option("--seed", run_args.seed, "Seed for scenes and episodes");
  run->add_option("--out", run_args.out, "Output directory")->required();
  run->add_option("--config", run_args.config, "Experiment config JSON")->check(CLI::ExistingFile);
  run->add_option("--threads", run_args.threads, "Worker threads (default: ABSNAV_THREADS or all cores)");
  run->add_flag("--save-store", run_args.save_store, "Write the pre-explored store under <out>/store");

  std::string report_in, report_format = "md";
  auto* report = app.add_subcommand("report", "Summarize a run directory");
  report->add_option("--in", report_in, "Run directory")->required()->check(CLI::ExistingDirectory);
  report->add_option("--format", report_format, "csv|md|svg")->check(CLI::IsMember({"csv", "md", "svg"}));

  std::string cmp_a, cmp_b;
  auto* compare = app.add_subcommand("compare", "Compare two run directories");
  compare->add_option("--a", cmp_a, "First run directory")->required()->check(CLI::ExistingDirectory);
  compare->add_option("--b", cmp_b, "Second run directory")->required()->check(CLI::ExistingDirectory);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen) return cmd_gen_scenes(gen_out, gen_count, gen_seed, gen_config);
    if (*run) return cmd_run(run_args);
    if (*report) return cmd_report(report_in, report_format);
    if (*compare) return cmd_compare(cmp_a, cmp_b);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "absnav: %s\n", e.what());
    return 2;
  }
  return 1;
}
