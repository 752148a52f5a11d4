#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "adalab.hpp"

namespace {

enum ExitCode { kOk = 0, kVerdictFailure = 1, kUsage = 2, kIo = 3 };

// A manifest is accepted wherever a config is: its echoed config re-runs the
// experiment.
adalab::ExperimentConfig load_config_or_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw adalab::IoError("cannot read '" + path + "'");
  adalab::Json j;
  try {
    j = adalab::Json::parse(in);
  } catch (const adalab::Json::parse_error&) {
    return adalab::load_config(path);  // reports line and column
  }
  if (j.is_object() && j.contains("tool") && j.contains("config")) {
    try {
      return adalab::parse_config(j.at("config"));
    } catch (const adalab::ConfigError& e) {
      throw adalab::ConfigError(path + ": " + e.what());
    }
  }
  return adalab::load_config(path);
}

std::filesystem::path output_dir_for(const adalab::ExperimentConfig& cfg) {
  if (const char* env = std::getenv(adalab::kOutputDirEnv); env && *env) return env;
  return cfg.output_dir;
}

int cmd_run(const std::string& path, std::optional<unsigned> jobs, bool quiet, bool timing) {
  const adalab::ExperimentConfig cfg = load_config_or_manifest(path);
  adalab::RunOptions opts;
  opts.jobs = jobs;
  opts.quiet = quiet;
  opts.record_timing = timing;
  opts.log = [](const std::string& line) { std::cerr << line << '\n'; };
  const adalab::RunSummary s = adalab::run_experiment(cfg, opts);
  if (!quiet) {
    std::cout << "run '" << cfg.name << "': " << s.seeds << " seeds, " << s.aborted
              << " aborted, outputs in " << s.output_dir.string() << '\n';
  }
  return kOk;
}

int cmd_check(const std::string& path, bool quiet) {
  const adalab::ExperimentConfig cfg = load_config_or_manifest(path);
  const adalab::Problem problem = adalab::resolve_problem(cfg);
  const adalab::Certification cert = adalab::certify(problem);
  const auto dir = output_dir_for(cfg);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw adalab::IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
  adalab::Json out;
  out["config_fingerprint"] = adalab::config_fingerprint(cfg);
  out["certification"] = cert.to_json();
  adalab::write_json(dir / "certification.json", out);
  if (!quiet) {
    for (const auto& item : cert.items) {
      std::cout << (item.pass ? "pass  " : "FAIL  ") << item.name << "  " << item.detail.dump() << '\n';
    }
    std::cout << "certification written to " << (dir / "certification.json").string() << '\n';
  }
  return cert.pass() ? kOk : kVerdictFailure;
}

int cmd_report(const std::string& dir, bool quiet) {
  const adalab::Report rep = adalab::report_directory(dir);
  if (!quiet) adalab::print_verdicts(std::cout, rep);
  return rep.pass() ? kOk : kVerdictFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive step-size optimization lab"};
  app.require_subcommand(1);

  std::optional<unsigned> jobs;
  bool quiet = false;
  bool timing = false;
  std::string target;

  auto* run = app.add_subcommand("run", "run a seed ensemble from a config or manifest");
  run->add_option("config", target, "experiment config or manifest.json")->required();
  run->add_option("--jobs", jobs, "worker threads (default: logical cores)")->check(CLI::PositiveNumber);
  run->add_flag("--quiet", quiet, "suppress progress output");
  run->add_flag("--timing", timing, "record wall-clock seconds in the manifest");

  auto* check = app.add_subcommand("check", "certify the declared objective and oracle assumptions");
  check->add_option("config", target, "experiment config")->required();
  check->add_flag("--quiet", quiet, "suppress the check table");

  auto* report = app.add_subcommand("report", "aggregate a run directory and print verdicts");
  report->add_option("dir", target, "run output directory")->required();
  report->add_flag("--quiet", quiet, "suppress the verdict table");

  app.add_subcommand("version", "print the tool version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (run->parsed()) return cmd_run(target, jobs, quiet, timing);
    if (check->parsed()) return cmd_check(target, quiet);
    if (report->parsed()) return cmd_report(target, quiet);
    std::cout << adalab::kToolName << ' ' << adalab::kToolVersion << '\n';
    return kOk;
  } catch (const adalab::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kIo;
  } catch (const adalab::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
}
