// Runs the reference experiments and prints one verdict line per acceptance
// criterion. Usage: acceptance [work_dir]. Exit status 1 if any criterion fails.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "adalab.hpp"

namespace fs = std::filesystem;
using namespace adalab;

namespace {

struct Line {
  std::string id;
  bool pass = false;
  std::string detail;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  }
  return out;
}

class Suite {
 public:
  explicit Suite(fs::path root) : root_(std::move(root)) { fs::create_directories(root_); }

  ExperimentConfig config(const std::string& name) const {
    auto cfg = load_config(std::string(ADALAB_SOURCE_DIR) + "/configs/" + name + ".json");
    cfg.output_dir = (root_ / name).string();
    return cfg;
  }

  // Runs a shipped config once and caches its report.
  const Report& report(const std::string& name) {
    if (auto it = reports_.find(name); it != reports_.end()) return it->second;
    const auto cfg = config(name);
    fs::remove_all(cfg.output_dir);
    const auto t0 = std::chrono::steady_clock::now();
    run_experiment(cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "  ran " << name << " (" << cfg.seed_count << " seeds, T=" << cfg.T << ") in " << secs
              << " s\n";
    return reports_.emplace(name, report_directory(cfg.output_dir)).first->second;
  }

  const fs::path& root() const { return root_; }

 private:
  fs::path root_;
  std::map<std::string, Report> reports_;
};

const CriterionResult& find(const Report& r, const std::string& id) {
  for (const auto& v : r.verdicts) {
    if (v.id == id) return v;
  }
  throw std::runtime_error("no verdict " + id);
}

// A criterion checked on several runs passes only when every run passes.
Line combine(Suite& s, const std::string& id, const std::vector<std::string>& runs) {
  Line line{id, true, ""};
  for (const auto& name : runs) {
    const CriterionResult& v = find(s.report(name), id);
    line.pass = line.pass && v.verdict == Verdict::Pass;
    if (!line.detail.empty()) line.detail += " | ";
    line.detail += name + ": " + std::string(to_string(v.verdict)) + " " + v.detail;
  }
  return line;
}

Line certification(Suite& s) {
  Line line{"A10", true, ""};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(std::string(ADALAB_SOURCE_DIR) + "/configs")) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const auto cfg = load_config(f.string());
    const Certification c = certify(resolve_problem(cfg));
    std::string failed;
    for (const auto& item : c.items) {
      if (!item.pass) failed += (failed.empty() ? "" : ",") + item.name;
    }
    line.pass = line.pass && c.pass();
    if (!line.detail.empty()) line.detail += " | ";
    line.detail += f.stem().string() + ": " + std::to_string(c.items.size()) + " checks " +
                   (c.pass() ? "pass" : "FAIL " + failed);
  }
  (void)s;
  return line;
}

Line determinism(Suite& s) {
  const std::string name = "quadratic_gaussian_adagrad";
  s.report(name);  // first run, default jobs, report files included
  const auto cfg = s.config(name);
  const fs::path dir = cfg.output_dir;
  const fs::path aside = s.root() / (name + ".first");
  fs::remove_all(aside);
  fs::rename(dir, aside);
  const unsigned first_jobs = default_jobs();
  RunOptions opts;
  opts.jobs = first_jobs == 1 ? 8 : 1;
  run_experiment(cfg, opts);
  report_directory(dir);
  const auto a = tree(aside);
  const auto b = tree(dir);
  std::size_t differing = 0;
  for (const auto& [file, bytes] : a) {
    const auto it = b.find(file);
    if (it == b.end() || it->second != bytes) ++differing;
  }
  for (const auto& [file, bytes] : b) {
    if (!a.contains(file)) ++differing;
  }
  fs::remove_all(aside);
  return {"A11", differing == 0,
          std::to_string(a.size()) + " files, jobs=" + std::to_string(first_jobs) + " vs jobs=" +
              std::to_string(*opts.jobs) + ", " + std::to_string(differing) + " differing"};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path(ADALAB_ACCEPTANCE_DIR);
  try {
    Suite s(root);
    const std::string quad = "quadratic_gaussian_adagrad";
    const std::string cosine = "cosine_multiplicative_adagrad";
    const std::string logistic = "logistic_minibatch_adagrad";
    std::vector<Line> lines;
    lines.push_back(combine(s, "A1", {quad}));
    lines.push_back(combine(s, "A2", {quad, cosine}));
    lines.push_back(combine(s, "A3", {cosine}));
    lines.push_back(combine(s, "A4", {quad, cosine}));
    lines.push_back(combine(s, "A5", {quad}));
    lines.push_back(combine(s, "A6", {quad}));
    lines.push_back(combine(s, "A7", {"quadratic_gaussian_rmsprop"}));
    lines.push_back(combine(s, "A8", {"quadratic_multiplicative_rmsprop"}));
    lines.push_back(combine(s, "A9", {quad, cosine, logistic}));
    lines.push_back(certification(s));
    lines.push_back(determinism(s));

    bool all = true;
    Json out = Json::array();
    for (const auto& l : lines) {
      all = all && l.pass;
      std::cout << l.id << (l.id.size() < 3 ? "  " : " ") << (l.pass ? "PASS" : "FAIL") << "  " << l.detail
                << '\n';
      out.push_back({{"id", l.id}, {"pass", l.pass}, {"detail", l.detail}});
    }
    write_json(root / "acceptance.json", out);
    std::cout << (all ? "all criteria pass" : "some criteria FAIL") << '\n';
    return all ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "acceptance: " << e.what() << '\n';
    return 2;
  }
}
