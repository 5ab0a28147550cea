#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "crashrisk/common/csv.hpp"
#include "crashrisk/error.hpp"
#include "crashrisk/pipeline.hpp"
#include "crashrisk/simlab.hpp"

namespace fs = std::filesystem;
using namespace crashrisk;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<unsigned> threads;
  bool verbose = false;
};

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numeric: return 4;
  }
  return 1;
}

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Data: return "data";
    case ErrorKind::Numeric: return "numeric";
  }
  return "internal";
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

PipelineConfig pipeline_config(const Options& o) {
  if (o.config.empty()) throw ConfigError("--config is required");
  PipelineConfig c = load_pipeline_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.out.empty()) c.output_dir = o.out;
  if (o.threads) c.threads = *o.threads;
  c.validate();
  return c;
}

void report(const StageReport& r, bool verbose) {
  if (!verbose) return;
  std::cerr << r.stage << ": " << r.seconds << " s";
  for (const auto& [k, v] : r.rows) std::cerr << ' ' << k << '=' << v;
  std::cerr << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stock price crash risk and investor sentiment pipeline"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Config file (JSON)");
    sub->add_option("--seed", o.seed, "Override the global seed");
    sub->add_option("--out", o.out, "Override the output directory");
    sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--verbose", o.verbose, "Print stage timings to stderr");
  };

  auto* init = app.add_subcommand("init-config", "Write a config with every default filled in");
  bool sim_template = false;
  init->add_option("--out", o.out, "Destination file (stdout if omitted)");
  init->add_flag("--sim", sim_template, "Emit a simulation config instead");

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic panel with ground truth");
  add_common(simulate);

  std::vector<std::pair<CLI::App*, StageReport (Pipeline::*)()>> stages;
  for (auto [name, fn, help] : {std::tuple{"ingest", &Pipeline::ingest, "Load and clean inputs"},
                                std::tuple{"residuals", &Pipeline::residuals, "Fit the expanded market model"},
                                std::tuple{"measures", &Pipeline::measures, "Compute crash measures"},
                                std::tuple{"sentiment", &Pipeline::sentiment, "Build the sentiment index"},
                                std::tuple{"regress", &Pipeline::regress, "Estimate the regression suite"}}) {
    auto* sub = app.add_subcommand(name, help);
    add_common(sub);
    stages.emplace_back(sub, fn);
  }
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage in order");
  add_common(pipeline);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (init->parsed()) {
      const std::string text = sim_template ? sim_config_to_json_text(simlab::SimConfig{}) : default_pipeline_config_text();
      if (o.out.empty())
        std::cout << text;
      else
        csv::write_atomic(o.out, text);
      return 0;
    }
    if (simulate->parsed()) {
      simlab::SimConfig c = o.config.empty() ? simlab::SimConfig{} : load_sim_config(o.config);
      if (o.seed) c.seed = *o.seed;
      simlab::validate(c);
      const fs::path dir = o.out.empty() ? fs::path("sim") : fs::path(o.out);
      const auto paths = simlab::gen_panel(c, dir);
      if (o.verbose) std::cerr << "wrote " << paths.returns << ", " << paths.fundamentals << ", " << paths.ground_truth << '\n';
      return 0;
    }
    if (pipeline->parsed()) {
      Pipeline p(pipeline_config(o));
      for (const auto& r : p.run_all()) report(r, o.verbose);
      return 0;
    }
    for (const auto& [sub, fn] : stages) {
      if (!sub->parsed()) continue;
      Pipeline p(pipeline_config(o));
      report((p.*fn)(), o.verbose);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error kind=" << kind_name(e.kind()) << " message=\"" << one_line(e.what()) << "\"\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error kind=internal message=\"" << one_line(e.what()) << "\"\n";
    return 1;
  }
  return 1;
}
