#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crashrisk/crash_measures.hpp"
#include "crashrisk/data_panel.hpp"
#include "crashrisk/econometrics.hpp"
#include "crashrisk/sentiment.hpp"
#include "crashrisk/simlab.hpp"

namespace crashrisk {

struct PipelineConfig {
  std::filesystem::path returns_path = "returns.csv";
  std::filesystem::path fundamentals_path = "fundamentals.csv";
  ColumnMapping returns_columns;
  ColumnMapping fundamentals_columns;
  CleaningConfig filters;
  mcd::McdConfig mcd;
  double crash_sigma = 3.2;
  sentiment::SentimentOptions sentiment;
  econ::PaperModelsConfig regressions;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 20240101;
  unsigned threads = 1;
  bool mcd_audit = true;

  // Relative paths in the JSON resolve against `base_dir`.
  static PipelineConfig from_json_text(const std::string& text, const std::filesystem::path& base_dir = {});
  std::string to_json_text() const;
  void validate() const;
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
std::string default_pipeline_config_text();

simlab::SimConfig load_sim_config(const std::filesystem::path& path);
simlab::SimConfig sim_config_from_json_text(const std::string& text);
std::string sim_config_to_json_text(const simlab::SimConfig& config);

struct StageReport {
  std::string stage;
  double seconds = 0.0;
  std::map<std::string, std::size_t> rows;
  std::vector<std::string> artifacts;
};

// Batch pipeline over artifacts in `config.output_dir`. Each stage reads the
// previous stage's files from disk, so running stages one by one gives the
// same bytes as run_all().
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  StageReport ingest();
  StageReport residuals();
  StageReport measures();
  StageReport sentiment();
  StageReport regress();
  std::vector<StageReport> run_all();

  const PipelineConfig& config() const { return config_; }
  std::filesystem::path artifact(const std::string& name) const { return config_.output_dir / name; }

 private:
  void record(const StageReport& report);

  PipelineConfig config_;
};

// Artifacts whose bytes are a pure function of (config, seed).
const std::vector<std::string>& deterministic_artifacts();

}  // namespace crashrisk
