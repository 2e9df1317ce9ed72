#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinefit/pipeline.hpp"
#include "kinefit/synth.hpp"

namespace kinefit {

/// Parse failure, unknown key, or constraint violation while resolving an
/// experiment configuration. Messages carry origin:line context where one
/// applies and always name the offending key or field.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One experiment, fully resolved: the scene and corruption spec, the
/// optimizer settings, and the evaluation grids. Defaults reproduce the
/// standard benchmark at dataset.seed = 1. pipeline.tau and
/// pipeline.tool_intensity follow the dataset values unless a config line
/// sets them explicitly, so renders during optimization match the data
/// they are fit to.
struct ExperimentConfig {
  uint64_t master_seed = 1;
  DatasetSpec dataset = benchmark_spec(1);
  PipelineConfig pipeline;
  std::vector<uint64_t> eval_seeds{1, 2, 3};
  int workers = 1;
  std::vector<int> sweep_k{0, 1, 3, 5, 10};
  std::vector<int> sweep_n{1, 3, 5, 10, 20, 40};
  std::vector<double> sweep_lambda1{0, 1, 10, 100, 1000, 10000};
  std::vector<double> sweep_lambda2{0, 0.1, 1, 10, 100, 1000};
  std::string out_dir = "results";

  ExperimentConfig() {
    pipeline.tau = dataset.tau;
    pipeline.tool_intensity = dataset.tool_intensity;
  }

  /// Throws ConfigError naming the first violated field.
  void validate() const;
};

/// Parses `section.key = value` lines: later assignments win, blank lines
/// and full-line # comments are skipped, and any unknown key is an error.
/// `overrides` are `section.key=value` strings applied after the text.
/// dataset.seed picks the benchmark scene and derives the per-stream seeds
/// before any other assignment lands, regardless of where it appears.
/// Arms are fixed at two; links are addressable up to index 15.
ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::string>& overrides = {},
                              const std::string& origin = "<config>");

/// parse_config over the file's contents, with the path as origin.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::string>& overrides = {});

/// Loadable text with every key explicit. Parsing it back reproduces the
/// same configuration, so a copy written next to results is a complete
/// provenance record.
std::string echo_config(const ExperimentConfig& config);

}  // namespace kinefit
