// Run configuration loaded from a JSON file; command-line flags override it.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "cvd/dataset.hpp"

namespace cvd {

struct VoxelConfig {
  double meters_per_voxel = 1.0;
  int nz = 64;
  double camera_height_m = 2.5;
};

struct ControlsConfig {
  double beta = 0.05;
  std::size_t control_rows = 16;
  std::size_t control_cols = 32;
  std::size_t satellite_token_rows = 16;
  std::size_t satellite_token_cols = 16;
};

struct AttentionConfig {
  std::size_t dim = 16;
  std::size_t patch_size = 4;
  bool scale_affinity = true;
};

struct DiffusionConfig {
  std::size_t train_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::size_t sample_steps = 50;
  std::size_t height = 64, width = 64, channels = 3;
};

struct JudgeConfig {
  std::string endpoint = "https://api.openai.com/v1/chat/completions";
  std::string model = "gpt-4o";
  std::string api_key_env = "OPENAI_API_KEY";
  std::size_t icl_count = 3;
  std::optional<std::string> icl_file;  // JSON list of examples
  std::size_t concurrency = 4;
  int retry_budget = 2;
  int backoff_ms = 500;
};

struct DatasetConfig {
  std::optional<std::string> root;
  LayoutSpec layout = LayoutSpec::defaults(DatasetKind::OmniCity);
  std::optional<std::string> split_file;
};

struct Config {
  DatasetConfig dataset;
  VoxelConfig voxel;
  ControlsConfig controls;
  AttentionConfig attention;
  DiffusionConfig diffusion;
  JudgeConfig judge;
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

Config config_from_json(std::string_view text);
Config load_config(const std::filesystem::path& path);

}  // namespace cvd
