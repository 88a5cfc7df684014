#include "cvd/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cvd {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

template <typename T>
void read(const json& j, const char* key, std::optional<T>& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

void fail(const std::string& field, const std::string& why) {
  throw Error(Errc::ConfigError, field + ": " + why);
}

}  // namespace

Config config_from_json(std::string_view text) {
  const json j = json::parse(text, nullptr, false, true);
  if (j.is_discarded() || !j.is_object()) throw Error(Errc::ConfigError, "config is not a JSON object");
  Config c;
  try {
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      if (d.contains("layout")) {
        try {
          c.dataset.layout = LayoutSpec::defaults(parse_dataset_kind(d.at("layout").get<std::string>()));
        } catch (const Error& e) {
          fail("dataset.layout", e.what());
        }
      }
      LayoutSpec& l = c.dataset.layout;
      read(d, "root", c.dataset.root);
      read(d, "split_file", c.dataset.split_file);
      read(d, "satellite_pattern", l.patterns.satellite);
      read(d, "panorama_pattern", l.patterns.panorama);
      read(d, "height_pattern", l.patterns.height);
      read(d, "pano_height", l.pano_height);
      read(d, "pano_width", l.pano_width);
      read(d, "satellite_size", l.satellite_size);
      read(d, "height_scale", l.height_scale);
      read(d, "full_frame", l.full_frame);
    }
    if (j.contains("voxel")) {
      const json& v = j.at("voxel");
      read(v, "meters_per_voxel", c.voxel.meters_per_voxel);
      read(v, "nz", c.voxel.nz);
      read(v, "camera_height_m", c.voxel.camera_height_m);
    }
    if (j.contains("controls")) {
      const json& v = j.at("controls");
      read(v, "beta", c.controls.beta);
      read(v, "control_rows", c.controls.control_rows);
      read(v, "control_cols", c.controls.control_cols);
      read(v, "satellite_token_rows", c.controls.satellite_token_rows);
      read(v, "satellite_token_cols", c.controls.satellite_token_cols);
    }
    if (j.contains("attention")) {
      const json& v = j.at("attention");
      read(v, "dim", c.attention.dim);
      read(v, "patch_size", c.attention.patch_size);
      read(v, "scale_affinity", c.attention.scale_affinity);
    }
    if (j.contains("diffusion")) {
      const json& v = j.at("diffusion");
      read(v, "train_steps", c.diffusion.train_steps);
      read(v, "beta_start", c.diffusion.beta_start);
      read(v, "beta_end", c.diffusion.beta_end);
      read(v, "sample_steps", c.diffusion.sample_steps);
      read(v, "height", c.diffusion.height);
      read(v, "width", c.diffusion.width);
      read(v, "channels", c.diffusion.channels);
    }
    if (j.contains("judge")) {
      const json& v = j.at("judge");
      read(v, "endpoint", c.judge.endpoint);
      read(v, "model", c.judge.model);
      read(v, "api_key_env", c.judge.api_key_env);
      read(v, "icl_count", c.judge.icl_count);
      read(v, "icl_file", c.judge.icl_file);
      read(v, "concurrency", c.judge.concurrency);
      read(v, "retry_budget", c.judge.retry_budget);
      read(v, "backoff_ms", c.judge.backoff_ms);
    }
    read(j, "output_dir", c.output_dir);
    read(j, "seed", c.seed);
  } catch (const json::exception& e) {
    throw Error(Errc::ConfigError, e.what());
  }
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Config c = config_from_json(ss.str());
  // Relative dataset paths resolve against the config file's directory.
  const auto base = path.parent_path();
  if (c.dataset.root && std::filesystem::path(*c.dataset.root).is_relative()) {
    c.dataset.root = (base / *c.dataset.root).lexically_normal().string();
  }
  if (c.dataset.split_file && std::filesystem::path(*c.dataset.split_file).is_relative()) {
    c.dataset.split_file = (base / *c.dataset.split_file).lexically_normal().string();
  }
  if (c.judge.icl_file && std::filesystem::path(*c.judge.icl_file).is_relative()) {
    c.judge.icl_file = (base / *c.judge.icl_file).lexically_normal().string();
  }
  return c;
}

void Config::validate() const {
  namespace fs = std::filesystem;
  if (dataset.root && !fs::is_directory(*dataset.root)) fail("dataset.root", "not a directory: " + *dataset.root);
  if (dataset.split_file && !fs::exists(*dataset.split_file)) fail("dataset.split_file", "missing");
  if (judge.icl_file && !fs::exists(*judge.icl_file)) fail("judge.icl_file", "missing");
  const LayoutSpec& l = dataset.layout;
  if (l.pano_height == 0 || l.pano_width == 0) fail("dataset.pano_*", "must be > 0");
  if (l.full_frame && l.pano_width != 2 * l.pano_height) fail("dataset.pano_width", "must be 2 * pano_height");
  if (l.satellite_size == 0) fail("dataset.satellite_size", "must be > 0");
  if (!(l.height_scale > 0)) fail("dataset.height_scale", "must be > 0");
  if (!(voxel.meters_per_voxel > 0)) fail("voxel.meters_per_voxel", "must be > 0");
  if (voxel.nz < 2 || voxel.nz > 4096) fail("voxel.nz", "must lie in [2, 4096]");
  if (!(voxel.camera_height_m > 0)) fail("voxel.camera_height_m", "must be > 0");
  if (!(controls.beta >= 0)) fail("controls.beta", "must be >= 0");
  if (controls.control_rows == 0 || controls.control_cols == 0) fail("controls.control_*", "must be > 0");
  if (controls.satellite_token_rows == 0 || controls.satellite_token_cols == 0) {
    fail("controls.satellite_token_*", "must be > 0");
  }
  if (attention.dim == 0) fail("attention.dim", "must be > 0");
  if (attention.patch_size == 0) fail("attention.patch_size", "must be > 0");
  if (diffusion.train_steps == 0) fail("diffusion.train_steps", "must be > 0");
  if (!(diffusion.beta_start > 0 && diffusion.beta_start <= diffusion.beta_end && diffusion.beta_end < 1)) {
    fail("diffusion.beta_*", "require 0 < beta_start <= beta_end < 1");
  }
  if (diffusion.sample_steps == 0 || diffusion.sample_steps > diffusion.train_steps) {
    fail("diffusion.sample_steps", "must lie in [1, train_steps]");
  }
  if (diffusion.height * diffusion.width * diffusion.channels == 0) fail("diffusion.shape", "must be non-empty");
  if (judge.concurrency == 0) fail("judge.concurrency", "must be > 0");
  if (judge.retry_budget < 1) fail("judge.retry_budget", "must be >= 1");
  if (judge.backoff_ms < 0) fail("judge.backoff_ms", "must be >= 0");
}

}  // namespace cvd
