// cvdiff: command-line entry point.
//
// Exit codes: 0 success, 1 domain error (or failed internal check), 2 usage error.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cvd/attention.hpp"
#include "cvd/config.hpp"
#include "cvd/controls.hpp"
#include "cvd/dataset.hpp"
#include "cvd/diffusion.hpp"
#include "cvd/gptjudge.hpp"
#include "cvd/image_io.hpp"
#include "cvd/metrics.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

cvd::Config resolve_config(const CommonArgs& args) {
  cvd::Config c = args.config_path.empty() ? cvd::Config{} : cvd::load_config(args.config_path);
  if (args.seed) c.seed = *args.seed;
  if (args.out) c.output_dir = *args.out;
  c.validate();
  return c;
}

fs::path ensure_out(const cvd::Config& c) {
  fs::create_directories(c.output_dir);
  return c.output_dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw cvd::Error(cvd::Errc::Io, "cannot write " + path.string());
  out << text << "\n";
}

// ---------------------------------------------------------------------------

struct BuildControlsArgs {
  std::string sample;
  std::string height;
};

cvd::HeightField resolve_height(const cvd::Config& c, const BuildControlsArgs& a) {
  if (!a.height.empty()) return cvd::load_height_field(a.height, c.dataset.layout.height_scale);
  if (!c.dataset.root) throw cvd::Error(cvd::Errc::ConfigError, "dataset.root is required without --height");
  if (a.sample.empty()) throw cvd::Error(cvd::Errc::InvalidArgument, "--sample or --height is required");
  const cvd::LayoutSpec& layout = c.dataset.layout;
  const cvd::Manifest m = cvd::scan_dataset(*c.dataset.root, layout, std::nullopt, c.seed);
  const cvd::SampleRecord* rec = m.find(a.sample);
  if (!rec || !rec->height) {
    const std::string unpaired = "unpaired sample " + a.sample + ":";
    bool known = rec != nullptr;
    for (const auto& w : m.warnings) known = known || w.rfind(unpaired, 0) == 0;
    if (!known) throw cvd::Error(cvd::Errc::MissingFile, "sample \"" + a.sample + "\" not found");
    if (!layout.patterns.height) throw cvd::Error(cvd::Errc::MissingFile, "layout has no height maps");
    std::string expected = *layout.patterns.height;
    expected.replace(expected.find("{id}"), 4, a.sample);
    throw cvd::Error(cvd::Errc::MissingFile, "height map " + (fs::path(*c.dataset.root) / expected).string() +
                                                 " not found for sample " + a.sample);
  }
  return *cvd::load_pair(m, a.sample, layout).height;
}

int cmd_build_controls(const CommonArgs& common, const BuildControlsArgs& a) {
  const cvd::Config c = resolve_config(common);
  const cvd::HeightField h = resolve_height(c, a);
  const cvd::VoxelGrid grid = cvd::grid_from_height(h, c.voxel.meters_per_voxel, c.voxel.nz);
  const cvd::CameraPose pose = cvd::default_pose(grid, c.voxel.camera_height_m);
  const cvd::PanoramaDims dims = cvd::PanoramaDims::full_frame(c.dataset.layout.pano_width / 2);

  const auto [structure, mapping] = cvd::build_controls(grid, pose, dims);
  const cvd::GridDims control{c.controls.control_rows, c.controls.control_cols};
  const cvd::GridDims tokens{c.controls.satellite_token_rows, c.controls.satellite_token_cols};
  const cvd::GridDims pixels{static_cast<std::size_t>(h.rows()), static_cast<std::size_t>(h.cols())};
  const cvd::WeightMatrix weights =
      cvd::build_weight_matrix(mapping, control, tokens, pixels, c.controls.beta);
  const cvd::ContinuityReport cont = cvd::check_wrap_continuity(structure, mapping);

  const fs::path out = ensure_out(c);
  cvd::write_structure_png(structure, out / "structure.png");
  cvd::write_tensor(cvd::mapping_to_tensor(mapping), out / "texture_mapping.cvdf");
  cvd::write_tensor(cvd::weights_to_tensor(weights), out / "weight_matrix.cvdf");

  const bool ok = cont.bit_difference_rate <= 0.01 && weights.values.allFinite();
  json report{{"sample", a.sample.empty() ? a.height : a.sample},
              {"panorama", {dims.height, dims.width}},
              {"camera", {pose.x_cen, pose.y_cen, pose.z_cam}},
              {"rows", cont.rows},
              {"differing_bits", cont.differing_bits},
              {"bit_difference_rate", cont.bit_difference_rate},
              {"compared_coordinates", cont.compared_coordinates},
              {"max_coordinate_discrepancy", cont.max_coordinate_discrepancy},
              {"passed", ok}};
  write_text(out / "continuity.json", report.dump(2));
  std::cout << report.dump(2) << "\n";
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct AttentionArgs {
  std::string q, k, v, m;
};

Eigen::MatrixXd matrix_from_tensor(const cvd::Tensor& t, const std::string& what) {
  if (t.rank() != 2) throw cvd::Error(cvd::Errc::ShapeMismatch, what + " must be a rank-2 tensor");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(t.dims()[0]), static_cast<Eigen::Index>(t.dims()[1]));
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = t[static_cast<std::size_t>(r * out.cols() + c)];
  }
  return out;
}

cvd::Tensor tensor_from_matrix(const Eigen::MatrixXd& m) {
  cvd::Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      t[static_cast<std::size_t>(r * m.cols() + c)] = static_cast<float>(m(r, c));
    }
  }
  return t;
}

int cmd_attention_demo(const CommonArgs& common, const AttentionArgs& a) {
  const cvd::Config c = resolve_config(common);
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
    return m;
  };

  const auto d = static_cast<Eigen::Index>(c.attention.dim);
  const auto n_pano = static_cast<Eigen::Index>(c.controls.control_rows * c.controls.control_cols);
  const auto n_sat =
      static_cast<Eigen::Index>(c.controls.satellite_token_rows * c.controls.satellite_token_cols);

  cvd::AttentionInputs<double> in;
  in.m = a.m.empty() ? Eigen::MatrixXd::Constant(n_pano, n_sat, 0.5)
                     : matrix_from_tensor(cvd::read_tensor(a.m), "M");
  in.q = a.q.empty() ? random(in.m.rows(), d) : matrix_from_tensor(cvd::read_tensor(a.q), "Q");
  in.k = a.k.empty() ? random(in.m.cols(), in.q.cols()) : matrix_from_tensor(cvd::read_tensor(a.k), "K");
  in.v = a.v.empty() ? random(in.k.rows(), in.q.cols()) : matrix_from_tensor(cvd::read_tensor(a.v), "V");
  in.validate();

  const cvd::AttentionOptions opt{c.attention.scale_affinity};
  const Eigen::MatrixXd probs = cvd::attention_weights(in, opt);
  const Eigen::MatrixXd z = probs * in.v;
  const Eigen::VectorXd entropy = cvd::row_entropy(probs);
  const double row_sum_dev = (probs.rowwise().sum().array() - 1.0).abs().maxCoeff();
  const bool ok = z.allFinite() && row_sum_dev <= 1e-6;

  const fs::path out = ensure_out(c);
  cvd::write_tensor(tensor_from_matrix(z), out / "z.cvdf");
  json report{{"query_tokens", in.q.rows()},
              {"key_tokens", in.k.rows()},
              {"dim", in.q.cols()},
              {"scale_affinity", opt.scale_affinity},
              {"row_sum_max_deviation", row_sum_dev},
              {"entropy_mean", entropy.mean()},
              {"entropy_min", entropy.minCoeff()},
              {"entropy_max", entropy.maxCoeff()},
              {"entropy_uniform", std::log(double(in.k.rows()))},
              {"passed", ok}};
  write_text(out / "attention_report.json", report.dump(2));
  std::cout << report.dump(2) << "\n";
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct DiffusionArgs {
  std::optional<std::size_t> steps;
  std::optional<std::size_t> train_steps;
};

int cmd_diffusion_demo(const CommonArgs& common, const DiffusionArgs& a) {
  cvd::Config c = resolve_config(common);
  if (a.steps) c.diffusion.sample_steps = *a.steps;
  if (a.train_steps) c.diffusion.train_steps = *a.train_steps;
  c.validate();

  const cvd::NoiseSchedule sched =
      cvd::linear_schedule(c.diffusion.train_steps, c.diffusion.beta_start, c.diffusion.beta_end);
  const auto n = static_cast<Eigen::Index>(c.diffusion.height * c.diffusion.width * c.diffusion.channels);
  std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  cvd::Sample<double> x0(n);
  for (Eigen::Index i = 0; i < n; ++i) x0(i) = unit(rng);

  const auto start = std::chrono::steady_clock::now();
  const auto pred = cvd::oracle_predictor<double>(x0, sched);
  const cvd::Sample<double> out =
      cvd::ddim_sample<double>(pred, n, nullptr, sched, c.diffusion.sample_steps, c.seed);
  const auto ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  const double err = (out - x0).abs().maxCoeff();
  const bool ok = err <= 1e-4;
  json report{{"steps", c.diffusion.sample_steps},
              {"train_steps", c.diffusion.train_steps},
              {"shape", {c.diffusion.height, c.diffusion.width, c.diffusion.channels}},
              {"max_abs_error", err},
              {"runtime_ms", ms},
              {"passed", ok}};
  write_text(ensure_out(c) / "diffusion_report.json", report.dump(2));
  std::cout << report.dump(2) << "\n";
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------

std::map<std::string, fs::path> images_by_stem(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw cvd::Error(cvd::Errc::RootMissing, dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out[e.path().stem().string()] = e.path();
  }
  return out;
}

struct MetricsArgs {
  std::string pred, gt, feat_pred, feat_gt;
};

int cmd_metrics(const CommonArgs& common, const MetricsArgs& a) {
  const cvd::Config c = resolve_config(common);
  const auto preds = images_by_stem(a.pred);
  const auto gts = images_by_stem(a.gt);
  std::vector<cvd::ImageScores> scores;
  std::vector<std::string> unpaired;
  for (const auto& [name, path] : preds) {
    auto it = gts.find(name);
    if (it == gts.end()) {
      unpaired.push_back(name);
      continue;
    }
    scores.push_back(cvd::score_pair(name, cvd::read_image(path), cvd::read_image(it->second)));
  }
  if (scores.empty()) throw cvd::Error(cvd::Errc::EmptyDataset, "no prediction/ground-truth pairs");
  cvd::MetricReport report = cvd::aggregate(std::move(scores));
  if (!a.feat_pred.empty() && !a.feat_gt.empty()) {
    report.kid = cvd::kid(cvd::features_from_tensor(cvd::read_tensor(a.feat_pred)),
                          cvd::features_from_tensor(cvd::read_tensor(a.feat_gt)));
  }

  bool ok = true;
  json per = json::array();
  for (const auto& s : report.per_image) {
    ok = ok && s.ssim >= -1.0 && s.ssim <= 1.0 + 1e-12 && s.psnr_db >= 0 && std::isfinite(s.sd);
    per.push_back({{"name", s.name}, {"ssim", s.ssim}, {"psnr_db", s.psnr_db}, {"sd", s.sd}});
  }
  json j{{"pairs", report.per_image.size()},
         {"mean_ssim", report.mean_ssim},
         {"mean_psnr_db", report.mean_psnr_db},
         {"mean_sd", report.mean_sd},
         {"kid", report.kid ? json(*report.kid) : json(nullptr)},
         {"unpaired", unpaired},
         {"per_image", per},
         {"passed", ok}};
  write_text(ensure_out(c) / "metrics.json", j.dump(2));
  std::cout << j.dump(2) << "\n";
  return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct GptArgs {
  std::string pred, gt;
  bool mock = false;
};

std::vector<cvd::IclExample> load_icl(const cvd::Config& c) {
  std::vector<cvd::IclExample> out;
  if (!c.judge.icl_file) return out;
  std::ifstream in(*c.judge.icl_file);
  const json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_array()) throw cvd::Error(cvd::Errc::ConfigError, "icl_file must hold a JSON array");
  for (const auto& e : j) {
    if (out.size() >= c.judge.icl_count) break;
    cvd::IclExample ex;
    ex.id = e.value("id", std::string{});
    ex.pred_ref = e.value("pred", std::string{});
    ex.gt_ref = e.value("gt", std::string{});
    ex.scores = {e.at("consistency").get<int>(), e.at("visual_realism").get<int>(),
                 e.at("perceptual_quality").get<int>()};
    if (e.contains("total")) ex.total = e.at("total").get<int>();
    ex.reasons = e.value("reasons", std::map<std::string, std::string>{});
    out.push_back(std::move(ex));
  }
  return out;
}

int cmd_gpt_score(const CommonArgs& common, const GptArgs& a) {
  const cvd::Config c = resolve_config(common);
  cvd::Rubric rubric = cvd::default_rubric();
  rubric.examples = load_icl(c);

  std::unique_ptr<cvd::ChatTransport> transport;
  if (a.mock) {
    transport = std::make_unique<cvd::MockTransport>();
  } else {
    const char* key = std::getenv(c.judge.api_key_env.c_str());
    if (!key || !*key) {
      throw cvd::Error(cvd::Errc::ConfigError, "environment variable " + c.judge.api_key_env + " is not set");
    }
    cvd::HttpTransportConfig hc;
    hc.endpoint = c.judge.endpoint;
    hc.model = c.judge.model;
    hc.api_key = key;
    transport = std::make_unique<cvd::HttpTransport>(hc);
  }

  const auto preds = images_by_stem(a.pred);
  const auto gts = images_by_stem(a.gt);
  std::vector<cvd::JudgeItem> items;
  for (const auto& [name, path] : preds) {
    auto it = gts.find(name);
    if (it == gts.end()) continue;
    items.push_back({name, std::make_shared<cvd::Image>(cvd::read_image(path)),
                     std::make_shared<cvd::Image>(cvd::read_image(it->second))});
  }
  if (items.empty()) throw cvd::Error(cvd::Errc::EmptyDataset, "no prediction/ground-truth pairs");

  cvd::JudgeOptions opt;
  opt.retry_budget = c.judge.retry_budget;
  opt.backoff = std::chrono::milliseconds(a.mock ? 0 : c.judge.backoff_ms);
  const auto results = cvd::score_batch(*transport, rubric, items, c.judge.concurrency, opt);

  std::ostringstream lines;
  std::size_t failures = 0, overridden = 0;
  json errors = json::array();
  for (const auto& r : results) {
    if (!r.card) {
      ++failures;
      errors.push_back({{"id", r.id}, {"error", r.error}});
      continue;
    }
    overridden += r.card->overridden ? 1 : 0;
    lines << cvd::scorecard_json_line(r.id, *r.card) << "\n";
  }
  const fs::path out = ensure_out(c);
  {
    std::ofstream f(out / "scores.jsonl", std::ios::trunc);
    f << lines.str();
  }
  json summary{{"samples", results.size()},
               {"scored", results.size() - failures},
               {"overridden", overridden},
               {"errors", errors},
               {"transport", a.mock ? "mock" : "http"},
               {"passed", failures == 0}};
  std::cout << summary.dump(2) << "\n";
  return failures == 0 ? 0 : 1;
}

// ---------------------------------------------------------------------------

struct ScanArgs {
  std::string root, layout, split_file;
};

int cmd_dataset_scan(const CommonArgs& common, const ScanArgs& a) {
  const cvd::Config c = resolve_config(common);
  cvd::LayoutSpec layout = c.dataset.layout;
  if (!a.layout.empty()) layout = cvd::LayoutSpec::defaults(cvd::parse_dataset_kind(a.layout));
  const std::string root = !a.root.empty() ? a.root : c.dataset.root.value_or("");
  if (root.empty()) throw cvd::Error(cvd::Errc::RootMissing, "no dataset root given");
  std::optional<fs::path> split;
  if (!a.split_file.empty()) split = a.split_file;
  else if (c.dataset.split_file) split = *c.dataset.split_file;

  const cvd::Manifest m = cvd::scan_dataset(root, layout, split, c.seed);
  write_text(ensure_out(c) / "manifest.json", cvd::manifest_to_json(m));
  for (const auto& w : m.warnings) std::cerr << "warning: " << w << "\n";
  json summary{{"dataset", m.dataset}, {"samples", m.samples.size()}, {"warnings", m.warnings.size()}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-view control construction, attention/diffusion demos and evaluation"};
  app.require_subcommand(1);

  CommonArgs common;
  std::uint64_t seed = 0;
  std::string out;
  app.add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
  auto* seed_opt = app.add_option("--seed", seed, "Seed for every stochastic step");
  auto* out_opt = app.add_option("--out", out, "Output directory");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Seed for every stochastic step");
    sub->add_option("--out", out, "Output directory");
  };

  BuildControlsArgs bc;
  auto* build = app.add_subcommand("build-controls", "Structure map, texture mapping and weight matrix");
  add_common(build);
  build->add_option("--sample", bc.sample, "Sample id in the configured dataset");
  build->add_option("--height", bc.height, "Height map (16-bit PNG or CVDF) instead of a dataset sample");

  AttentionArgs at;
  auto* attention = app.add_subcommand("attention-demo", "Run the enhanced cross-view attention");
  add_common(attention);
  attention->add_option("--q", at.q, "Query tokens (CVDF, n_p x d)");
  attention->add_option("--k", at.k, "Key tokens (CVDF, n_s x d)");
  attention->add_option("--v", at.v, "Value tokens (CVDF, n_s x d)");
  attention->add_option("--m", at.m, "Weight matrix (CVDF, n_p x n_s)");

  DiffusionArgs df;
  auto* diffusion = app.add_subcommand("diffusion-demo", "DDIM oracle-recovery experiment");
  add_common(diffusion);
  diffusion->add_option("--steps", df.steps, "DDIM sampling steps");
  diffusion->add_option("--train-steps", df.train_steps, "Schedule length T");

  MetricsArgs mt;
  auto* metrics = app.add_subcommand("metrics", "SSIM / PSNR / SD (and KID) over paired images");
  add_common(metrics);
  metrics->add_option("--pred", mt.pred, "Directory of predictions")->required();
  metrics->add_option("--gt", mt.gt, "Directory of ground truths")->required();
  metrics->add_option("--feat-pred", mt.feat_pred, "KID features for predictions (CVDF n x d)");
  metrics->add_option("--feat-gt", mt.feat_gt, "KID features for ground truths (CVDF n x d)");

  GptArgs gp;
  auto* gpt = app.add_subcommand("gpt-score", "Two-stage judge scoring");
  add_common(gpt);
  gpt->add_option("--pred", gp.pred, "Directory of predictions")->required();
  gpt->add_option("--gt", gp.gt, "Directory of ground truths")->required();
  gpt->add_flag("--mock", gp.mock, "Use the deterministic mock transport");

  ScanArgs sc;
  auto* scan = app.add_subcommand("dataset-scan", "Scan a dataset directory into a manifest");
  add_common(scan);
  scan->add_option("--root", sc.root, "Dataset root");
  scan->add_option("--layout", sc.layout, "CVUSA | CVACT | OmniCity");
  scan->add_option("--split-file", sc.split_file, "CSV of id,train|test");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  bool seed_given = seed_opt->count() > 0;
  bool out_given = out_opt->count() > 0;
  for (auto* sub : app.get_subcommands()) {
    seed_given = seed_given || sub->count("--seed") > 0;
    out_given = out_given || sub->count("--out") > 0;
  }
  if (seed_given) common.seed = seed;
  if (out_given) common.out = out;

  try {
    if (build->parsed()) return cmd_build_controls(common, bc);
    if (attention->parsed()) return cmd_attention_demo(common, at);
    if (diffusion->parsed()) return cmd_diffusion_demo(common, df);
    if (metrics->parsed()) return cmd_metrics(common, mt);
    if (gpt->parsed()) return cmd_gpt_score(common, gp);
    if (scan->parsed()) return cmd_dataset_scan(common, sc);
  } catch (const cvd::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == cvd::Errc::InvalidArgument ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
