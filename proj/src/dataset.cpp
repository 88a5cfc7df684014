#include "cvd/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "cvd/image_io.hpp"
#include "json.hpp"

namespace cvd {

using nlohmann::json;

std::string_view to_string(DatasetKind k) noexcept {
  switch (k) {
    case DatasetKind::CVUSA: return "CVUSA";
    case DatasetKind::CVACT: return "CVACT";
    case DatasetKind::OmniCity: return "OmniCity";
  }
  return "?";
}

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Unassigned: return "unassigned";
  }
  return "?";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "cvusa") return DatasetKind::CVUSA;
  if (lower == "cvact") return DatasetKind::CVACT;
  if (lower == "omnicity") return DatasetKind::OmniCity;
  throw Error(Errc::InvalidArgument, "unknown dataset layout \"" + std::string(name) + "\"");
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "test") return Split::Test;
  if (name == "unassigned") return Split::Unassigned;
  throw Error(Errc::InvalidArgument, "unknown split \"" + std::string(name) + "\"");
}

LayoutSpec LayoutSpec::defaults(DatasetKind kind) {
  LayoutSpec s;
  s.kind = kind;
  switch (kind) {
    case DatasetKind::CVUSA:
      s.patterns = {"bingmap/{id}.*", "streetview/{id}.*", std::nullopt};
      s.north = NorthConvention::CenterColumn;
      s.full_frame = false;
      s.pano_height = 256;
      break;
    case DatasetKind::CVACT:
      s.patterns = {"satview_polish/{id}_satView_polish.*", "streetview/{id}_grdView.*",
                    std::nullopt};
      s.north = NorthConvention::CenterColumn;
      break;
    case DatasetKind::OmniCity:
      s.patterns = {"satellite/{id}.*", "panorama/{id}.*", std::string("height/{id}.*")};
      s.north = NorthConvention::FirstColumn;
      s.requires_height = true;
      break;
  }
  return s;
}

const SampleRecord* Manifest::find(std::string_view id) const {
  auto it = std::lower_bound(samples.begin(), samples.end(), id,
                             [](const SampleRecord& r, std::string_view v) { return r.id < v; });
  return it != samples.end() && it->id == id ? &*it : nullptr;
}

std::string manifest_to_json(const Manifest& m) {
  json samples = json::array();
  for (const auto& s : m.samples) {
    json j{{"id", s.id},
           {"satellite", s.satellite},
           {"panorama", s.panorama},
           {"split", std::string(to_string(s.split))}};
    if (s.height) j["height"] = *s.height;
    samples.push_back(std::move(j));
  }
  json out{{"dataset", m.dataset}, {"root", m.root}, {"samples", samples}, {"warnings", m.warnings}};
  return out.dump(2);
}

Manifest manifest_from_json(std::string_view text) {
  const json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw Error(Errc::ParseError, "manifest is not valid JSON");
  try {
    Manifest m;
    m.dataset = j.at("dataset").get<std::string>();
    m.root = j.at("root").get<std::string>();
    for (const auto& s : j.at("samples")) {
      SampleRecord r;
      r.id = s.at("id").get<std::string>();
      r.satellite = s.at("satellite").get<std::string>();
      r.panorama = s.at("panorama").get<std::string>();
      if (s.contains("height")) r.height = s.at("height").get<std::string>();
      r.split = parse_split(s.value("split", std::string("unassigned")));
      m.samples.push_back(std::move(r));
    }
    m.warnings = j.value("warnings", std::vector<std::string>{});
    std::sort(m.samples.begin(), m.samples.end(),
              [](const SampleRecord& a, const SampleRecord& b) { return a.id < b.id; });
    return m;
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, std::string("manifest: ") + e.what());
  }
}

namespace {

std::regex pattern_regex(const std::string& pattern) {
  std::string re;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    if (pattern.compare(i, 4, "{id}") == 0) {
      re += "([^/]+?)";
      i += 3;
      continue;
    }
    const char c = pattern[i];
    if (c == '*') {
      re += "[^/]*";
    } else if (std::string_view(".^$|()[]{}+?\\").find(c) != std::string_view::npos) {
      re += '\\';
      re += c;
    } else {
      re += c;
    }
  }
  return std::regex(re);
}

bool is_image_ext(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".cvdf";
}

std::map<std::string, Split> read_split_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, "split file " + path.string());
  std::map<std::string, Split> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error(Errc::ParseError, "split line without comma: " + line);
    std::string split = line.substr(comma + 1);
    while (!split.empty() && std::isspace(static_cast<unsigned char>(split.back()))) split.pop_back();
    out[line.substr(0, comma)] = parse_split(split);
  }
  return out;
}

}  // namespace

Manifest scan_dataset(const std::filesystem::path& root, const LayoutSpec& layout,
                      const std::optional<std::filesystem::path>& split_file, std::uint64_t seed) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root)) throw Error(Errc::RootMissing, root.string());

  struct Found {
    std::optional<std::string> sat, pano, height;
  };
  std::map<std::string, Found> found;
  const std::regex sat_re = pattern_regex(layout.patterns.satellite);
  const std::regex pano_re = pattern_regex(layout.patterns.panorama);
  const std::optional<std::regex> height_re =
      layout.patterns.height ? std::optional(pattern_regex(*layout.patterns.height)) : std::nullopt;

  std::vector<std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && is_image_ext(entry.path())) {
      files.push_back(fs::relative(entry.path(), root).generic_string());
    }
  }
  std::sort(files.begin(), files.end());

  Manifest m;
  m.dataset = std::string(to_string(layout.kind));
  m.root = fs::absolute(root).lexically_normal().string();
  for (const auto& rel : files) {
    std::smatch match;
    if (std::regex_match(rel, match, sat_re)) {
      found[match[1]].sat = rel;
    } else if (std::regex_match(rel, match, pano_re)) {
      found[match[1]].pano = rel;
    } else if (height_re && std::regex_match(rel, match, *height_re)) {
      found[match[1]].height = rel;
    }
  }

  for (const auto& [id, f] : found) {
    const bool need_height = layout.requires_height;
    if (f.sat && f.pano && (!need_height || f.height)) {
      m.samples.push_back({id, *f.sat, *f.pano, f.height, Split::Unassigned});
      continue;
    }
    std::string missing;
    if (!f.sat) missing += " satellite";
    if (!f.pano) missing += " panorama";
    if (need_height && !f.height) missing += " height";
    m.warnings.push_back("unpaired sample " + id + ": missing" + missing);
  }
  if (m.samples.empty()) throw Error(Errc::EmptyDataset, "no pairable samples under " + root.string());

  if (split_file) {
    const auto splits = read_split_file(*split_file);
    for (auto& s : m.samples) {
      auto it = splits.find(s.id);
      if (it != splits.end()) s.split = it->second;
    }
  } else if (layout.kind == DatasetKind::CVUSA) {
    std::vector<std::size_t> order(m.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_train = (order.size() * 8) / 10;
    for (std::size_t k = 0; k < order.size(); ++k) {
      m.samples[order[k]].split = k < n_train ? Split::Train : Split::Test;
    }
  }
  return m;
}

Image roll_columns(const Image& img, std::ptrdiff_t columns) {
  const auto w = static_cast<std::ptrdiff_t>(img.width());
  const std::ptrdiff_t shift = ((columns % w) + w) % w;
  Image out(img.height(), img.width(), img.channels());
  for (std::size_t y = 0; y < img.height(); ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      const auto dst = static_cast<std::size_t>((x + shift) % w);
      for (std::size_t c = 0; c < img.channels(); ++c) {
        out.at(y, dst, c) = img.at(y, static_cast<std::size_t>(x), c);
      }
    }
  }
  return out;
}

Image align_panorama(const Image& panorama, NorthConvention convention) {
  if (convention == NorthConvention::CenterColumn) return panorama;
  return roll_columns(panorama, static_cast<std::ptrdiff_t>(panorama.width() / 2));
}

HeightField resize_height(const HeightField& h, Eigen::Index rows, Eigen::Index cols) {
  if (h.rows() == rows && h.cols() == cols) return h;
  HeightField out;
  out.values.resize(rows, cols);
  const double sy = double(h.rows()) / double(rows);
  const double sx = double(h.cols()) / double(cols);
  for (Eigen::Index y = 0; y < rows; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(h.rows() - 1));
    const auto y0 = static_cast<Eigen::Index>(fy);
    const Eigen::Index y1 = std::min(y0 + 1, h.rows() - 1);
    const double wy = fy - double(y0);
    for (Eigen::Index x = 0; x < cols; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(h.cols() - 1));
      const auto x0 = static_cast<Eigen::Index>(fx);
      const Eigen::Index x1 = std::min(x0 + 1, h.cols() - 1);
      const double wx = fx - double(x0);
      out.values(y, x) = (1 - wy) * ((1 - wx) * h.values(y0, x0) + wx * h.values(y0, x1)) +
                         wy * ((1 - wx) * h.values(y1, x0) + wx * h.values(y1, x1));
    }
  }
  return out;
}

SamplePair load_pair(const Manifest& manifest, std::string_view id, const LayoutSpec& layout) {
  const SampleRecord* rec = manifest.find(id);
  if (!rec) throw Error(Errc::MissingFile, "sample \"" + std::string(id) + "\" not in manifest");
  const std::filesystem::path root(manifest.root);

  auto load = [&](const std::string& rel) {
    const auto path = root / rel;
    if (!std::filesystem::exists(path)) throw Error(Errc::MissingFile, path.string());
    return read_image(path);
  };

  if (layout.full_frame && layout.pano_width != 2 * layout.pano_height) {
    throw Error(Errc::InvalidArgument, "full-frame panoramas need width == 2 * height");
  }

  SamplePair pair;
  pair.id = rec->id;
  pair.split = rec->split;
  pair.convention = layout.north;
  pair.satellite = resize_bilinear(load(rec->satellite), layout.satellite_size, layout.satellite_size);
  pair.panorama = align_panorama(
      resize_bilinear(load(rec->panorama), layout.pano_height, layout.pano_width), layout.north);

  if (rec->height) {
    const auto path = root / *rec->height;
    const auto size = static_cast<Eigen::Index>(layout.satellite_size);
    pair.height = resize_height(load_height_field(path, layout.height_scale), size, size);
  } else if (layout.requires_height) {
    throw Error(Errc::MissingFile, "height map for sample " + rec->id);
  }
  return pair;
}

}  // namespace cvd
