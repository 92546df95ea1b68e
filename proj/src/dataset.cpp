#include "affgrasp/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "affgrasp/error.hpp"
#include "affgrasp/io.hpp"
#include "affgrasp/rng.hpp"

namespace affgrasp::data {

using geom::PointCloud;
using geom::Vec3;

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Mug: return "Mug";
    case Category::Chair: return "Chair";
    case Category::Knife: return "Knife";
    case Category::Guitar: return "Guitar";
    case Category::Lamp: return "Lamp";
  }
  return "Unknown";
}

Category parse_category(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
  for (Category c : kAllCategories) {
    std::string cand(to_string(c));
    std::transform(cand.begin(), cand.end(), cand.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (cand == lower) return c;
  }
  throw Error(ErrorCode::UnknownCategory, "unknown category '" + std::string(name) + "'");
}

void LabeledSample::validate() const {
  cloud.validate();
  if (!cloud.labels) throw Error(ErrorCode::InvalidArgument, "sample " + id + " has no labels");
  const auto& l = *cloud.labels;
  const auto positives = std::count(l.begin(), l.end(), std::uint8_t{1});
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(l.size())) {
    throw Error(ErrorCode::InvalidArgument, "sample " + id + " needs both affordance and non-affordance points");
  }
}

// ---- parsing --------------------------------------------------------------------------

namespace {

struct LineReader {
  std::string_view text;
  std::size_t pos = 0;
  int line_no = 0;

  bool next(std::string_view& line) {
    if (pos >= text.size()) return false;
    const auto end = text.find('\n', pos);
    const auto stop = end == std::string_view::npos ? text.size() : end;
    line = text.substr(pos, stop - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos = stop + 1;
    ++line_no;
    return true;
  }
};

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const auto start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

[[noreturn]] void parse_fail(int line_no, const std::string& what) {
  throw Error(ErrorCode::ParseError, "line " + std::to_string(line_no) + ": " + what);
}

double to_double(std::string_view tok, int line_no) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc{} || ptr != tok.data() + tok.size() || !std::isfinite(v)) {
    parse_fail(line_no, "invalid number '" + std::string(tok) + "'");
  }
  return v;
}

std::uint8_t to_label(std::string_view tok, int line_no) {
  const double v = to_double(tok, line_no);
  if (v != 0.0 && v != 1.0) parse_fail(line_no, "label must be 0 or 1, got '" + std::string(tok) + "'");
  return static_cast<std::uint8_t>(v);
}

}  // namespace

PointCloud parse_ply(std::string_view text) {
  LineReader reader{text};
  std::string_view line;
  if (!reader.next(line) || line != "ply") parse_fail(reader.line_no, "missing 'ply' magic");

  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::string> properties;
  };
  std::vector<Element> elements;
  bool ascii = false;
  bool header_done = false;
  while (reader.next(line)) {
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") {
      header_done = true;
      break;
    }
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2 || tok[1] != "ascii") parse_fail(reader.line_no, "only ascii PLY is supported");
      ascii = true;
    } else if (tok[0] == "element") {
      if (tok.size() != 3) parse_fail(reader.line_no, "malformed element line");
      Element e;
      e.name = std::string(tok[1]);
      const auto count = to_double(tok[2], reader.line_no);
      if (count < 0 || count != std::floor(count)) parse_fail(reader.line_no, "bad element count");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (tok[0] == "property") {
      if (elements.empty()) parse_fail(reader.line_no, "property before element");
      if (tok.size() < 3) parse_fail(reader.line_no, "malformed property line");
      elements.back().properties.emplace_back(tok.back());
    } else {
      parse_fail(reader.line_no, "unexpected header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!header_done) parse_fail(reader.line_no, "missing end_header");
  if (!ascii) parse_fail(reader.line_no, "missing format line");

  PointCloud cloud;
  for (const auto& e : elements) {
    if (e.name != "vertex") {
      for (std::size_t i = 0; i < e.count; ++i) {
        if (!reader.next(line)) parse_fail(reader.line_no + 1, "unexpected end of file in element " + e.name);
      }
      continue;
    }
    const auto find = [&](std::string_view name) -> int {
      const auto it = std::find(e.properties.begin(), e.properties.end(), name);
      return it == e.properties.end() ? -1 : static_cast<int>(it - e.properties.begin());
    };
    const int ix = find("x"), iy = find("y"), iz = find("z"), il = find("affordance");
    if (ix < 0 || iy < 0 || iz < 0) parse_fail(reader.line_no, "vertex element lacks x/y/z");
    if (e.count == 0) throw Error(ErrorCode::EmptyInput, "PLY declares zero vertices");
    if (il >= 0) cloud.labels.emplace();
    cloud.points.reserve(e.count);
    for (std::size_t i = 0; i < e.count; ++i) {
      if (!reader.next(line)) {
        parse_fail(reader.line_no + 1, "expected " + std::to_string(e.count) + " vertices, file ends after " +
                                           std::to_string(i));
      }
      const auto tok = split_ws(line);
      if (tok.size() < e.properties.size()) parse_fail(reader.line_no, "vertex row has too few values");
      cloud.points.emplace_back(to_double(tok[ix], reader.line_no), to_double(tok[iy], reader.line_no),
                                to_double(tok[iz], reader.line_no));
      if (il >= 0) cloud.labels->push_back(to_label(tok[il], reader.line_no));
    }
    return cloud;
  }
  parse_fail(reader.line_no, "no vertex element");
}

PointCloud parse_xyz(std::string_view text) {
  LineReader reader{text};
  std::string_view line;
  PointCloud cloud;
  std::size_t columns = 0;
  while (reader.next(line)) {
    const auto tok = split_ws(line);
    if (tok.empty() || tok[0].front() == '#') continue;
    if (tok.size() != 3 && tok.size() != 4) parse_fail(reader.line_no, "expected 3 or 4 columns");
    if (columns == 0) {
      columns = tok.size();
      if (columns == 4) cloud.labels.emplace();
    } else if (tok.size() != columns) {
      parse_fail(reader.line_no, "inconsistent column count");
    }
    cloud.points.emplace_back(to_double(tok[0], reader.line_no), to_double(tok[1], reader.line_no),
                              to_double(tok[2], reader.line_no));
    if (columns == 4) cloud.labels->push_back(to_label(tok[3], reader.line_no));
  }
  if (cloud.empty()) throw Error(ErrorCode::EmptyInput, "point file contains no points");
  return cloud;
}

PointCloud load_point_cloud(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  const bool is_ply = text.rfind("ply\n", 0) == 0 || text.rfind("ply\r\n", 0) == 0;
  return is_ply ? parse_ply(text) : parse_xyz(text);
}

std::string format_ply(const PointCloud& cloud) {
  std::string out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.size()) +
                    "\nproperty float x\nproperty float y\nproperty float z\n";
  if (cloud.labels) out += "property uchar affordance\n";
  out += "end_header\n";
  char buf[128];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    int n = std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g", static_cast<float>(p.x()), static_cast<float>(p.y()),
                          static_cast<float>(p.z()));
    out.append(buf, n);
    if (cloud.labels) out += (*cloud.labels)[i] ? " 1" : " 0";
    out += '\n';
  }
  return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  LineReader reader{text};
  std::string_view line;
  std::vector<ManifestEntry> out;
  while (reader.next(line)) {
    if (line.empty() || line.front() == '#') continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos) parse_fail(reader.line_no, "manifest rows need three tab-separated fields");
    ManifestEntry e;
    e.id = std::string(line.substr(0, t1));
    e.category = parse_category(line.substr(t1 + 1, t2 - t1 - 1));
    e.path = std::filesystem::path(std::string(line.substr(t2 + 1)));
    if (e.path.is_relative()) e.path = path.parent_path() / e.path;
    out.push_back(std::move(e));
  }
  return out;
}

std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    out += e.id + '\t' + std::string(to_string(e.category)) + '\t' + e.path.generic_string() + '\n';
  }
  return out;
}

std::vector<LabeledSample> load_manifest_samples(const std::filesystem::path& manifest) {
  std::vector<LabeledSample> out;
  for (const auto& e : read_manifest(manifest)) {
    LabeledSample s{e.id, e.category, load_point_cloud(e.path)};
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

// ---- augmentation & perturbation ------------------------------------------------------

std::vector<LabeledSample> augment(const LabeledSample& sample) {
  using Map = Vec3 (*)(const Vec3&);
  static constexpr std::array<Map, 6> maps{
      [](const Vec3& p) { return p; },
      [](const Vec3& p) { return Vec3(-p.y(), p.x(), p.z()); },
      [](const Vec3& p) { return Vec3(-p.x(), -p.y(), p.z()); },
      [](const Vec3& p) { return Vec3(p.y(), -p.x(), p.z()); },
      [](const Vec3& p) { return Vec3(-p.x(), p.y(), p.z()); },
      [](const Vec3& p) { return Vec3(p.x(), -p.y(), p.z()); },
  };
  const std::string base = base_id(sample.id);
  std::vector<LabeledSample> out;
  out.reserve(maps.size());
  for (std::size_t k = 0; k < maps.size(); ++k) {
    LabeledSample s;
    s.id = base + std::string(kAugmentSuffixes[k]);
    s.category = sample.category;
    s.cloud.labels = sample.cloud.labels;
    s.cloud.points.reserve(sample.cloud.size());
    for (const auto& p : sample.cloud.points) s.cloud.points.push_back(maps[k](p));
    out.push_back(std::move(s));
  }
  return out;
}

std::string base_id(std::string_view id) {
  const auto at = id.find('@');
  return std::string(id.substr(0, at));
}

PointCloud downsample(const PointCloud& cloud, double keep_probability, std::uint64_t seed) {
  if (!(keep_probability > 0.0 && keep_probability <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "keep_probability must lie in (0, 1]");
  }
  if (keep_probability == 1.0) return cloud;
  Rng rng(mix_seed(seed, 0xD0));
  PointCloud out;
  if (cloud.labels) out.labels.emplace();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (uniform01(rng) < keep_probability) {
      out.points.push_back(cloud.points[i]);
      if (cloud.labels) out.labels->push_back((*cloud.labels)[i]);
    }
  }
  if (out.empty()) throw Error(ErrorCode::EmptyResult, "downsampling removed every point");
  return out;
}

PointCloud add_gaussian_noise(const PointCloud& cloud, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise sigma must be nonnegative");
  if (sigma == 0.0) return cloud;
  Rng rng(mix_seed(seed, 0x40));
  std::normal_distribution<double> normal(0.0, sigma);
  PointCloud out = cloud;
  for (auto& p : out.points) {
    const double dx = normal(rng);
    const double dy = normal(rng);
    const double dz = normal(rng);
    p += Vec3(dx, dy, dz);
  }
  return out;
}

PointCloud perturb(const PointCloud& cloud, const PerturbationConfig& config) {
  return add_gaussian_noise(downsample(cloud, config.keep_probability, config.seed), config.noise_sigma,
                            config.seed);
}

DatasetSplit split_dataset(const std::vector<LabeledSample>& samples, std::array<double, 3> ratios,
                           std::uint64_t seed) {
  if (samples.size() < 3) throw Error(ErrorCode::InsufficientData, "need at least 3 base objects");
  if (std::any_of(ratios.begin(), ratios.end(), [](double r) { return !(r >= 0.0); }) ||
      std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    throw Error(ErrorCode::InvalidArgument, "split ratios must be nonnegative and sum to 1");
  }
  const std::size_t n = samples.size();
  const auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * n));
  const auto n_val = static_cast<std::size_t>(std::llround(ratios[1] * n));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw Error(ErrorCode::InsufficientData, "ratios leave a split empty for " + std::to_string(n) + " objects");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x5B));
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(order[i], order[rng() % (i + 1)]);
  }

  DatasetSplit split;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& s = samples[order[k]];
    if (k < n_train) {
      for (auto& a : augment(s)) split.train.push_back(std::move(a));
    } else if (k < n_train + n_val) {
      for (auto& a : augment(s)) split.validation.push_back(std::move(a));
    } else {
      split.test.push_back(s);
    }
  }
  return split;
}

}  // namespace affgrasp::data
