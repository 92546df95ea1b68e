#include "affgrasp/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "affgrasp/dataset.hpp"
#include "affgrasp/error.hpp"
#include "affgrasp/evaluation.hpp"
#include "affgrasp/grasp.hpp"
#include "affgrasp/io.hpp"
#include "affgrasp/nets/checkpoint.hpp"
#include "affgrasp/nets/train.hpp"
#include "affgrasp/rng.hpp"

namespace affgrasp::cli {

namespace fs = std::filesystem;

std::string git_blob_sha1(std::string_view contents) {
  const std::string header = "blob " + std::to_string(contents.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw Error(ErrorCode::IoError, "cannot allocate a digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, contents.data(), contents.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error(ErrorCode::IoError, "sha1 failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["seed"] = seed;
  auto& cfg = j["config"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  auto& in = j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& [path, hash] : inputs) in.push_back({{"path", path}, {"git_blob_sha1", hash}});
  j["outputs"] = outputs;
  j["started"] = started;
  j["finished"] = finished;
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  return j.dump(2) + "\n";
}

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
  return std::any_of(args.begin(), args.end(),
                     [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
}

}  // namespace

std::vector<std::string> merge_config(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (!path) return args;
  std::istringstream in(read_file(*path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorCode::ParseError, *path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    while (!key.empty() && key.front() == '-') key.erase(key.begin());
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty() || key == "config") {
      throw Error(ErrorCode::ParseError, *path + ":" + std::to_string(lineno) + ": bad key");
    }
    const std::string flag = "--" + key;
    if (!has_flag(args, flag)) args.push_back(flag + "=" + value);
  }
  return args;
}

namespace {

// ---- shared plumbing --------------------------------------------------------------------

struct Globals {
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string config;
  std::string manifest;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  RunManifest manifest;

  std::string read_input(const fs::path& path) {
    std::string text = read_file(path);
    manifest.inputs.emplace_back(path.string(), git_blob_sha1(text));
    return text;
  }
  void write_output(const fs::path& path, std::string_view contents) {
    write_file_atomic(path, contents);
    manifest.outputs.push_back(path.string());
  }
  /// To the file when one is named, else to stdout.
  void emit(const std::string& out_path, std::string_view contents) {
    if (out_path.empty()) {
      out << contents;
    } else {
      write_output(out_path, contents);
    }
  }
};

geom::PointCloud load_cloud(Context& ctx, const fs::path& path) {
  const std::string text = ctx.read_input(path);
  const bool ply = text.rfind("ply", 0) == 0;
  return ply ? data::parse_ply(text) : data::parse_xyz(text);
}

nets::Parameters<float> load_network(Context& ctx, const fs::path& path) {
  const std::string bytes = ctx.read_input(path);
  return nets::deserialize_checkpoint(
      std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
}

std::vector<data::Category> parse_categories(const std::vector<std::string>& names) {
  std::vector<data::Category> out;
  for (const auto& n : names) out.push_back(data::parse_category(n));
  return out;
}

// Object i of category c; the same seeds feed gen-data and the in-memory datasets.
std::vector<data::LabeledSample> synthetic_set(const std::vector<data::Category>& categories, int per_category,
                                               int points, std::uint64_t seed) {
  std::vector<data::LabeledSample> out;
  for (auto c : categories) {
    for (int i = 0; i < per_category; ++i) {
      const auto s = mix_seed(mix_seed(seed, 100 + static_cast<std::uint64_t>(c)), static_cast<std::uint64_t>(i));
      out.push_back(data::generate_synthetic(c, s % 1000000007ull, points));
    }
  }
  return out;
}

std::vector<data::LabeledSample> load_samples(Context& ctx, const std::string& manifest_path) {
  const fs::path manifest(manifest_path);
  ctx.read_input(manifest);
  std::vector<data::LabeledSample> out;
  for (const auto& e : data::read_manifest(manifest)) {
    data::LabeledSample s;
    s.id = e.id;
    s.category = e.category;
    s.cloud = load_cloud(ctx, e.path);
    s.validate();
    out.push_back(std::move(s));
  }
  return out;
}

const std::vector<std::string> kCategoryNames{"mug", "chair", "knife", "guitar", "lamp"};

// CLI::PositiveNumber lets NaN through.
const CLI::Validator kFinitePositive(
    [](std::string& v) -> std::string {
      double x = 0;
      if (!CLI::detail::lexical_cast(v, x) || !std::isfinite(x) || x <= 0) return "must be a finite positive number, got " + v;
      return {};
    },
    "POSITIVE");

const CLI::Validator kFinite(
    [](std::string& v) -> std::string {
      double x = 0;
      if (!CLI::detail::lexical_cast(v, x) || !std::isfinite(x)) return "must be a finite number, got " + v;
      return {};
    },
    "NUMBER");

void add_gripper_options(CLI::App* sub, grasp::GripperModel& g, grasp::PlannerConfig& p) {
  sub->add_option("--finger-width", g.finger_width, "Finger width, cm")->check(kFinitePositive)->capture_default_str();
  sub->add_option("--aperture", g.max_aperture, "Maximum opening, cm")->check(kFinitePositive)->capture_default_str();
  sub->add_option("--finger-length", g.finger_length, "Finger length, cm")->check(kFinitePositive)->capture_default_str();
  sub->add_option("--palm-depth", g.palm_depth, "Palm face to grasp point, cm")->check(kFinitePositive)->capture_default_str();
  sub->add_option("--approaches", p.sphere_samples, "Approach paths per grasp point")
      ->check(CLI::Range(1, 1 << 20))
      ->capture_default_str();
}

std::vector<std::uint8_t> labels_for(Context& ctx, const geom::PointCloud& cloud, const std::string& mode,
                                     const std::string& checkpoint) {
  if (mode == "network") {
    if (checkpoint.empty()) throw Error(ErrorCode::InvalidArgument, "--labels network needs --checkpoint");
    const auto net = load_network(ctx, checkpoint);
    return nets::predict_point_labels(net, geom::PointCloud{cloud.points, std::nullopt});
  }
  if (!cloud.has_labels()) throw Error(ErrorCode::InvalidArgument, "the cloud has no affordance labels");
  return *cloud.labels;
}

std::string format_viz_ply(const geom::PointCloud& cloud, std::span<const std::uint8_t> labels,
                           const grasp::ApproachPath* path) {
  const std::size_t extra = path ? 2 : 0;
  std::string out = "ply\nformat ascii 1.0\n";
  out += "element vertex " + std::to_string(cloud.size() + extra) + "\n";
  out += "property float x\nproperty float y\nproperty float z\n";
  out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  if (path) out += "element edge 1\nproperty int vertex1\nproperty int vertex2\nproperty uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "end_header\n";
  char line[128];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    // dark blue object, orange affordance
    const bool aff = labels[i] != 0;
    std::snprintf(line, sizeof line, "%.9g %.9g %.9g %d %d %d\n", p.x(), p.y(), p.z(), aff ? 255 : 0, aff ? 165 : 0,
                  aff ? 0 : 139);
    out += line;
  }
  if (path) {
    for (const auto* q : {&path->start, &path->grasp_point}) {
      std::snprintf(line, sizeof line, "%.9g %.9g %.9g 255 0 0\n", q->x(), q->y(), q->z());
      out += line;
    }
    std::snprintf(line, sizeof line, "%zu %zu 255 0 0\n", cloud.size(), cloud.size() + 1);
    out += line;
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

void record_options(RunManifest& m, const CLI::App* app) {
  for (const CLI::Option* o : app->get_options()) {
    const std::string name = o->get_name();
    if (name == "--help" || name == "--version" || name.empty()) continue;
    m.config.emplace_back(name, o->count() ? join(o->results()) : o->get_default_str());
  }
}

fs::path default_manifest_path(const std::string& command, const std::string& out, bool out_is_dir) {
  if (out.empty()) return fs::path("affgrasp_" + command + ".manifest.json");
  if (out_is_dir) return fs::path(out) / "run_manifest.json";
  return fs::path(out + ".manifest.json");
}

}  // namespace

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Affordance detection and grasp planning on point clouds", "affgrasp"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", "affgrasp 1.0");

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::Range(1, 1024))->capture_default_str();
  app.add_option("--config", g.config, "key=value file; flags override it");
  app.add_option("--manifest", g.manifest, "Where to write the run manifest");

  // gen-data
  std::vector<std::string> categories = kCategoryNames;
  int per_category = 10, points = 2000;
  std::string out_path;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic labeled dataset (PLY files + manifest)");
  gen->add_option("--categories", categories, "Comma-separated categories")
      ->delimiter(',')
      ->check(CLI::IsMember(kCategoryNames, CLI::ignore_case))
      ->capture_default_str();
  gen->add_option("--per-category", per_category, "Objects per category")->check(CLI::Range(1, 1000000))->capture_default_str();
  gen->add_option("--points", points, "Points per object")->check(CLI::Range(500, 10000000))->capture_default_str();
  gen->add_option("--out", out_path, "Output directory")->required();

  // train
  std::string arch = "resunet", data_path;
  int epochs = 100, res = 32, convs = 3;
  std::vector<int> widths{16, 32, 64};
  std::vector<double> split{0.7, 0.15, 0.15};
  nets::TrainConfig tc;
  auto* train = app.add_subcommand("train", "Train a segmentation network; writes checkpoint and history");
  train->add_option("--arch", arch, "encdec | unet | resunet")
      ->check(CLI::IsMember({"encdec", "unet", "resunet", "enc_dec", "res_unet"}, CLI::ignore_case))
      ->capture_default_str();
  train->add_option("--epochs", epochs, "Maximum epochs")->check(CLI::Range(1, 1000000))->capture_default_str();
  train->add_option("--widths", widths, "Channels per stage, comma-separated")
      ->delimiter(',')
      ->check(kFinitePositive)
      ->capture_default_str();
  train->add_option("--res", res, "Voxel grid resolution")->check(CLI::Range(2, 512))->capture_default_str();
  train->add_option("--convs", convs, "Convolutions per stage")->check(CLI::Range(1, 64))->capture_default_str();
  train->add_option("--batch", tc.batch_size, "Batch size (>= 2)")->check(CLI::Range(2, 1 << 20))->capture_default_str();
  train->add_option("--lr", tc.learning_rate, "Initial learning rate")->check(kFinitePositive)->capture_default_str();
  train->add_option("--patience", tc.plateau_patience, "Epochs without improvement before decay")
      ->check(CLI::Range(1, 1000000))
      ->capture_default_str();
  train->add_option("--split", split, "train,validation,test ratios")->delimiter(',')->check(kFinite)->expected(3)->capture_default_str();
  train->add_option("--data", data_path, "Dataset manifest from gen-data (default: synthetic)");
  train->add_option("--categories", categories, "Categories for the synthetic dataset")
      ->delimiter(',')
      ->check(CLI::IsMember(kCategoryNames, CLI::ignore_case));
  train->add_option("--per-category", per_category, "Synthetic objects per category")->check(CLI::Range(1, 1000000));
  train->add_option("--points", points, "Points per synthetic object")->check(CLI::Range(500, 10000000));
  train->add_option("--out", out_path, "Output directory")->required();

  // eval-iou
  std::vector<std::string> checkpoints;
  auto* evaliou = app.add_subcommand("eval-iou", "Per-category point IoU of one or more checkpoints");
  evaliou->add_option("--checkpoint", checkpoints, "Checkpoint file (repeatable)")->required();
  evaliou->add_option("--data", data_path, "Dataset manifest (default: synthetic)");
  evaliou->add_option("--categories", categories, "Categories for the synthetic dataset")
      ->delimiter(',')
      ->check(CLI::IsMember(kCategoryNames, CLI::ignore_case));
  evaliou->add_option("--per-category", per_category, "Synthetic objects per category")->check(CLI::Range(1, 1000000));
  evaliou->add_option("--points", points, "Points per synthetic object")->check(CLI::Range(500, 10000000));
  evaliou->add_option("--out", out_path, "Report file (default: stdout)");

  // plan / viz
  std::string cloud_path, label_mode = "ground-truth", checkpoint;
  double table_z = 0.0;
  grasp::GripperModel gripper;
  grasp::PlannerConfig planner;
  auto* plan = app.add_subcommand("plan", "Grasp configurations for one point cloud");
  auto* viz = app.add_subcommand("viz", "PLY with affordance colors and the winning approach path");
  for (auto* sub : {plan, viz}) {
    sub->add_option("--cloud", cloud_path, "PLY or XYZ[L] cloud")->required();
    sub->add_option("--table-z", table_z, "Height of the horizontal table plane")->check(kFinite)->capture_default_str();
    sub->add_option("--labels", label_mode, "ground-truth | network")
        ->check(CLI::IsMember({"ground-truth", "network"}))
        ->capture_default_str();
    sub->add_option("--checkpoint", checkpoint, "Network for --labels network");
    add_gripper_options(sub, gripper, planner);
  }
  plan->add_option("--out", out_path, "Plan file (default: stdout)");
  viz->add_option("--out", out_path, "Output PLY")->required();

  // grasp-bench / sweep
  int trials = 20;
  std::string mode = "ground-truth";
  auto* bench = app.add_subcommand("grasp-bench", "Grasp success per category on seeded tabletop scenes");
  auto* sweep = app.add_subcommand("sweep", "Success rate against point density or noise");
  std::string axis;
  std::vector<double> levels;
  sweep->add_option("axis", axis, "density | noise")->required()->check(CLI::IsMember({"density", "noise"}));
  sweep->add_option("--levels", levels,
                    "Worsening levels: keep probabilities (density) or sigma as a fraction of object extent (noise)")
      ->delimiter(',')
      ->check(kFinite);
  for (auto* sub : {bench, sweep}) {
    sub->add_option("--trials", trials, "Scenes per category")->check(CLI::Range(1, 1000000))->capture_default_str();
    sub->add_option("--labels", mode, "ground-truth | network")
        ->check(CLI::IsMember({"ground-truth", "network"}))
        ->capture_default_str();
    sub->add_option("--checkpoint", checkpoint, "Network for --labels network");
    sub->add_option("--categories", categories, "Comma-separated categories")
        ->delimiter(',')
        ->check(CLI::IsMember(kCategoryNames, CLI::ignore_case))
        ->capture_default_str();
    sub->add_option("--points", points, "Points per object")->check(CLI::Range(500, 10000000));
    sub->add_option("--out", out_path, "Report file (default: stdout)");
    add_gripper_options(sub, gripper, planner);
  }

  // bench-time
  int repetitions = 10;
  std::string category = "mug";
  auto* btime = app.add_subcommand("bench-time", "Single-threaded per-stage timing of the full pipeline");
  btime->add_option("--checkpoint", checkpoint, "Network (default: untrained default-width RES_UNET)");
  btime->add_option("--repetitions", repetitions, "Timed runs (>= 10)")->check(CLI::Range(10, 1000000))->capture_default_str();
  btime->add_option("--category", category, "Object category")
      ->check(CLI::IsMember(kCategoryNames, CLI::ignore_case))
      ->capture_default_str();
  btime->add_option("--points", points, "Points in the cloud")->check(CLI::Range(500, 10000000));
  btime->add_option("--out", out_path, "Report file (default: stdout)");
  add_gripper_options(btime, gripper, planner);

  for (auto* sub : app.get_subcommands({})) {
    sub->footer("Global options (before or after the subcommand): --seed, --jobs, --config FILE, --manifest FILE");
  }

  try {
    args = merge_config(std::move(args));
  } catch (const Error& e) {
    err << e.what() << "\n";
    return kUsageError;
  }
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsageError;
  }

  CLI::App* sub = app.get_subcommands().front();
  Context ctx{out, err, {}};
  ctx.manifest.command = sub->get_name();
  ctx.manifest.seed = g.seed;
  ctx.manifest.started = utc_now();
  record_options(ctx.manifest, &app);
  record_options(ctx.manifest, sub);
  const std::string cmd = sub->get_name();
  const bool out_is_dir = cmd == "gen-data" || cmd == "train";
  const fs::path manifest_path = g.manifest.empty() ? default_manifest_path(cmd, out_path, out_is_dir) : fs::path(g.manifest);

  int code = kOk;
  try {
    if (cmd == "gen-data") {
      const auto samples = synthetic_set(parse_categories(categories), per_category, points, g.seed);
      std::vector<data::ManifestEntry> entries;
      for (const auto& s : samples) {
        const fs::path file = s.id + ".ply";
        ctx.write_output(fs::path(out_path) / file, data::format_ply(s.cloud));
        entries.push_back({s.id, s.category, file});
      }
      ctx.write_output(fs::path(out_path) / "manifest.tsv", data::format_manifest(entries));
      out << "wrote " << samples.size() << " objects to " << out_path << "\n";
    } else if (cmd == "train") {
      auto samples = data_path.empty() ? synthetic_set(parse_categories(categories), per_category, points, g.seed)
                                       : load_samples(ctx, data_path);
      if (split.size() != 3) throw Error(ErrorCode::InvalidArgument, "--split needs three ratios");
      const auto parts = data::split_dataset(samples, {split[0], split[1], split[2]}, g.seed);
      nets::NetworkSpec spec;
      spec.kind = nets::parse_arch(arch);
      spec.stages = static_cast<int>(widths.size());
      spec.convs_per_stage = convs;
      spec.stage_widths = widths;
      spec.input_resolution = res;
      spec.validate();
      tc.max_epochs = epochs;
      tc.seed = g.seed;
      const auto result = nets::train(spec, parts.train, parts.validation, tc, [&](const nets::EpochRecord& r) {
        char line[160];
        std::snprintf(line, sizeof line, "epoch %d  train_loss %.4f  train_iou %.4f  val_loss %.4f  val_iou %.4f  lr %.3g\n",
                      r.epoch, r.train_loss, r.train_iou, r.val_loss, r.val_iou, r.lr);
        err << line;
      });
      const auto bytes = nets::serialize_checkpoint(result.params);
      ctx.write_output(fs::path(out_path) / "checkpoint.runc",
                       std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
      ctx.write_output(fs::path(out_path) / "history.tsv", result.history.to_text());
      out << "best epoch " << result.best_epoch << " of " << result.history.epochs.size() << "\n";
    } else if (cmd == "eval-iou") {
      const auto samples = data_path.empty() ? synthetic_set(parse_categories(categories), per_category, points, g.seed)
                                             : load_samples(ctx, data_path);
      std::vector<std::string> names;
      std::vector<eval::MiouReport> reports;
      for (const auto& path : checkpoints) {
        const auto net = load_network(ctx, path);
        std::vector<eval::ObjectIou> per;
        for (const auto& s : samples) {
          const auto pred = nets::predict_point_labels(net, geom::PointCloud{s.cloud.points, std::nullopt});
          per.push_back({s.category, eval::iou(pred, *s.cloud.labels)});
        }
        names.emplace_back(nets::to_string(net.spec.kind));
        reports.push_back(eval::category_miou(per));
      }
      std::string table = "Category";
      for (const auto& n : names) table += "\t" + n;
      table += "\n";
      char cell[32];
      for (auto c : data::kAllCategories) {
        std::string row(data::to_string(c));
        bool any = false;
        for (const auto& r : reports) {
          const auto it = std::find_if(r.categories.begin(), r.categories.end(),
                                       [&](const eval::CategoryMean& m) { return m.category == c; });
          if (it == r.categories.end()) {
            row += "\t-";
          } else {
            any = true;
            std::snprintf(cell, sizeof cell, "\t%.4f", it->mean);
            row += cell;
          }
        }
        if (any) table += row + "\n";
      }
      table += "Overall";
      for (const auto& r : reports) {
        std::snprintf(cell, sizeof cell, "\t%.4f", r.overall);
        table += cell;
      }
      table += "\n";
      // Every checkpoint saw the same objects, so the warnings repeat.
      for (const auto& w : reports.front().warnings) table += "# " + w + "\n";
      ctx.emit(out_path, table);
    } else if (cmd == "plan" || cmd == "viz") {
      const auto cloud = load_cloud(ctx, cloud_path);
      const auto labels = labels_for(ctx, cloud, label_mode, checkpoint);
      planner.seed = g.seed;
      const auto result =
          grasp::plan(cloud, labels, geom::TablePlane::horizontal(table_z), gripper, planner);
      if (cmd == "plan") {
        ctx.emit(out_path, "# cluster\tscore\tx\ty\tz\troll\tpitch\tyaw\n" + grasp::format_plan(result));
      } else {
        ctx.write_output(out_path, format_viz_ply(cloud, labels, &result.configurations.front().approach));
      }
    } else if (cmd == "grasp-bench" || cmd == "sweep") {
      eval::ExperimentConfig cfg;
      cfg.categories = parse_categories(categories);
      cfg.trials_per_category = trials;
      cfg.seed = g.seed;
      cfg.jobs = g.jobs;
      cfg.gripper = gripper;
      cfg.planner = planner;
      if (sub->get_option("--points")->count()) cfg.points_per_object = points;
      std::optional<nets::Parameters<float>> net;
      if (mode == "network") {
        if (checkpoint.empty()) throw Error(ErrorCode::InvalidArgument, "--labels network needs --checkpoint");
        net = load_network(ctx, checkpoint);
        cfg.mode = eval::LabelMode::Network;
        cfg.network = &*net;
      }
      if (cmd == "grasp-bench") {
        ctx.emit(out_path, eval::format_success_table(eval::run_success_experiment(cfg)));
      } else {
        const bool density = axis == "density";
        if (levels.empty()) {
          levels = density ? std::vector<double>{1.0, 0.9, 0.8, 0.7, 0.6, 0.5}
                           : std::vector<double>{0.0, 0.005, 0.01, 0.02, 0.03, 0.05};
        }
        const auto report = eval::run_robustness_sweep(
            density ? eval::SweepAxis::KeepProbability : eval::SweepAxis::NoiseSigma, levels, cfg);
        ctx.emit(out_path, eval::format_sweep(report));
      }
    } else if (cmd == "bench-time") {
      const auto sample = data::generate_synthetic(data::parse_category(category), g.seed,
                                                   btime->get_option("--points")->count() ? points : 5000);
      const auto net = checkpoint.empty() ? nets::build_network<float>(nets::NetworkSpec{}, g.seed)
                                          : load_network(ctx, checkpoint);
      ctx.emit(out_path, eval::format_timing(eval::benchmark_timing(sample, net, repetitions, gripper, planner)));
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    ctx.manifest.status = "failed";
    ctx.manifest.error = e.what();
    code = kDomainError;
  }

  ctx.manifest.finished = utc_now();
  try {
    write_file_atomic(manifest_path, ctx.manifest.to_json());
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kDomainError;
  }
  return code;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(std::move(args), std::cout, std::cerr);
}

}  // namespace affgrasp::cli
