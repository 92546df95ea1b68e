#include "affgrasp/evaluation.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "affgrasp/error.hpp"
#include "affgrasp/rng.hpp"

namespace affgrasp::eval {

double iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth) {
  if (pred.size() != truth.size()) {
    throw Error(ErrorCode::ShapeError,
                "IoU masks differ in length: " + std::to_string(pred.size()) + " vs " + std::to_string(truth.size()));
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] != 0, t = truth[i] != 0;
    inter += p && t;
    uni += p || t;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

MiouReport category_miou(std::span<const ObjectIou> per_object) {
  MiouReport r;
  double total = 0;
  for (auto c : data::kAllCategories) {
    CategoryMean m{c, 0, 0};
    for (const auto& o : per_object) {
      if (o.category != c) continue;
      m.mean += o.value;
      ++m.objects;
    }
    if (m.objects == 0) {
      r.warnings.push_back("no objects for category " + std::string(data::to_string(c)));
      continue;
    }
    total += m.mean;
    m.mean /= static_cast<double>(m.objects);
    r.categories.push_back(m);
  }
  r.overall = per_object.empty() ? 0.0 : total / static_cast<double>(per_object.size());
  return r;
}

std::string format_miou(const MiouReport& report) {
  std::string out = "Category\tmIoU %\tObjects\n";
  char line[128];
  for (const auto& c : report.categories) {
    std::snprintf(line, sizeof line, "%s\t%.1f\t%zu\n", std::string(data::to_string(c.category)).c_str(),
                  100 * c.mean, c.objects);
    out += line;
  }
  std::size_t n = 0;
  for (const auto& c : report.categories) n += c.objects;
  std::snprintf(line, sizeof line, "Average\t%.1f\t%zu\n", 100 * report.overall, n);
  out += line;
  for (const auto& w : report.warnings) out += "# warning: " + w + "\n";
  return out;
}

// ---- scenes ------------------------------------------------------------------------------

geom::PointCloud Scene::world_cloud() const { return object_pose.apply(sample.cloud); }

void Scene::validate() const {
  for (const auto& p : sample.cloud.points) {
    if (table.signed_distance(object_pose.apply(p)) < -1e-6) {
      throw Error(ErrorCode::InvalidArgument, "scene object penetrates the table");
    }
  }
}

Scene make_scene(data::LabeledSample sample, std::uint64_t seed, const grasp::GripperModel& gripper) {
  Rng rng(mix_seed(seed, 0x5CE));
  const double yaw = uniform(rng, 0, 2 * std::numbers::pi);
  const double x = uniform(rng, -30, 30), y = uniform(rng, -30, 30);
  Scene s{std::move(sample), geom::RigidTransform::rotation_z(yaw, geom::Vec3(x, y, 0)), geom::TablePlane::horizontal(0),
          gripper};
  s.validate();
  return s;
}

std::string_view to_string(FailureReason reason) {
  switch (reason) {
    case FailureReason::None: return "none";
    case FailureReason::ApproachCollision: return "approach_collision";
    case FailureReason::TableCollision: return "table_collision";
    case FailureReason::EmptyClosure: return "empty_closure";
    case FailureReason::ApertureExceeded: return "aperture_exceeded";
  }
  return "unknown";
}

std::size_t closure_threshold(std::size_t n) {
  return std::max<std::size_t>(5, static_cast<std::size_t>(std::llround(20.0 * static_cast<double>(n) / 5000.0)));
}

GraspOutcome evaluate_configuration(const geom::PointCloud& cloud, const geom::TablePlane& table,
                                    const grasp::GripperModel& gripper, const grasp::GraspConfiguration& config) {
  GraspOutcome out;
  const geom::Mat3 r = geom::RigidTransform::from_rpy(config.pose.roll, config.pose.pitch, config.pose.yaw).rotation();
  const geom::Vec3 pos(config.pose.x, config.pose.y, config.pose.z);
  if (!grasp::clears_table(r, pos, gripper, table)) {
    out.reason = FailureReason::TableCollision;
    return out;
  }
  const double half_gap = gripper.max_aperture / 2, outer = half_gap + gripper.finger_width;
  const double half_v = gripper.finger_width / 2, fl = gripper.finger_length;
  bool swept_hit = false, under_finger = false;
  for (const auto& p : cloud.points) {
    const geom::Vec3 q = r.transpose() * (p - pos);
    if (std::abs(q.x()) > outer || std::abs(q.y()) > half_v) continue;
    if (q.z() < 0 && q.z() >= -fl - gripper.finger_width) {
      swept_hit = true;
    } else if (q.z() >= 0 && q.z() <= fl) {
      if (std::abs(q.x()) <= half_gap) {
        ++out.closure_points;
      } else {
        under_finger = true;
      }
    }
  }
  if (swept_hit) {
    out.reason = FailureReason::ApproachCollision;
  } else if (out.closure_points < closure_threshold(cloud.size())) {
    out.reason = FailureReason::EmptyClosure;
  } else if (under_finger) {
    out.reason = FailureReason::ApertureExceeded;
  } else {
    out.success = true;
  }
  return out;
}

GraspOutcome evaluate_grasp(const Scene& scene, const grasp::GraspPlan& plan) {
  if (plan.configurations.empty()) throw Error(ErrorCode::NoPlan, "plan has no configuration");
  return evaluate_configuration(scene.world_cloud(), scene.table, scene.gripper, plan.configurations.front());
}

// ---- experiments -------------------------------------------------------------------------

namespace {

FailureReason reason_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoAffordance: return FailureReason::EmptyClosure;
    case ErrorCode::NoFeasibleApproach: return FailureReason::ApproachCollision;
    case ErrorCode::TableCollision: return FailureReason::TableCollision;
    default: return FailureReason::None;
  }
}

TrialRecord run_trial(const ExperimentConfig& cfg, data::Category category, int trial) {
  const auto cat_index = static_cast<std::uint64_t>(category);
  const std::uint64_t trial_seed = mix_seed(mix_seed(cfg.seed, cat_index), static_cast<std::uint64_t>(trial));
  auto sample = data::generate_synthetic(category, trial_seed % 1000000007ull, cfg.points_per_object);
  TrialRecord rec;
  rec.category = category;
  rec.object_id = sample.id;
  const Scene scene = make_scene(std::move(sample), mix_seed(trial_seed, 1), cfg.gripper);
  const geom::PointCloud world = scene.world_cloud();

  data::PerturbationConfig perturb{cfg.keep_probability, 0.0, mix_seed(trial_seed, 2)};
  if (cfg.noise_fraction > 0) {
    rec.noise_sigma = cfg.noise_fraction * geom::bounding_box(world.points).extent().maxCoeff();
    perturb.noise_sigma = rec.noise_sigma;
  }
  const geom::PointCloud perceived = data::perturb(world, perturb);

  std::vector<std::uint8_t> labels;
  if (cfg.mode == LabelMode::GroundTruth) {
    labels = *perceived.labels;
  } else {
    geom::PointCloud unlabeled{perceived.points, std::nullopt};
    labels = nets::predict_point_labels(*cfg.network, unlabeled);
  }

  grasp::PlannerConfig planner = cfg.planner;
  planner.seed = mix_seed(trial_seed, 3);
  try {
    const auto plan = grasp::plan(perceived, labels, scene.table, cfg.gripper, planner);
    rec.outcome = evaluate_grasp(scene, plan);
  } catch (const Error& e) {
    const FailureReason r = reason_for(e.code());
    if (r == FailureReason::None) throw;
    rec.outcome.reason = r;
  }
  return rec;
}

}  // namespace

ExperimentReport run_success_experiment(const ExperimentConfig& cfg) {
  if (cfg.trials_per_category < 1) throw Error(ErrorCode::InvalidArgument, "trials_per_category must be >= 1");
  if (cfg.mode == LabelMode::Network && cfg.network == nullptr) {
    throw Error(ErrorCode::InvalidArgument, "network mode needs a trained network");
  }
  if (!(cfg.keep_probability > 0 && cfg.keep_probability <= 1)) {
    throw Error(ErrorCode::InvalidArgument, "keep probability must be in (0, 1]");
  }
  const int per = cfg.trials_per_category;
  const int total = per * static_cast<int>(cfg.categories.size());
  std::vector<TrialRecord> trials(total);
  std::vector<std::string> errors(total);
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, cfg.jobs))
  for (int i = 0; i < total; ++i) {
    try {
      trials[i] = run_trial(cfg, cfg.categories[i / per], i % per);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors) {
    if (!e.empty()) throw Error(ErrorCode::InvalidArgument, "trial failed unexpectedly: " + e);
  }

  ExperimentReport report;
  for (std::size_t c = 0; c < cfg.categories.size(); ++c) {
    CategoryRate rate{cfg.categories[c], 0, per};
    for (int t = 0; t < per; ++t) rate.successes += trials[c * per + t].outcome.success;
    report.categories.push_back(rate);
    report.successes += rate.successes;
  }
  report.total = total;
  for (const auto& t : trials) {
    if (!t.outcome.success) ++report.failures[t.outcome.reason];
  }
  report.trials = std::move(trials);
  return report;
}

std::string format_success_table(const ExperimentReport& report) {
  std::string out = "Category\tSuccess rate %\tSuccess/Total\n";
  char line[160];
  for (const auto& c : report.categories) {
    std::snprintf(line, sizeof line, "%s\t%.0f\t%d/%d\n", std::string(data::to_string(c.category)).c_str(),
                  100 * c.rate(), c.successes, c.trials);
    out += line;
  }
  std::snprintf(line, sizeof line, "Average\t%.0f\t%d/%d\n", 100 * report.rate(), report.successes, report.total);
  out += line;
  for (auto reason : kAllFailureReasons) {
    if (reason == FailureReason::None) continue;
    const auto it = report.failures.find(reason);
    std::snprintf(line, sizeof line, "# %s\t%d\n", std::string(to_string(reason)).c_str(),
                  it == report.failures.end() ? 0 : it->second);
    out += line;
  }
  return out;
}

std::string_view to_string(SweepAxis axis) {
  return axis == SweepAxis::KeepProbability ? "keep_probability" : "noise_sigma";
}

SweepReport run_robustness_sweep(SweepAxis axis, std::span<const double> levels, const ExperimentConfig& base) {
  if (levels.empty()) throw Error(ErrorCode::EmptyInput, "no sweep levels");
  for (std::size_t i = 1; i < levels.size(); ++i) {
    const bool worse = axis == SweepAxis::KeepProbability ? levels[i] < levels[i - 1] : levels[i] > levels[i - 1];
    if (!worse) throw Error(ErrorCode::InvalidArgument, "sweep levels must get strictly worse");
  }
  SweepReport r;
  r.axis = axis;
  r.levels.assign(levels.begin(), levels.end());
  for (double level : levels) {
    ExperimentConfig cfg = base;
    if (axis == SweepAxis::KeepProbability) {
      cfg.keep_probability = level;
    } else {
      if (level < 0) throw Error(ErrorCode::InvalidArgument, "noise level must be nonnegative");
      cfg.noise_fraction = level;
    }
    auto report = run_success_experiment(cfg);
    r.success_rates.push_back(report.rate());
    r.trials_per_level = report.total;
    if (axis == SweepAxis::NoiseSigma) {
      double s = 0;
      for (const auto& t : report.trials) s += t.noise_sigma;
      r.mean_abs_sigma.push_back(s / static_cast<double>(report.trials.size()));
    }
    r.details.push_back(std::move(report));
  }
  return r;
}

std::string format_sweep(const SweepReport& r) {
  std::string out = std::string(to_string(r.axis)) + "\tsuccess_rate\n";
  char line[160];
  for (std::size_t i = 0; i < r.levels.size(); ++i) {
    std::snprintf(line, sizeof line, "%.6g\t%.4f\n", r.levels[i], r.success_rates[i]);
    out += line;
  }
  std::snprintf(line, sizeof line, "# trials per level\t%d\n", r.trials_per_level);
  out += line;
  if (r.axis == SweepAxis::NoiseSigma) {
    out += "# sigma is a fraction of each object's largest extent; mean absolute sigma per level (cm, mm):\n";
    for (std::size_t i = 0; i < r.levels.size(); ++i) {
      std::snprintf(line, sizeof line, "# %.6g\t%.4g cm\t%.4g mm\n", r.levels[i], r.mean_abs_sigma[i],
                    10 * r.mean_abs_sigma[i]);
      out += line;
    }
  }
  return out;
}

bool non_increasing_within(std::span<const double> rates, double band) {
  for (std::size_t i = 0; i < rates.size(); ++i) {
    for (std::size_t j = i + 1; j < rates.size(); ++j) {
      if (rates[j] > rates[i] + band) return false;
    }
  }
  return true;
}

// ---- timing ------------------------------------------------------------------------------

namespace {

StageTiming stats(const std::vector<double>& v) {
  StageTiming s;
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  for (double x : v) s.stddev += (x - s.mean) * (x - s.mean);
  s.stddev = v.size() > 1 ? std::sqrt(s.stddev / static_cast<double>(v.size() - 1)) : 0.0;
  return s;
}

}  // namespace

TimingReport benchmark_timing(const data::LabeledSample& sample, const nets::Parameters<float>& network,
                              int repetitions, const grasp::GripperModel& gripper,
                              const grasp::PlannerConfig& planner) {
  if (repetitions < 10) throw Error(ErrorCode::InvalidArgument, "timing needs at least 10 repetitions");
  sample.validate();
  const int saved_threads = omp_get_max_threads();
  omp_set_num_threads(1);
  using clock = std::chrono::steady_clock;
  const int r = network.spec.input_resolution;
  const auto table = geom::TablePlane::horizontal(geom::bounding_box(sample.cloud.points).lo.z());
  std::vector<double> ta, tb, tc, tt;
  TimingReport rep;
  rep.repetitions = repetitions;
  rep.points = sample.cloud.size();
  try {
    // i = -1 is an untimed warm-up: first-touch page faults and cold caches skew the first run.
    for (int i = -1; i < repetitions; ++i) {
      const auto t0 = clock::now();
      const auto normalized = geom::normalize_cloud(sample.cloud, r);
      std::vector<geom::VoxelGrid> grid{geom::voxelize(normalized.cloud, r, normalized.transform)};
      const auto t1 = clock::now();
      const auto out = nets::forward(network, nets::stack_grids<float>(grid), nets::Mode::Infer);
      geom::VoxelGrid prob(r, normalized.transform);
      std::copy(out.probabilities.data.begin(), out.probabilities.data.end(), prob.values.begin());
      auto labels = geom::voxel_mask_to_point_labels(sample.cloud, prob, 0.5);
      const auto t2 = clock::now();
      rep.planned_on_predicted_labels = std::count(labels.begin(), labels.end(), 1) > 0;
      if (!rep.planned_on_predicted_labels) labels = *sample.cloud.labels;
      (void)grasp::plan(sample.cloud, labels, table, gripper, planner);
      const auto t3 = clock::now();
      if (i < 0) continue;
      ta.push_back(std::chrono::duration<double>(t1 - t0).count());
      tb.push_back(std::chrono::duration<double>(t2 - t1).count());
      tc.push_back(std::chrono::duration<double>(t3 - t2).count());
      tt.push_back(std::chrono::duration<double>(t3 - t0).count());
    }
  } catch (...) {
    omp_set_num_threads(saved_threads);
    throw;
  }
  omp_set_num_threads(saved_threads);
  rep.voxelize = stats(ta);
  rep.network = stats(tb);
  rep.plan = stats(tc);
  rep.total = stats(tt);
  return rep;
}

std::string format_timing(const TimingReport& r) {
  std::string out = "stage\tmean_s\tstddev_s\n";
  char line[160];
  auto row = [&](const char* name, const StageTiming& s) {
    std::snprintf(line, sizeof line, "%s\t%.4f\t%.4f\n", name, s.mean, s.stddev);
    out += line;
  };
  row("perception (normalize+voxelize)", r.voxelize);
  row("affordance detection (forward)", r.network);
  row("grasp configuration (plan)", r.plan);
  row("total", r.total);
  std::snprintf(line, sizeof line, "# repetitions %d, points %zu, plan on %s labels\n", r.repetitions, r.points,
                r.planned_on_predicted_labels ? "predicted" : "ground-truth");
  out += line;
  return out;
}

}  // namespace affgrasp::eval
