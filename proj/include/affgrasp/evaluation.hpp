#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "affgrasp/dataset.hpp"
#include "affgrasp/grasp.hpp"
#include "affgrasp/nets/network.hpp"

namespace affgrasp::eval {

/// |pred and truth| / |pred or truth|; 1 when both are empty. Throws ShapeError on length mismatch.
double iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> truth);

struct ObjectIou {
  data::Category category = data::Category::Mug;
  double value = 0;
};

struct CategoryMean {
  data::Category category = data::Category::Mug;
  double mean = 0;
  std::size_t objects = 0;
};

struct MiouReport {
  std::vector<CategoryMean> categories;  // in kAllCategories order, empty categories omitted
  double overall = 0;                    // mean over objects
  std::vector<std::string> warnings;
};

MiouReport category_miou(std::span<const ObjectIou> per_object);
std::string format_miou(const MiouReport& report);

// ---- tabletop harness -------------------------------------------------------------------

/// An object from the generator (object frame, resting on z = 0) placed on the z = 0 table.
struct Scene {
  data::LabeledSample sample;
  geom::RigidTransform object_pose;
  geom::TablePlane table;
  grasp::GripperModel gripper;

  geom::PointCloud world_cloud() const;
  /// Throws InvalidArgument when some point lies more than 1e-6 below the table.
  void validate() const;
};

/// Random yaw in [0, 2 pi) and a table position within +-30 cm, both from the seed.
Scene make_scene(data::LabeledSample sample, std::uint64_t seed, const grasp::GripperModel& gripper = {});

enum class FailureReason { None, ApproachCollision, TableCollision, EmptyClosure, ApertureExceeded };
inline constexpr std::array<FailureReason, 5> kAllFailureReasons{
    FailureReason::None, FailureReason::ApproachCollision, FailureReason::TableCollision,
    FailureReason::EmptyClosure, FailureReason::ApertureExceeded};
std::string_view to_string(FailureReason reason);

struct GraspOutcome {
  bool success = false;
  FailureReason reason = FailureReason::None;
  std::size_t closure_points = 0;
};

/// Minimum enclosed points for a cloud of n points: max(5, 20 n / 5000).
std::size_t closure_threshold(std::size_t n);

/// Geometric proxy for a pick: table clearance of the gripper at the final pose and swept back
/// along the approach, no points in the volume the palm and fingers sweep on the way in,
/// enough points between the fingers, and nothing under the fingers themselves (the object is
/// wider than the opening there).
GraspOutcome evaluate_configuration(const geom::PointCloud& world_cloud, const geom::TablePlane& table,
                                    const grasp::GripperModel& gripper, const grasp::GraspConfiguration& config);
/// Top-ranked configuration of the plan against the clean scene. Throws NoPlan on an empty plan.
GraspOutcome evaluate_grasp(const Scene& scene, const grasp::GraspPlan& plan);

enum class LabelMode { GroundTruth, Network };

struct ExperimentConfig {
  std::vector<data::Category> categories{data::kAllCategories.begin(), data::kAllCategories.end()};
  int trials_per_category = 20;
  std::uint64_t seed = 0;
  LabelMode mode = LabelMode::GroundTruth;
  const nets::Parameters<float>* network = nullptr;  // required in Network mode
  grasp::GripperModel gripper;
  grasp::PlannerConfig planner;
  int points_per_object = 5000;
  double keep_probability = 1.0;
  double noise_fraction = 0.0;  // Gaussian sigma as a fraction of the object's largest extent
  int jobs = 1;
};

struct TrialRecord {
  data::Category category = data::Category::Mug;
  std::string object_id;
  GraspOutcome outcome;
  double noise_sigma = 0;  // absolute, cm
};

struct CategoryRate {
  data::Category category = data::Category::Mug;
  int successes = 0;
  int trials = 0;
  double rate() const { return trials ? static_cast<double>(successes) / trials : 0.0; }
};

struct ExperimentReport {
  std::vector<CategoryRate> categories;
  std::vector<TrialRecord> trials;
  std::map<FailureReason, int> failures;  // failed trials only
  int successes = 0;
  int total = 0;
  double rate() const { return total ? static_cast<double>(successes) / total : 0.0; }
};

/// Trial t of category c uses seeds derived from (seed, c, t) only, so results do not depend
/// on the number of workers.
ExperimentReport run_success_experiment(const ExperimentConfig& config);
/// Category, Success rate %, Success/Total; failure histogram as '#' lines.
std::string format_success_table(const ExperimentReport& report);

enum class SweepAxis { KeepProbability, NoiseSigma };
std::string_view to_string(SweepAxis axis);

struct SweepReport {
  SweepAxis axis = SweepAxis::KeepProbability;
  std::vector<double> levels;
  std::vector<double> success_rates;
  std::vector<double> mean_abs_sigma;  // cm, noise sweeps only
  int trials_per_level = 0;
  std::vector<ExperimentReport> details;
};

/// Levels must worsen monotonically (descending keep probability, ascending sigma fraction).
SweepReport run_robustness_sweep(SweepAxis axis, std::span<const double> levels, const ExperimentConfig& base);
std::string format_sweep(const SweepReport& report);

/// True when no later level beats an earlier one by more than `band`.
bool non_increasing_within(std::span<const double> rates, double band);

struct StageTiming {
  double mean = 0;
  double stddev = 0;
};

struct TimingReport {
  StageTiming voxelize, network, plan, total;
  int repetitions = 0;
  std::size_t points = 0;
  bool planned_on_predicted_labels = false;
};

/// Runs (a) normalize + voxelize, (b) one forward pass, (c) plan on the predicted labels
/// (ground truth when the prediction has no affordance points), single-threaded.
TimingReport benchmark_timing(const data::LabeledSample& sample, const nets::Parameters<float>& network,
                              int repetitions, const grasp::GripperModel& gripper = {},
                              const grasp::PlannerConfig& planner = {});
std::string format_timing(const TimingReport& report);

}  // namespace affgrasp::eval
