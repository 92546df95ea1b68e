#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "affgrasp/geometry.hpp"

namespace affgrasp::data {

enum class Category { Mug, Chair, Knife, Guitar, Lamp };

inline constexpr std::array<Category, 5> kAllCategories{Category::Mug, Category::Chair, Category::Knife,
                                                         Category::Guitar, Category::Lamp};

std::string_view to_string(Category c);
/// Case-insensitive; throws UnknownCategory.
Category parse_category(std::string_view name);

struct LabeledSample {
  std::string id;
  Category category = Category::Mug;
  geom::PointCloud cloud;

  /// Labels present, and both classes represented.
  void validate() const;
};

struct DatasetSplit {
  std::vector<LabeledSample> train;
  std::vector<LabeledSample> validation;
  std::vector<LabeledSample> test;
};

struct PerturbationConfig {
  double keep_probability = 1.0;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

// ---- file formats ---------------------------------------------------------------------

/// ASCII PLY (detected by a leading "ply" line) or whitespace-separated XYZ[L] text.
geom::PointCloud load_point_cloud(const std::filesystem::path& path);
geom::PointCloud parse_ply(std::string_view text);
geom::PointCloud parse_xyz(std::string_view text);
/// ASCII PLY with float x,y,z and, when labels exist, a uchar "affordance" property.
std::string format_ply(const geom::PointCloud& cloud);

struct ManifestEntry {
  std::string id;
  Category category = Category::Mug;
  std::filesystem::path path;
};
/// Lines of `id<TAB>category<TAB>path`; relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
std::string format_manifest(const std::vector<ManifestEntry>& entries);
std::vector<LabeledSample> load_manifest_samples(const std::filesystem::path& manifest);

// ---- augmentation & perturbation ------------------------------------------------------

inline constexpr std::array<std::string_view, 6> kAugmentSuffixes{"@id",    "@rot90", "@rot180",
                                                                   "@rot270", "@flipx", "@flipy"};
/// [identity, rot90z, rot180z, rot270z, flip-x, flip-y]; ids get the matching suffix.
std::vector<LabeledSample> augment(const LabeledSample& sample);
/// Id with any augmentation suffix removed.
std::string base_id(std::string_view id);

/// Bernoulli thinning, deterministic per seed; throws EmptyResult when nothing survives.
geom::PointCloud downsample(const geom::PointCloud& cloud, double keep_probability, std::uint64_t seed);
geom::PointCloud add_gaussian_noise(const geom::PointCloud& cloud, double sigma, std::uint64_t seed);
geom::PointCloud perturb(const geom::PointCloud& cloud, const PerturbationConfig& config);

// ---- synthetic objects ----------------------------------------------------------------

/// Procedural surface sample, in centimeters, resting on z = 0. Affordance parts: mug handle,
/// knife handle, chair back top rail, guitar neck, lamp pole.
LabeledSample generate_synthetic(Category category, std::uint64_t seed, int n_points = 2000);

/// Partitions base objects; train and validation are expanded with augment(), test is not.
DatasetSplit split_dataset(const std::vector<LabeledSample>& samples, std::array<double, 3> ratios,
                           std::uint64_t seed);

}  // namespace affgrasp::data
