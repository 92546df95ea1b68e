#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "affgrasp/geometry.hpp"
#include "affgrasp/nets/kernels.hpp"
#include "affgrasp/nets/tensor.hpp"

namespace affgrasp::nets {

enum class ArchKind { EncDec, UNet, ResUNet };

std::string_view to_string(ArchKind kind);
/// Accepts "ENC_DEC"/"encdec", "UNET"/"unet", "RES_UNET"/"resunet".
ArchKind parse_arch(std::string_view name);

struct NetworkSpec {
  ArchKind kind = ArchKind::ResUNet;
  int stages = 3;
  int convs_per_stage = 3;
  std::vector<int> stage_widths{16, 32, 64};
  int input_resolution = 32;

  /// Throws ShapeError / InvalidArgument.
  void validate() const;
  /// Single-line `key=value;...` form embedded in checkpoints.
  std::string to_text() const;
  static NetworkSpec from_text(std::string_view text);
  bool operator==(const NetworkSpec&) const = default;
};

enum class Mode { Train, Infer };

/// Indices into Parameters::tensors for one convolution followed by batch norm.
struct ConvBnRef {
  int cin = 0, cout = 0, ksize = 3;
  int weight = -1, bias = -1, gamma = -1, beta = -1, running_mean = -1, running_var = -1;
};

/// A stage is either a plain run of conv-BN-ReLU units or, for RES_UNET, one residual block
/// whose body is the same run with the last ReLU moved after the shortcut sum.
struct StageRef {
  int cin = 0, cout = 0;
  bool residual = false;
  std::vector<ConvBnRef> convs;
  std::optional<ConvBnRef> projection;
};

struct Layout {
  std::vector<StageRef> encoder;
  std::vector<StageRef> decoder;  // decoder[s] runs at the resolution of encoder[s]
  bool concat_skips = false;
  int head_weight = -1, head_bias = -1, head_cin = 0;
};

Layout make_layout(const NetworkSpec& spec);

template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> values;
  bool trainable = true;
};

template <typename T>
class Parameters {
 public:
  NetworkSpec spec;
  Layout layout;
  std::vector<ParamTensor<T>> tensors;

  std::span<const T> view(int index) const { return tensors[index].values; }
  std::span<T> view(int index) { return tensors[index].values; }

  std::size_t trainable_count() const;
  /// Identity of this parameter set; forward caches are bound to (instance, version).
  std::uint64_t instance() const noexcept { return instance_; }
  std::uint64_t version() const noexcept { return version_; }
  /// Marks trainable values as changed, invalidating outstanding forward caches.
  void touch() noexcept { ++version_; }

  template <typename U>
  Parameters<U> cast() const;

  Parameters();
  Parameters(const Parameters& other);
  Parameters& operator=(const Parameters& other);
  Parameters(Parameters&&) noexcept = default;
  Parameters& operator=(Parameters&&) noexcept = default;

 private:
  std::uint64_t instance_;
  std::uint64_t version_ = 0;
};

/// He-normal conv weights from the seed, zero biases, unit BN scale, zero BN shift.
template <typename T>
Parameters<T> build_network(const NetworkSpec& spec, std::uint64_t seed);

/// Gradients aligned with Parameters::tensors (empty vectors for running statistics).
template <typename T>
using Gradients = std::vector<std::vector<T>>;

template <typename T>
struct ConvBnCache {
  Tensor<T> input;
  kernels::BatchNormCache<T> bn;
};

template <typename T>
struct StageCache {
  std::vector<ConvBnCache<T>> convs;
  std::vector<Tensor<T>> activations;  // ReLU outputs inside the run
  std::optional<ConvBnCache<T>> projection;
  Tensor<T> output;
};

template <typename T>
struct ForwardCache {
  std::uint64_t instance = 0;
  std::uint64_t version = 0;
  std::vector<StageCache<T>> encoder;
  std::vector<StageCache<T>> decoder;
  std::vector<std::vector<std::uint32_t>> pool_argmax;
  std::vector<int> decoder_up_channels;
  Tensor<T> head_input;
  Tensor<T> probabilities;
};

template <typename T>
struct ForwardResult {
  Tensor<T> probabilities;
  std::optional<ForwardCache<T>> cache;  // present in train mode only
};

/// input: (n, 1, R, R, R). Output: per-voxel probabilities of the same shape.
template <typename T>
ForwardResult<T> forward(const Parameters<T>& params, const Tensor<T>& input, Mode mode);

/// Reverse-mode gradients of a scalar loss given dL/dprobabilities. Throws CacheMismatch
/// when the cache was produced by other (or since-modified) parameters.
template <typename T>
Gradients<T> backward(const Parameters<T>& params, const ForwardCache<T>& cache, const Tensor<T>& dprob);

/// running <- momentum * running + (1 - momentum) * batch statistic, for every BN layer.
template <typename T>
void update_running_stats(Parameters<T>& params, const ForwardCache<T>& cache, double momentum = 0.9);

/// Occupancy grids stacked into a (n, 1, R, R, R) tensor.
template <typename T>
Tensor<T> stack_grids(std::span<const geom::VoxelGrid> grids);

/// Normalizes, voxelizes, runs inference, and maps voxel probabilities back to points.
std::vector<std::uint8_t> predict_point_labels(const Parameters<float>& params, const geom::PointCloud& cloud,
                                               double threshold = 0.5);

}  // namespace affgrasp::nets
