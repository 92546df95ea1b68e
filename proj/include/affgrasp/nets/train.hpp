#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "affgrasp/dataset.hpp"
#include "affgrasp/nets/network.hpp"

namespace affgrasp::nets {

struct TrainConfig {
  double learning_rate = 1e-3;
  double rho = 0.9;
  int batch_size = 16;
  int plateau_patience = 5;
  double decay_factor = std::sqrt(0.1);
  double min_lr = 0.5e-6;
  int max_epochs = 100;
  std::uint64_t seed = 0;
  double bn_momentum = 0.9;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0, train_iou = 0, val_loss = 0, val_iou = 0, lr = 0;
  bool operator==(const EpochRecord&) const = default;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;

  /// One line per epoch: epoch, train_loss, train_iou, val_loss, val_iou, lr (tab-separated).
  std::string to_text() const;
  static TrainingHistory from_text(std::string_view text);
};

template <typename T>
struct LossResult {
  double loss = 0;
  Tensor<T> grad;  // dL/dpred
};

/// Mean binary cross-entropy over every voxel of the batch; predictions clamped to [1e-7, 1-1e-7].
template <typename T>
LossResult<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target);

struct RmsPropState {
  std::vector<std::vector<double>> square_avg;
};

/// s <- rho s + (1-rho) g^2 ; w <- w - lr g / (sqrt(s) + 1e-8). Touches params.
template <typename T>
void rmsprop_step(Parameters<T>& params, const Gradients<T>& grads, RmsPropState& state, double lr, double rho);

/// Plateau decay. Replays the history: the counter resets on an improvement of the best
/// validation loss and whenever the recorded lr dropped.
double lr_schedule_update(const TrainingHistory& history, double current_lr, const TrainConfig& config);

/// Voxel IoU of (pred >= threshold) against (target >= 0.5); 1 when both are empty.
template <typename T>
double voxel_iou(std::span<const T> pred, std::span<const T> target, double threshold = 0.5);

/// Occupancy input and per-voxel affordance target (majority of the labels in the voxel,
/// ties counted as affordance) in the normalized frame of the sample.
struct EncodedSample {
  geom::VoxelGrid occupancy;
  geom::VoxelGrid target;
};
EncodedSample encode_sample(const data::LabeledSample& sample, int resolution);

struct TrainResult {
  Parameters<float> params;  // snapshot with the best validation IoU
  TrainingHistory history;
  int best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const NetworkSpec& spec, std::span<const data::LabeledSample> train_set,
                  std::span<const data::LabeledSample> validation_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace affgrasp::nets
