#include "affgrasp/nets/train.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "affgrasp/error.hpp"
#include "affgrasp/rng.hpp"

namespace affgrasp::nets {

void TrainConfig::validate() const {
  if (!(learning_rate > 0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  if (!(rho > 0 && rho < 1)) throw Error(ErrorCode::InvalidArgument, "rho must be in (0,1)");
  if (batch_size < 2) throw Error(ErrorCode::BatchTooSmall, "batch size must be at least 2");
  if (!(decay_factor > 0 && decay_factor < 1)) throw Error(ErrorCode::InvalidArgument, "decay factor must be in (0,1)");
  if (!(min_lr > 0 && min_lr < learning_rate)) throw Error(ErrorCode::InvalidArgument, "need 0 < min_lr < learning_rate");
  if (max_epochs < 1) throw Error(ErrorCode::InvalidArgument, "max_epochs must be >= 1");
  if (plateau_patience < 1) throw Error(ErrorCode::InvalidArgument, "patience must be >= 1");
  if (!(bn_momentum >= 0 && bn_momentum < 1)) throw Error(ErrorCode::InvalidArgument, "bn momentum must be in [0,1)");
}

std::string TrainingHistory::to_text() const {
  std::string out;
  char line[256];
  for (const auto& e : epochs) {
    std::snprintf(line, sizeof line, "%d\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\n", e.epoch, e.train_loss, e.train_iou,
                  e.val_loss, e.val_iou, e.lr);
    out += line;
  }
  return out;
}

TrainingHistory TrainingHistory::from_text(std::string_view text) {
  TrainingHistory h;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    EpochRecord e;
    if (!(row >> e.epoch >> e.train_loss >> e.train_iou >> e.val_loss >> e.val_iou >> e.lr)) {
      throw Error(ErrorCode::ParseError, "history line " + std::to_string(line_no) + " needs 6 columns");
    }
    h.epochs.push_back(e);
  }
  return h;
}

template <typename T>
LossResult<T> bce_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (!pred.same_shape(target)) {
    throw Error(ErrorCode::ShapeError, "prediction " + pred.shape_string() + " vs target " + target.shape_string());
  }
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  const double count = static_cast<double>(pred.size());
  LossResult<T> r;
  r.grad = Tensor<T>(pred.n, pred.c, pred.d, pred.h, pred.w);
  double sum = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(static_cast<double>(pred.data[i]), lo, hi);
    const double t = target.data[i];
    sum -= t * std::log(p) + (1 - t) * std::log(1 - p);
    r.grad.data[i] = static_cast<T>((p - t) / (p * (1 - p)) / count);
  }
  r.loss = sum / count;
  return r;
}

template <typename T>
void rmsprop_step(Parameters<T>& params, const Gradients<T>& grads, RmsPropState& state, double lr, double rho) {
  if (grads.size() != params.tensors.size()) throw Error(ErrorCode::ShapeError, "gradient list does not match parameters");
  state.square_avg.resize(params.tensors.size());
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    auto& tensor = params.tensors[t];
    if (!tensor.trainable) continue;
    const auto& g = grads[t];
    if (g.size() != tensor.values.size()) throw Error(ErrorCode::ShapeError, "gradient size mismatch for " + tensor.name);
    auto& s = state.square_avg[t];
    if (s.empty()) s.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = g[i];
      s[i] = rho * s[i] + (1 - rho) * gi * gi;
      tensor.values[i] = static_cast<T>(tensor.values[i] - lr * gi / (std::sqrt(s[i]) + 1e-8));
    }
  }
  params.touch();
}

double lr_schedule_update(const TrainingHistory& history, double current_lr, const TrainConfig& config) {
  double best = std::numeric_limits<double>::infinity();
  int wait = 0;
  for (std::size_t i = 0; i < history.epochs.size(); ++i) {
    const auto& e = history.epochs[i];
    if (i > 0 && e.lr < history.epochs[i - 1].lr) wait = 0;
    if (e.val_loss < best) {
      best = e.val_loss;
      wait = 0;
    } else {
      ++wait;
    }
  }
  if (wait >= config.plateau_patience) return std::max(current_lr * config.decay_factor, config.min_lr);
  return current_lr;
}

template <typename T>
double voxel_iou(std::span<const T> pred, std::span<const T> target, double threshold) {
  if (pred.size() != target.size()) throw Error(ErrorCode::ShapeError, "voxel IoU inputs differ in size");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] >= threshold;
    const bool t = target[i] >= 0.5;
    inter += p && t;
    uni += p || t;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

EncodedSample encode_sample(const data::LabeledSample& sample, int resolution) {
  sample.validate();
  const auto normalized = geom::normalize_cloud(sample.cloud, resolution);
  EncodedSample e;
  e.occupancy = geom::voxelize(normalized.cloud, resolution, normalized.transform);
  e.target = geom::VoxelGrid(resolution, normalized.transform);
  std::vector<int> votes(e.target.values.size(), 0), hits(e.target.values.size(), 0);
  const auto& labels = *sample.cloud.labels;
  for (std::size_t i = 0; i < normalized.cloud.size(); ++i) {
    const auto& q = normalized.cloud.points[i];
    const std::size_t v = e.target.index(static_cast<int>(q.x()), static_cast<int>(q.y()), static_cast<int>(q.z()));
    ++hits[v];
    votes[v] += labels[i] ? 1 : 0;
  }
  for (std::size_t v = 0; v < votes.size(); ++v) {
    if (hits[v] > 0 && 2 * votes[v] >= hits[v]) e.target.values[v] = 1.0;
  }
  return e;
}

namespace {

struct Batch {
  Tensor<float> input, target;
};

Batch gather(const std::vector<EncodedSample>& samples, std::span<const std::size_t> idx, int r) {
  const int n = static_cast<int>(idx.size());
  Batch b{Tensor<float>(n, 1, r, r, r), Tensor<float>(n, 1, r, r, r)};
  for (int i = 0; i < n; ++i) {
    const auto& s = samples[idx[i]];
    std::copy(s.occupancy.values.begin(), s.occupancy.values.end(), b.input.plane(i, 0));
    std::copy(s.target.values.begin(), s.target.values.end(), b.target.plane(i, 0));
  }
  return b;
}

// Consecutive chunks of batch_size; a trailing singleton joins the previous chunk because
// batch norm cannot train on one sample.
std::vector<std::pair<std::size_t, std::size_t>> chunk(std::size_t n, std::size_t batch) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch) out.emplace_back(b, std::min(n, b + batch));
  if (out.size() > 1 && out.back().second - out.back().first == 1) {
    out.pop_back();
    out.back().second = n;
  }
  return out;
}

double mean_sample_iou(const Tensor<float>& pred, const Tensor<float>& target) {
  double sum = 0;
  const std::size_t vox = pred.spatial();
  for (int i = 0; i < pred.n; ++i) {
    sum += voxel_iou<float>({pred.plane(i, 0), vox}, {target.plane(i, 0), vox});
  }
  return sum;
}

}  // namespace

TrainResult train(const NetworkSpec& spec, std::span<const data::LabeledSample> train_set,
                  std::span<const data::LabeledSample> validation_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  spec.validate();
  config.validate();
  if (train_set.size() < 2) throw Error(ErrorCode::InsufficientData, "training needs at least 2 samples");
  if (validation_set.empty()) throw Error(ErrorCode::InsufficientData, "validation split is empty");
  const int r = spec.input_resolution;

  std::vector<EncodedSample> train_enc, val_enc;
  for (const auto& s : train_set) train_enc.push_back(encode_sample(s, r));
  for (const auto& s : validation_set) val_enc.push_back(encode_sample(s, r));

  TrainResult result;
  Parameters<float> params = build_network<float>(spec, config.seed);
  result.params = params;
  RmsPropState state;
  double lr = config.learning_rate;
  double best_iou = -1;

  std::vector<std::size_t> order(train_enc.size());
  std::vector<std::size_t> val_order(val_enc.size());
  std::iota(val_order.begin(), val_order.end(), 0);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(config.seed, 0x7000 + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i))]);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    for (const auto& [b, e] : chunk(order.size(), config.batch_size)) {
      const Batch batch = gather(train_enc, std::span(order).subspan(b, e - b), r);
      auto fwd = forward(params, batch.input, Mode::Train);
      auto loss = bce_loss(fwd.probabilities, batch.target);
      if (!std::isfinite(loss.loss)) {
        throw Error(ErrorCode::TrainingDiverged, "non-finite loss at epoch " + std::to_string(epoch));
      }
      rec.train_loss += loss.loss * static_cast<double>(e - b);
      rec.train_iou += mean_sample_iou(fwd.probabilities, batch.target);
      const auto grads = backward(params, *fwd.cache, loss.grad);
      update_running_stats(params, *fwd.cache, config.bn_momentum);
      rmsprop_step(params, grads, state, lr, config.rho);
    }
    rec.train_loss /= static_cast<double>(order.size());
    rec.train_iou /= static_cast<double>(order.size());

    for (std::size_t b = 0; b < val_order.size(); b += config.batch_size) {
      const std::size_t e = std::min(val_order.size(), b + config.batch_size);
      const Batch batch = gather(val_enc, std::span(val_order).subspan(b, e - b), r);
      const auto fwd = forward(params, batch.input, Mode::Infer);
      rec.val_loss += bce_loss(fwd.probabilities, batch.target).loss * static_cast<double>(e - b);
      rec.val_iou += mean_sample_iou(fwd.probabilities, batch.target);
    }
    rec.val_loss /= static_cast<double>(val_order.size());
    rec.val_iou /= static_cast<double>(val_order.size());
    if (!std::isfinite(rec.val_loss)) {
      throw Error(ErrorCode::TrainingDiverged, "non-finite validation loss at epoch " + std::to_string(epoch));
    }

    result.history.epochs.push_back(rec);
    if (rec.val_iou > best_iou) {
      best_iou = rec.val_iou;
      result.params = params;
      result.best_epoch = epoch;
    }
    if (on_epoch) on_epoch(rec);
    lr = lr_schedule_update(result.history, lr, config);
  }
  return result;
}

template LossResult<float> bce_loss(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> bce_loss(const Tensor<double>&, const Tensor<double>&);
template void rmsprop_step(Parameters<float>&, const Gradients<float>&, RmsPropState&, double, double);
template void rmsprop_step(Parameters<double>&, const Gradients<double>&, RmsPropState&, double, double);
template double voxel_iou(std::span<const float>, std::span<const float>, double);
template double voxel_iou(std::span<const double>, std::span<const double>, double);

}  // namespace affgrasp::nets
