#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "affgrasp/error.hpp"
#include "affgrasp/nets/checkpoint.hpp"
#include "affgrasp/nets/kernels.hpp"
#include "affgrasp/nets/network.hpp"
#include "affgrasp/nets/train.hpp"
#include "affgrasp/rng.hpp"
#include "support/gradcheck.hpp"

using namespace affgrasp;
using namespace affgrasp::nets;

namespace {

NetworkSpec tiny(ArchKind kind, std::vector<int> widths = {2, 3}, int r = 8) {
  NetworkSpec s;
  s.kind = kind;
  s.stages = static_cast<int>(widths.size());
  s.stage_widths = std::move(widths);
  s.input_resolution = r;
  return s;
}

Tensor<double> random_input(std::uint64_t seed, int n, int r) {
  Tensor<double> t(n, 1, r, r, r);
  Rng rng(seed);
  for (auto& v : t.data) v = uniform01(rng) < 0.3 ? 1.0 : 0.0;
  return t;
}

}  // namespace

TEST_CASE("architecture names") {
  CHECK(parse_arch("encdec") == ArchKind::EncDec);
  CHECK(parse_arch("UNET") == ArchKind::UNet);
  CHECK(parse_arch("RES_UNET") == ArchKind::ResUNet);
  CHECK_THROWS_AS(parse_arch("vgg"), Error);
  const auto spec = tiny(ArchKind::UNet, {4, 6, 8}, 16);
  CHECK(NetworkSpec::from_text(spec.to_text()) == spec);
}

TEST_CASE("spec validation") {
  auto s = tiny(ArchKind::ResUNet, {2, 3, 4}, 6);  // 6 does not halve twice
  CHECK_THROWS_AS(s.validate(), Error);
  s = tiny(ArchKind::ResUNet, {2, 0}, 8);
  CHECK_THROWS_AS(s.validate(), Error);
}

TEST_CASE("ENC_DEC forward: shape and sigmoid range") {
  const auto p = build_network<double>(tiny(ArchKind::EncDec, {2, 3, 4}), 1);
  const auto out = forward(p, random_input(2, 1, 8), Mode::Infer).probabilities;
  CHECK(out.n == 1);
  CHECK(out.c == 1);
  CHECK(out.d == 8);
  for (double v : out.data) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("UNET decoder input channels count the upsampled map plus the skip") {
  const std::vector<int> w{3, 5, 7};
  const auto layout = make_layout(tiny(ArchKind::UNet, w, 16));
  for (std::size_t s = 0; s < w.size(); ++s) CHECK(layout.decoder[s].cin == 2 * w[s]);
  const auto plain = make_layout(tiny(ArchKind::EncDec, w, 16));
  for (std::size_t s = 0; s < w.size(); ++s) CHECK(plain.decoder[s].cin == w[s]);
}

TEST_CASE("RES_UNET blocks reduce to their shortcut when the residual branch is zeroed") {
  auto p = build_network<double>(tiny(ArchKind::ResUNet, {3, 3}), 4);
  auto zero = [&](int idx) { std::fill(p.tensors[idx].values.begin(), p.tensors[idx].values.end(), 0.0); };
  for (const auto* stages : {&p.layout.encoder, &p.layout.decoder})
    for (const auto& st : *stages)
      for (const auto& c : st.convs) {
        zero(c.weight);
        zero(c.bias);
      }
  p.touch();
  const auto fwd = forward(p, random_input(5, 2, 8), Mode::Train);
  const auto& enc = fwd.cache->encoder;

  // stage 0 changes width: projection shortcut
  REQUIRE(p.layout.encoder[0].projection.has_value());
  const auto& proj = *enc[0].projection;
  for (std::size_t i = 0; i < enc[0].output.size(); ++i)
    CHECK(enc[0].output.data[i] == doctest::Approx(std::max(0.0, proj.bn.xhat.data[i])).epsilon(1e-12));

  // stage 1 keeps width: identity shortcut
  REQUIRE_FALSE(p.layout.encoder[1].projection.has_value());
  const auto& in = enc[1].convs[0].input;
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(enc[1].output.data[i] == std::max(0.0, in.data[i]));
}

TEST_CASE("forward: zero network gives one half, and repeats bit for bit") {
  auto p = build_network<double>(tiny(ArchKind::UNet), 3);
  for (auto& t : p.tensors)
    if (t.trainable && t.name.find("bn_scale") == std::string::npos) std::fill(t.values.begin(), t.values.end(), 0.0);
  p.touch();
  Tensor<double> zeros(2, 1, 8, 8, 8);
  for (double v : forward(p, zeros, Mode::Train).probabilities.data) CHECK(v == 0.5);

  const auto q = build_network<float>(tiny(ArchKind::ResUNet), 9);
  Tensor<float> x(2, 1, 8, 8, 8);
  for (std::size_t i = 0; i < x.size(); ++i) x.data[i] = static_cast<float>(i % 7 == 0);
  CHECK(forward(q, x, Mode::Infer).probabilities.data == forward(q, x, Mode::Infer).probabilities.data);
  CHECK(forward(q, x, Mode::Train).probabilities.data == forward(q, x, Mode::Train).probabilities.data);
}

TEST_CASE("inference equals training math once the running stats hold the batch stats") {
  for (auto kind : {ArchKind::EncDec, ArchKind::UNet, ArchKind::ResUNet}) {
    auto p = build_network<double>(tiny(kind), 6);
    const auto x = random_input(7, 2, 8);
    const auto train = forward(p, x, Mode::Train);
    // momentum 0 copies the batch statistics (biased variance) into the running buffers
    update_running_stats(p, *train.cache, 0.0);
    const auto infer = forward(p, x, Mode::Infer).probabilities;
    double worst = 0;
    for (std::size_t i = 0; i < infer.size(); ++i) worst = std::max(worst, std::abs(infer.data[i] - train.probabilities.data[i]));
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("binary cross-entropy") {
  Tensor<double> t(1, 1, 4, 4, 4), half(1, 1, 4, 4, 4, 0.5);
  for (std::size_t i = 0; i < t.size(); ++i) t.data[i] = i % 3 == 0;
  CHECK(bce_loss(t, t).loss <= 1e-6);
  CHECK(bce_loss(half, t).loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Rng rng(3);
  Tensor<double> p(1, 1, 4, 4, 4);
  for (auto& v : p.data) v = uniform(rng, 0.05, 0.95);
  const auto base = bce_loss(p, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double h = 1e-5, saved = p.data[i];
    p.data[i] = saved + h;
    const double up = bce_loss(p, t).loss;
    p.data[i] = saved - h;
    const double down = bce_loss(p, t).loss;
    p.data[i] = saved;
    CHECK(testing::rel_error(base.grad.data[i], (up - down) / (2 * h)) < 1e-5);
  }
  Tensor<double> wrong(1, 1, 2, 2, 2);
  CHECK_THROWS_AS(bce_loss(wrong, t), Error);
}

TEST_CASE("backward: zero and doubled loss gradients") {
  const auto p = build_network<double>(tiny(ArchKind::ResUNet), 8);
  const auto x = random_input(9, 2, 8);
  const auto fwd = forward(p, x, Mode::Train);
  Tensor<double> zero(2, 1, 8, 8, 8), g(2, 1, 8, 8, 8), g2(2, 1, 8, 8, 8);
  Rng rng(10);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.data[i] = uniform(rng, -1, 1);
    g2.data[i] = 2 * g.data[i];
  }
  for (const auto& v : backward(p, *fwd.cache, zero))
    for (double d : v) CHECK(d == 0.0);
  const auto a = backward(p, *fwd.cache, g), b = backward(p, *fwd.cache, g2);
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].size(); ++i) CHECK(b[t][i] == 2 * a[t][i]);
}

TEST_CASE("backward refuses a cache from other or modified parameters") {
  auto p = build_network<double>(tiny(ArchKind::UNet), 1);
  const auto x = random_input(2, 2, 8);
  const auto fwd = forward(p, x, Mode::Train);
  Tensor<double> g(2, 1, 8, 8, 8, 1.0);
  const auto other = build_network<double>(tiny(ArchKind::UNet), 1);
  CHECK_THROWS_AS(backward(other, *fwd.cache, g), Error);
  p.touch();
  CHECK_THROWS_AS(backward(p, *fwd.cache, g), Error);
}

TEST_CASE("tiny RES_UNET gradients match central differences") {
  // First instance with no switching point inside the stencil is the meaningful one.
  for (std::uint64_t seed = 1;; ++seed) {
    REQUIRE(seed < 20);
    auto problem = testing::make_gradcheck_problem(ArchKind::ResUNet, seed);
    const auto report = testing::run_gradcheck(problem);
    if (report.kinks > 0) continue;
    INFO("worst " << report.worst_name << "[" << report.worst_index << "] analytic " << report.worst_analytic
                  << " numeric " << report.worst_numeric);
    CHECK(report.worst_rel < 1e-4);
    CHECK(report.checked == problem.params.trainable_count());
    break;
  }
}

TEST_CASE("rmsprop") {
  auto p = build_network<double>(tiny(ArchKind::EncDec), 2);
  const auto before = p.tensors;
  Gradients<double> g(p.tensors.size());
  for (std::size_t t = 0; t < p.tensors.size(); ++t)
    if (p.tensors[t].trainable) g[t].assign(p.tensors[t].values.size(), 0.0);
  RmsPropState state;
  rmsprop_step(p, g, state, 1e-3, 0.9);
  for (std::size_t t = 0; t < p.tensors.size(); ++t) CHECK(p.tensors[t].values == before[t].values);

  auto q = build_network<double>(tiny(ArchKind::EncDec), 2);
  for (auto& v : g)
    std::fill(v.begin(), v.end(), 1.0);
  RmsPropState s2;
  rmsprop_step(q, g, s2, 1e-3, 0.9);
  const double expected = -1e-3 / (std::sqrt(0.1) + 1e-8);
  CHECK(expected == doctest::Approx(-3.1623e-3).epsilon(1e-4));
  for (std::size_t t = 0; t < q.tensors.size(); ++t) {
    if (!q.tensors[t].trainable) continue;
    for (std::size_t i = 0; i < q.tensors[t].values.size(); ++i)
      CHECK(q.tensors[t].values[i] - before[t].values[i] == doctest::Approx(expected).epsilon(1e-9));
  }

  // step size tends to lr whatever the gradient scale
  for (double scale : {1e-3, 1.0, 1e3}) {
    auto r = build_network<double>(tiny(ArchKind::EncDec), 2);
    for (auto& v : g) std::fill(v.begin(), v.end(), scale);
    RmsPropState s3;
    for (int k = 0; k < 300; ++k) rmsprop_step(r, g, s3, 1e-3, 0.9);
    const int t = p.layout.head_bias;
    const double w0 = r.tensors[t].values[0];
    rmsprop_step(r, g, s3, 1e-3, 0.9);
    CHECK(w0 - r.tensors[t].values[0] == doctest::Approx(1e-3).epsilon(1e-4));
  }
}

TEST_CASE("plateau schedule") {
  TrainConfig cfg;
  TrainingHistory h;
  h.epochs.push_back({1, 0, 0, 1.0, 0, 1e-3});
  for (int e = 2; e <= 6; ++e) h.epochs.push_back({e, 0, 0, 1.0, 0, 1e-3});
  CHECK(lr_schedule_update(h, 1e-3, cfg) == doctest::Approx(3.16228e-4).epsilon(1e-5));

  TrainingHistory improving;
  for (int e = 1; e <= 8; ++e) improving.epochs.push_back({e, 0, 0, 1.0 / e, 0, 1e-3});
  CHECK(lr_schedule_update(improving, 1e-3, cfg) == 1e-3);

  for (auto& e : h.epochs) e.lr = 0.5e-6;
  CHECK(lr_schedule_update(h, 0.5e-6, cfg) == 0.5e-6);
}

TEST_CASE("voxel IoU") {
  const std::vector<float> a{0.9f, 0.1f, 0.6f, 0.0f}, t{1, 0, 0, 0};
  CHECK(voxel_iou<float>(a, t) == doctest::Approx(0.5));
  const std::vector<float> none(4, 0.0f);
  CHECK(voxel_iou<float>(none, none) == 1.0);
}

TEST_CASE("training: seeded runs repeat and the lr never rises") {
  std::vector<data::LabeledSample> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(data::generate_synthetic(data::kAllCategories[i], i, 800));
  TrainConfig cfg;
  cfg.max_epochs = 6;
  cfg.batch_size = 2;
  cfg.plateau_patience = 1;
  cfg.seed = 3;
  const auto spec = tiny(ArchKind::ResUNet);
  const auto a = train(spec, samples, samples, cfg);
  const auto b = train(spec, samples, samples, cfg);
  CHECK(a.history.epochs == b.history.epochs);
  CHECK(a.history.epochs.size() == 6);
  for (std::size_t i = 1; i < a.history.epochs.size(); ++i) CHECK(a.history.epochs[i].lr <= a.history.epochs[i - 1].lr);
  CHECK(TrainingHistory::from_text(a.history.to_text()).epochs.size() == 6);

  cfg.batch_size = 1;
  CHECK_THROWS_AS(train(spec, samples, samples, cfg), Error);
}

TEST_CASE("checkpoint round trip and corruption") {
  auto p = build_network<float>(tiny(ArchKind::UNet, {3, 5}, 16), 12);
  p.tensors[p.layout.head_bias].values[0] = 0.123456789f;
  const auto bytes = serialize_checkpoint(p);
  const auto q = deserialize_checkpoint(bytes);
  CHECK(q.spec == p.spec);
  REQUIRE(q.tensors.size() == p.tensors.size());
  for (std::size_t t = 0; t < p.tensors.size(); ++t) {
    CHECK(q.tensors[t].shape == p.tensors[t].shape);
    CHECK(std::memcmp(q.tensors[t].values.data(), p.tensors[t].values.data(), p.tensors[t].values.size() * 4) == 0);
  }
  CHECK(serialize_checkpoint(q) == bytes);

  auto code = [](std::vector<std::uint8_t> b) {
    try {
      deserialize_checkpoint(b);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  CHECK(code(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 9)) == ErrorCode::CorruptCheckpoint);
  auto edited = bytes;
  edited[14] ^= 1;  // inside the spec text
  CHECK(code(edited) == ErrorCode::CorruptCheckpoint);

  // a valid checksum over a future version
  auto future = bytes;
  future[4] = 2;
  future.resize(future.size() - 8);
  const auto sum = fnv1a64(future);
  for (int i = 0; i < 8; ++i) future.push_back(static_cast<std::uint8_t>(sum >> (8 * i)));
  CHECK(code(future) == ErrorCode::UnsupportedVersion);

  const auto path = std::filesystem::temp_directory_path() / "affgrasp_ckpt_test.runc";
  save_checkpoint(p, path);
  CHECK(serialize_checkpoint(load_checkpoint(path)) == bytes);
  std::filesystem::remove(path);
}
