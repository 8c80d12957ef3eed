#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "masktrack/msn.hpp"
#include "masktrack/perturb.hpp"
#include "support/conv_oracle.hpp"
#include "support/oracles.hpp"

using namespace masktrack;
using namespace masktrack::msn;

namespace {

Tensor random_input(Rng& rng, int channels, int size) {
  Tensor t(channels, size, size);
  for (double& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

MsnModel random_model(const MsnArch& arch, std::uint64_t seed, double scale = 0.3) {
  MsnModel model = MsnModel::init(arch, seed);
  Rng rng(seed ^ 0xABCD);
  for (auto& l : model.layers) {
    for (double& w : l.weight) w = rng.uniform(-scale, scale);
    for (double& b : l.bias) b = rng.uniform(-0.1, 0.1);
    for (double& g : l.gamma) g = rng.uniform(0.8, 1.2);
    for (double& b : l.beta) b = rng.uniform(-0.1, 0.1);
  }
  return model;
}

DenseMask rect_mask(int h, int w, int y0, int x0, int y1, int x1) {
  DenseMask m(h, w);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m.at(y, x) = 1;
  return m;
}

}  // namespace

TEST_CASE("zero weights give probability one half for any input") {
  MsnArch arch = MsnArch::toy(16);
  MsnModel model = MsnModel::init(arch, 1);
  for (auto& l : model.layers)
    for (double& w : l.weight) w = 0.0;
  Rng rng(2);
  const Tensor in = random_input(rng, 8, 16);
  const ForwardResult r = forward(model, in);
  CHECK(r.probability == 0.5);
  CHECK(r.mean_logit == 0.0);
}

TEST_CASE("final bias shifts the probability through the sigmoid") {
  MsnArch arch = MsnArch::toy(16);
  MsnModel model = MsnModel::init(arch, 1);
  for (auto& l : model.layers)
    for (double& w : l.weight) w = 0.0;
  model.layers.back().bias[0] = 1.5;
  Rng rng(3);
  const ForwardResult r = forward(model, random_input(rng, 8, 16));
  CHECK(r.probability == doctest::Approx(1.0 / (1.0 + std::exp(-1.5))).epsilon(1e-12));
}

TEST_CASE("forward matches the naive direct-convolution oracle") {
  Rng rng(20240517);
  for (std::uint64_t seed : {11ULL, 12ULL, 13ULL}) {
    MsnArch arch = MsnArch::toy(16);  // stride-2, normed stride-2, final stride-1
    MsnModel model = random_model(arch, seed);
    const Tensor in = random_input(rng, 8, 16);
    const ForwardResult got = forward(model, in);
    const Tensor want = oracles::naive_msn_patch_logits(model, in);
    REQUIRE(got.patch_logits.height == want.height);
    double z = 0;
    for (std::size_t i = 0; i < want.data.size(); ++i) {
      const double rel = std::abs(got.patch_logits.data[i] - want.data[i]) /
                         std::max(1e-30, std::abs(want.data[i]));
      CHECK(rel < 1e-10);
      z += want.data[i];
    }
    z /= static_cast<double>(want.data.size());
    CHECK(got.mean_logit == doctest::Approx(z).epsilon(1e-12));
  }
}

TEST_CASE("bce loss is ln 2 at chance and near zero when confident") {
  MsnArch arch = MsnArch::toy(16);
  MsnModel model = MsnModel::init(arch, 1);
  for (auto& l : model.layers)
    for (double& w : l.weight) w = 0.0;
  Rng rng(4);
  const std::vector<Tensor> batch = {random_input(rng, 8, 16), random_input(rng, 8, 16)};

  // probability 0.5 everywhere -> loss = ln 2 per sample
  CHECK(loss_and_grad(model, batch, {1.0, 0.0}, nullptr) ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // a confidently-correct model -> loss ~ 0
  model.layers.back().bias[0] = 30.0;
  CHECK(loss_and_grad(model, batch, {1.0, 1.0}, nullptr) < 1e-9);
  CHECK(loss_and_grad(model, batch, {1.0, 1.0}, nullptr) >= 0.0);
}

TEST_CASE("non-finite forward values raise a numeric error naming the layer") {
  MsnArch arch = MsnArch::toy(16);
  MsnModel model = random_model(arch, 5);
  model.layers[1].weight[3] = std::nan("");
  Rng rng(6);
  const std::vector<Tensor> batch = {random_input(rng, 8, 16)};
  CHECK_THROWS_WITH_AS(loss_and_grad(model, batch, {1.0}, nullptr),
                       doctest::Contains("layer 1"), std::runtime_error);
}

TEST_CASE("analytic gradients match central finite differences") {
  // Small net, 8x8 input, covering all parameter kinds: conv weight/bias on a
  // plain layer, a normalized layer, and the final logit layer.
  MsnArch arch;
  arch.input_size = 8;
  arch.layers = {{4, 2, false}, {6, 1, true}, {1, 1, false}};
  MsnModel model = random_model(arch, 99, 0.4);

  Rng rng(77);
  std::vector<Tensor> batch = {random_input(rng, 8, 8), random_input(rng, 8, 8),
                               random_input(rng, 8, 8)};
  const std::vector<double> labels = {1.0, 0.0, 1.0};

  Gradients grads;
  loss_and_grad(model, batch, labels, &grads);

  const double h = 1e-5;
  double worst = 0;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto check_tensor = [&](std::vector<double>& theta, const std::vector<double>& g,
                            const char* name) {
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double keep = theta[i];
        theta[i] = keep + h;
        const double up = loss_and_grad(model, batch, labels, nullptr);
        theta[i] = keep - h;
        const double dn = loss_and_grad(model, batch, labels, nullptr);
        theta[i] = keep;
        const double fd = (up - dn) / (2 * h);
        // The 1e-6 floor guards exactly-zero gradients (e.g. conv bias under
        // instance norm) against finite-difference cancellation noise.
        const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-6});
        const double rel = std::abs(fd - g[i]) / denom;
        worst = std::max(worst, rel);
        if (rel >= 1e-4) {
          CAPTURE(l);
          CAPTURE(name);
          CAPTURE(i);
          CHECK(rel < 1e-4);
        }
      }
    };
    check_tensor(model.layers[l].weight, grads.layers[l].weight, "weight");
    check_tensor(model.layers[l].bias, grads.layers[l].bias, "bias");
    check_tensor(model.layers[l].gamma, grads.layers[l].gamma, "gamma");
    check_tensor(model.layers[l].beta, grads.layers[l].beta, "beta");
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("select is exactly even on identical masks and order-symmetric otherwise") {
  MsnArch arch = MsnArch::toy(16);
  MsnModel model = random_model(arch, 8);
  Rng rng(9);
  const Image img = oracles::random_image(rng, 24, 24);
  const DenseMask a = rect_mask(24, 24, 4, 4, 14, 14);
  const DenseMask b = rect_mask(24, 24, 6, 5, 16, 15);

  const Selection same = select(model, img, a, a);
  CHECK(same.confidence == 0.5);
  CHECK(same.a_wins);  // tie goes to A

  const Selection ab = select(model, img, a, b);
  const Selection ba = select(model, img, b, a);
  CHECK(ab.confidence == doctest::Approx(1.0 - ba.confidence).epsilon(1e-12));
  if (ab.confidence != 0.5) CHECK(ab.a_wins != ba.a_wins);

  CHECK_THROWS_AS(select(model, img, DenseMask(24, 24), b), std::invalid_argument);
}

TEST_CASE("make_pair labels by IoU against ground truth and drops ambiguity") {
  Rng rng(10);
  const Image img = oracles::random_image(rng, 32, 32);
  const DenseMask gt = rect_mask(32, 32, 8, 8, 24, 24);
  const DenseMask badly_eroded = erode(gt, 3);  // way below half area

  // identity vs heavy erosion: identity side wins
  auto p1 = make_pair(img, gt, gt, badly_eroded, 0.02);
  REQUIRE(p1.has_value());
  CHECK(p1->a_better);
  CHECK(p1->iou_a == 1.0);
  CHECK(p1->iou_b < 0.5);

  auto p2 = make_pair(img, gt, badly_eroded, gt, 0.02);
  REQUIRE(p2.has_value());
  CHECK_FALSE(p2->a_better);

  // identical degradations: zero IoU gap, discarded
  CHECK_FALSE(make_pair(img, gt, badly_eroded, badly_eroded, 0.02).has_value());
  // empty side: discarded
  CHECK_FALSE(make_pair(img, gt, DenseMask(32, 32), gt, 0.02).has_value());
}

TEST_CASE("generate_pairs is deterministic per seed") {
  Rng rng(11);
  std::vector<std::pair<Image, DenseMask>> gt;
  for (int i = 0; i < 6; ++i) {
    Image img = oracles::random_image(rng, 32, 32);
    gt.emplace_back(std::move(img), rect_mask(32, 32, 4 + i, 5, 20 + i, 22));
  }
  PerturbConfig cfg;
  cfg.pairs_per_mask = 8;

  PairStats s1, s2;
  const auto run1 = generate_pairs(gt, cfg, 31337, &s1);
  const auto run2 = generate_pairs(gt, cfg, 31337, &s2);
  CHECK(s1.kept == s2.kept);
  CHECK(s1.discarded == s2.discarded);
  CHECK(s1.kept == run1.size());
  CHECK(s1.kept + s1.discarded == gt.size() * 8);
  REQUIRE(run1.size() == run2.size());
  for (std::size_t i = 0; i < run1.size(); ++i) {
    CHECK(run1[i].a_better == run2[i].a_better);
    CHECK(run1[i].mask_a == run2[i].mask_a);
    CHECK(run1[i].iou_a == run2[i].iou_a);
  }
  for (const auto& p : run1) {
    CHECK(std::abs(p.iou_a - p.iou_b) >= cfg.ambiguity_margin);
    CHECK(p.a_better == (p.iou_a > p.iou_b));
  }

  const auto run3 = generate_pairs(gt, cfg, 31338, nullptr);
  bool any_diff = run3.size() != run1.size();
  for (std::size_t i = 0; !any_diff && i < run1.size(); ++i)
    any_diff = !(run1[i].mask_a == run3[i].mask_a);
  CHECK(any_diff);
}

TEST_CASE("training with zero learning rate leaves the model at its init") {
  Rng rng(12);
  std::vector<std::pair<Image, DenseMask>> gt;
  gt.emplace_back(oracles::random_image(rng, 24, 24), rect_mask(24, 24, 4, 4, 18, 18));
  PerturbConfig pcfg;
  pcfg.pairs_per_mask = 24;
  const auto pairs = generate_pairs(gt, pcfg, 5, nullptr);
  REQUIRE(pairs.size() >= 8);

  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.0;
  cfg.epochs = 2;
  cfg.shuffle_input_order = false;
  cfg.seed = 42;

  TrainConfig cfg2 = cfg;
  cfg2.epochs = 5;
  const TrainResult r1 = train(pairs, MsnArch::toy(16), cfg);
  const TrainResult r2 = train(pairs, MsnArch::toy(16), cfg2);
  for (std::size_t l = 0; l < r1.model.layers.size(); ++l)
    CHECK(r1.model.layers[l].weight == r2.model.layers[l].weight);
  // flat history (loss only up to summation order: epochs shuffle the batches)
  for (const auto& e : r2.history) {
    CHECK(e.train_loss == doctest::Approx(r2.history[0].train_loss).epsilon(1e-12));
    CHECK(e.val_accuracy == r2.history[0].val_accuracy);
  }
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  Rng rng(13);
  std::vector<std::pair<Image, DenseMask>> gt;
  for (int i = 0; i < 3; ++i)
    gt.emplace_back(oracles::random_image(rng, 24, 24), rect_mask(24, 24, 3, 3 + i, 17, 17 + i));
  PerturbConfig pcfg;
  pcfg.pairs_per_mask = 16;
  const auto pairs = generate_pairs(gt, pcfg, 6, nullptr);
  REQUIRE(pairs.size() >= 16);

  TrainConfig cfg;
  cfg.batch_size = 16;
  cfg.learning_rate = 0.003;
  cfg.epochs = 3;
  cfg.seed = 777;

  const TrainResult r1 = train(pairs, MsnArch::toy(16), cfg);
  const TrainResult r2 = train(pairs, MsnArch::toy(16), cfg);
  REQUIRE(r1.history.size() == r2.history.size());
  for (std::size_t e = 0; e < r1.history.size(); ++e) {
    CHECK(r1.history[e].train_loss == r2.history[e].train_loss);
    CHECK(r1.history[e].val_accuracy == r2.history[e].val_accuracy);
    CHECK(r1.history[e].val_accuracy_raw == r2.history[e].val_accuracy_raw);
  }
  for (std::size_t l = 0; l < r1.model.layers.size(); ++l)
    CHECK(r1.model.layers[l].weight == r2.model.layers[l].weight);

  CHECK_THROWS_AS(train({}, MsnArch::toy(16), cfg), std::invalid_argument);
}

TEST_CASE("a trivially separable pair family trains past 95 percent in 5 epochs") {
  Rng rng(14);
  std::vector<PairSample> pairs;
  for (int i = 0; i < 240; ++i) {
    Image img = oracles::random_image(rng, 32, 32);
    const int w = rng.uniform_int(10, 18), h = rng.uniform_int(10, 18);
    const int y = rng.uniform_int(2, 30 - h), x = rng.uniform_int(2, 30 - w);
    const DenseMask gt = rect_mask(32, 32, y, x, y + h, x + w);
    const DenseMask bad = erode(gt, 2);
    auto p = rng.bernoulli(0.5) ? make_pair(img, gt, gt, bad, 0.02)
                                : make_pair(img, gt, bad, gt, 0.02);
    REQUIRE(p.has_value());
    pairs.push_back(std::move(*p));
  }
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.learning_rate = 0.01;
  cfg.epochs = 5;
  cfg.validation_fraction = 0.2;
  cfg.seed = 2024;
  const TrainResult r = train(pairs, MsnArch::toy(32), cfg);
  CHECK(r.history.back().val_accuracy >= 0.95);
}

TEST_CASE("count_params_flops") {
  // single 4x4 conv, 8 -> 1 channel, stride 1, 256x256 same-padded
  MsnArch one;
  one.input_size = 256;
  one.layers = {{1, 1, false}};
  const Budget b = count_params_flops(one);
  CHECK(b.params == 129);
  CHECK(b.macs == 128ULL * 65536ULL);

  // zero-layer arch counts nothing
  MsnArch zero;
  zero.layers.clear();
  CHECK(count_params_flops(zero).params == 0);
  CHECK(count_params_flops(zero).macs == 0);

  // additive over layers
  MsnArch two;
  two.input_size = 64;
  two.input_channels = 8;
  two.layers = {{16, 2, true}, {1, 1, false}};
  MsnArch first_only = two;
  first_only.layers = {{16, 2, true}};
  MsnArch second_only;
  second_only.input_size = 32;
  second_only.input_channels = 16;
  second_only.layers = {{1, 1, false}};
  CHECK(count_params_flops(two).params ==
        count_params_flops(first_only).params + count_params_flops(second_only).params);
  CHECK(count_params_flops(two).macs ==
        count_params_flops(first_only).macs + count_params_flops(second_only).macs);
}

TEST_CASE("default 256x256 architecture sits on the published budget") {
  const Budget b = count_params_flops(MsnArch::full256());
  CHECK(b.params > 0.75 * 11.1e6);
  CHECK(b.params < 1.25 * 11.1e6);
  CHECK(b.macs > 0.75 * 2.22e9);
  CHECK(b.macs < 1.25 * 2.22e9);
  // frozen exact values for regression
  CHECK(b.params == 11163329ULL);
  CHECK(b.macs == 2282225664ULL);
}

TEST_CASE("heuristic_select prefers the smooth contour on a flat image") {
  Image img(32, 32);  // flat: gradient term is zero for both masks
  const DenseMask smooth = rect_mask(32, 32, 8, 8, 24, 24);
  DenseMask salty = smooth;
  // salt the boundary: toggle alternating pixels just outside the rectangle
  for (int x = 8; x < 24; x += 2) salty.at(7, x) = 1;
  for (int y = 8; y < 24; y += 2) salty.at(y, 24) = 1;

  const Selection s = heuristic_select(img, smooth, salty);
  CHECK(s.a_wins);
  const Selection s2 = heuristic_select(img, salty, smooth);
  CHECK_FALSE(s2.a_wins);

  // identical masks tie toward A
  CHECK(heuristic_select(img, smooth, smooth).a_wins);
}

TEST_CASE("model save/load round trip preserves weights and rejects corruption") {
  const auto dir = std::filesystem::temp_directory_path() / "masktrack_msn_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.msn").string();

  MsnModel model = random_model(MsnArch::toy(16), 21);
  save_model(model, path);
  const MsnModel loaded = load_model(path);
  CHECK(loaded.arch.input_size == model.arch.input_size);
  REQUIRE(loaded.layers.size() == model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    CHECK(loaded.layers[l].weight == model.layers[l].weight);
    CHECK(loaded.layers[l].bias == model.layers[l].bias);
    CHECK(loaded.layers[l].gamma == model.layers[l].gamma);
    CHECK(loaded.layers[l].beta == model.layers[l].beta);
  }

  // truncated file fails shape validation
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 64);
  CHECK_THROWS_AS(load_model(path), std::runtime_error);
  std::filesystem::remove_all(dir);
}
