#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "masktrack/mask.hpp"
#include "masktrack/rng.hpp"

namespace masktrack::msn {

// One conv layer: 4x4 kernel, "same" padding (output = ceil(input / stride)),
// optional per-channel normalization with learned scale/shift, LeakyReLU(0.2)
// on every layer except the last, which emits the raw patch logits.
struct ConvSpec {
  int out_channels = 0;
  int stride = 1;
  bool normalize = false;
};

struct MsnArch {
  int input_size = 256;
  int input_channels = 8;
  int kernel = 4;
  std::vector<ConvSpec> layers;

  // 11.16M params / 2.28 GMac at 256x256: C64(s2) C128(s2) C256(s2) C512(s2)
  // C512(s2) C512(s1) C1(s1), patch map 8x8.
  static MsnArch full256();
  // Desk-scale default: 64x64 input, channels / 4, one fewer downsample so the
  // patch map stays 4x4.
  static MsnArch reduced64();
  // Tiny stack for gradient checks and fast unit tests.
  static MsnArch toy(int input_size = 16);

  void validate() const;
  // Spatial edge of each layer's output, index 0 = after layer 0.
  std::vector<int> output_sizes() const;
};

// weight layout: [(ky*kernel + kx)*c_in + ci] x [c_out], row-major; i.e.
// weight[k_index * c_out + co]. gamma/beta are per-channel and empty when the
// layer has no normalization.
struct LayerParams {
  std::vector<double> weight;
  std::vector<double> bias;
  std::vector<double> gamma;
  std::vector<double> beta;
};

struct MsnModel {
  MsnArch arch;
  std::vector<LayerParams> layers;

  // Seeded init: conv weights N(0, 0.02), gamma 1, beta/bias 0.
  static MsnModel init(const MsnArch& arch, std::uint64_t seed);
};

struct ForwardResult {
  Tensor patch_logits;     // 1 x p x p map of per-patch preference scores
  double mean_logit = 0;   // aggregate over patches
  double probability = 0;  // sigmoid(mean_logit): belief that mask A is better
};

// Input is the 8-channel crop stack [RGB, maskA, RGB, maskB].
ForwardResult forward(const MsnModel& model, const Tensor& input);

struct Gradients {
  std::vector<LayerParams> layers;  // same shapes as the model
};

// Mean binary cross entropy over the batch; labels are 1.0 when mask A is the
// better one. Gradients are exact analytic derivatives. Throws a numeric error
// naming the layer if the forward pass produces a non-finite value.
double loss_and_grad(const MsnModel& model, const std::vector<Tensor>& inputs,
                     const std::vector<double>& labels, Gradients* grads);

struct PairSample {
  Image image;
  DenseMask mask_a;
  DenseMask mask_b;
  DenseMask gt_mask;
  bool a_better = false;
  double iou_a = 0;
  double iou_b = 0;
};

struct PerturbConfig {
  double ambiguity_margin = 0.02;  // pairs with |iou_a - iou_b| below this are discarded
  double strength = 0.6;           // degradation amplitude relative to mask size
  int pairs_per_mask = 4;
  int min_mask_area = 16;          // ground-truth masks smaller than this are skipped
};

// Labels a candidate pair against its ground truth; empty or ambiguous pairs
// yield nullopt.
std::optional<PairSample> make_pair(const Image& image, const DenseMask& gt, DenseMask mask_a,
                                    DenseMask mask_b, double ambiguity_margin);

struct PairStats {
  std::size_t kept = 0;
  std::size_t discarded = 0;
};

// FrameSelect-style pair synthesis: per ground-truth mask, two independent
// random degradations; the side with higher IoU against the ground truth wins.
std::vector<PairSample> generate_pairs(const std::vector<std::pair<Image, DenseMask>>& gt_masks,
                                       const PerturbConfig& cfg, std::uint64_t seed,
                                       PairStats* stats = nullptr);

struct TrainConfig {
  int batch_size = 512;
  double learning_rate = 0.01;
  int epochs = 40;
  int lr_decay_every = 10;       // epochs
  double lr_decay_factor = 0.1;
  bool shuffle_input_order = true;  // randomly present (A,B) or (B,A) per epoch
  double validation_fraction = 0.1;
  double stop_at_accuracy = -1.0;  // early-stop on symmetrized val accuracy; <0 disables
  std::uint64_t seed = 0;
};

struct EpochStats {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_accuracy_raw = 0;  // stored (A,B) order, single forward
  double val_accuracy = 0;      // order-symmetrized, the select() rule
};

struct TrainResult {
  MsnModel model;
  std::vector<EpochStats> history;
};

TrainResult train(const std::vector<PairSample>& dataset, const MsnArch& arch,
                  const TrainConfig& cfg);

// Accuracy of a model over a pair set (symmetrized and raw single-order).
struct PairAccuracy {
  double symmetrized = 0;
  double raw = 0;
};
PairAccuracy evaluate_pairs(const MsnModel& model, const std::vector<PairSample>& pairs);

struct Selection {
  bool a_wins = false;
  double confidence = 0;  // P(A better); exactly 0.5 ties break to A
};

// Crops the union box of both masks (expanded 10% per side, clipped), runs the
// net in both input orders and averages: p = (f(A,B) + 1 - f(B,A)) / 2.
// Throws if either mask is empty.
Selection select(const MsnModel& model, const Image& image, const DenseMask& mask_a,
                 const DenseMask& mask_b);

// Non-learned baseline: boundary smoothness plus image-gradient alignment at
// the contour. Deterministic; ties go to A.
Selection heuristic_select(const Image& image, const DenseMask& mask_a, const DenseMask& mask_b);

// The 8-channel crop stack select() feeds to the network; exposed for training
// and tests.
Tensor make_pair_input(const Image& image, const DenseMask& mask_a, const DenseMask& mask_b,
                       int input_size);

struct Budget {
  std::uint64_t params = 0;
  std::uint64_t macs = 0;  // multiply-accumulates at the arch's input size
};
Budget count_params_flops(const MsnArch& arch);

// Versioned binary container: arch descriptor + raw little-endian weights.
// Loading validates shape consistency against the descriptor.
void save_model(const MsnModel& model, const std::string& path);
MsnModel load_model(const std::string& path);

}  // namespace masktrack::msn
