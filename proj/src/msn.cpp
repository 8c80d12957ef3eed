#include "masktrack/msn.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "masktrack/perturb.hpp"

#include <json.hpp>

namespace masktrack::msn {

namespace {

constexpr double kLeakySlope = 0.2;
constexpr double kNormEps = 1e-5;
constexpr int kMicroBatch = 32;  // fixed so gradient reduction order never varies

struct LayerGeom {
  int in_size = 0, out_size = 0, stride = 1, pad = 0;
  int c_in = 0, c_out = 0;
};

// "Same" padding: out = ceil(in / stride), pad split begin-heavy on neither
// side (begin = total/2, end gets the remainder).
LayerGeom make_geom(int in_size, int c_in, const ConvSpec& spec, int kernel) {
  LayerGeom g;
  g.in_size = in_size;
  g.stride = spec.stride;
  g.c_in = c_in;
  g.c_out = spec.out_channels;
  g.out_size = (in_size + spec.stride - 1) / spec.stride;
  const int total = std::max((g.out_size - 1) * spec.stride + kernel - in_size, 0);
  g.pad = total / 2;
  return g;
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Row-major C[m,n] = A[m,k] * B[k,n] (+ C when accumulate).
void gemm(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0, a, k, b, n,
              accumulate ? 1.0 : 0.0, c, n);
}

void gemm_at_b(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  // C[m,n] = A^T[m,k] * B[k,n] where A is stored [k, m]
  cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, m, n, k, 1.0, a, m, b, n,
              accumulate ? 1.0 : 0.0, c, n);
}

void gemm_a_bt(int m, int n, int k, const double* a, const double* b, double* c, bool accumulate) {
  // C[m,n] = A[m,k] * B^T[k,n] where B is stored [n, k]
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, n, k, 1.0, a, k, b, k,
              accumulate ? 1.0 : 0.0, c, n);
}

// Activations live in NHWC order: value(n, m, c) at [(n*M + m)*C + c] where
// m = y*size + x. im2col keeps the kernel window contiguous per channel run.
void im2col(const std::vector<double>& in, int n, const LayerGeom& g, int kernel,
            std::vector<double>& cols) {
  const int oh = g.out_size, ow = g.out_size;
  const int K = kernel * kernel * g.c_in;
  cols.assign(static_cast<std::size_t>(n) * oh * ow * K, 0.0);
  for (int s = 0; s < n; ++s) {
    const double* src = in.data() + static_cast<std::size_t>(s) * g.in_size * g.in_size * g.c_in;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double* row =
            cols.data() + (static_cast<std::size_t>(s) * oh * ow + oy * ow + ox) * K;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_size) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.in_size) continue;
            std::memcpy(row + (ky * kernel + kx) * g.c_in,
                        src + (static_cast<std::size_t>(iy) * g.in_size + ix) * g.c_in,
                        sizeof(double) * g.c_in);
          }
        }
      }
    }
  }
}

void col2im(const std::vector<double>& cols, int n, const LayerGeom& g, int kernel,
            std::vector<double>& din) {
  const int oh = g.out_size, ow = g.out_size;
  const int K = kernel * kernel * g.c_in;
  din.assign(static_cast<std::size_t>(n) * g.in_size * g.in_size * g.c_in, 0.0);
  for (int s = 0; s < n; ++s) {
    double* dst = din.data() + static_cast<std::size_t>(s) * g.in_size * g.in_size * g.c_in;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        const double* row =
            cols.data() + (static_cast<std::size_t>(s) * oh * ow + oy * ow + ox) * K;
        for (int ky = 0; ky < kernel; ++ky) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_size) continue;
          for (int kx = 0; kx < kernel; ++kx) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.in_size) continue;
            double* d = dst + (static_cast<std::size_t>(iy) * g.in_size + ix) * g.c_in;
            const double* r = row + (ky * kernel + kx) * g.c_in;
            for (int ci = 0; ci < g.c_in; ++ci) d[ci] += r[ci];
          }
        }
      }
    }
  }
}

struct LayerCache {
  LayerGeom geom;
  std::vector<double> cols;      // [n*oh*ow, K]
  std::vector<double> conv_out;  // pre-norm pre-activation [n*oh*ow, c_out]
  std::vector<double> mean;      // [n * c_out] (normalized layers only)
  std::vector<double> inv_std;   // [n * c_out]
  std::vector<double> out;       // post-activation, input to the next layer
};

struct BatchForward {
  std::vector<LayerCache> layers;
  std::vector<double> input;  // NHWC copy of the batch input
  std::vector<double> mean_logit;  // per sample
};

std::vector<double> to_nhwc(const std::vector<Tensor>& inputs, const MsnArch& arch) {
  const int sz = arch.input_size, C = arch.input_channels;
  std::vector<double> out(static_cast<std::size_t>(inputs.size()) * sz * sz * C);
  for (std::size_t s = 0; s < inputs.size(); ++s) {
    const Tensor& t = inputs[s];
    if (t.channels != C || t.height != sz || t.width != sz)
      throw std::invalid_argument("msn: input tensor shape does not match the architecture");
    double* dst = out.data() + s * static_cast<std::size_t>(sz) * sz * C;
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < sz; ++y)
        for (int x = 0; x < sz; ++x) dst[(static_cast<std::size_t>(y) * sz + x) * C + c] =
            t.data[(static_cast<std::size_t>(c) * sz + y) * sz + x];
  }
  return out;
}

void check_finite(const std::vector<double>& v, int layer_index) {
  for (double x : v)
    if (!std::isfinite(x))
      throw std::runtime_error("msn: non-finite value in forward pass at layer " +
                               std::to_string(layer_index));
}

// Forward over a micro-batch of n samples already in NHWC order.
BatchForward forward_batch(const MsnModel& model, std::vector<double> input, int n) {
  const MsnArch& arch = model.arch;
  BatchForward f;
  f.input = std::move(input);
  f.layers.resize(arch.layers.size());

  const std::vector<double>* cur = &f.input;
  int size = arch.input_size, c_in = arch.input_channels;
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    LayerCache& cache = f.layers[l];
    cache.geom = make_geom(size, c_in, arch.layers[l], arch.kernel);
    const LayerGeom& g = cache.geom;
    const int M = n * g.out_size * g.out_size;
    const int K = arch.kernel * arch.kernel * g.c_in;

    im2col(*cur, n, g, arch.kernel, cache.cols);
    cache.conv_out.assign(static_cast<std::size_t>(M) * g.c_out, 0.0);
    gemm(M, g.c_out, K, cache.cols.data(), model.layers[l].weight.data(), cache.conv_out.data(),
         false);
    for (int m = 0; m < M; ++m) {
      double* row = cache.conv_out.data() + static_cast<std::size_t>(m) * g.c_out;
      for (int c = 0; c < g.c_out; ++c) row[c] += model.layers[l].bias[c];
    }

    const bool last = l + 1 == arch.layers.size();
    cache.out = cache.conv_out;
    if (arch.layers[l].normalize) {
      const int Ms = g.out_size * g.out_size;
      cache.mean.assign(static_cast<std::size_t>(n) * g.c_out, 0.0);
      cache.inv_std.assign(static_cast<std::size_t>(n) * g.c_out, 0.0);
      for (int s = 0; s < n; ++s) {
        for (int c = 0; c < g.c_out; ++c) {
          double mu = 0;
          const std::size_t base = static_cast<std::size_t>(s) * Ms * g.c_out;
          for (int m = 0; m < Ms; ++m) mu += cache.conv_out[base + m * g.c_out + c];
          mu /= Ms;
          double var = 0;
          for (int m = 0; m < Ms; ++m) {
            const double d = cache.conv_out[base + m * g.c_out + c] - mu;
            var += d * d;
          }
          var /= Ms;
          const double inv = 1.0 / std::sqrt(var + kNormEps);
          cache.mean[static_cast<std::size_t>(s) * g.c_out + c] = mu;
          cache.inv_std[static_cast<std::size_t>(s) * g.c_out + c] = inv;
          const double gamma = model.layers[l].gamma[c], beta = model.layers[l].beta[c];
          for (int m = 0; m < Ms; ++m) {
            double& v = cache.out[base + m * g.c_out + c];
            v = gamma * (v - mu) * inv + beta;
          }
        }
      }
    }
    if (!last) {
      for (double& v : cache.out) v = v > 0 ? v : kLeakySlope * v;
    }
    check_finite(cache.out, static_cast<int>(l));

    cur = &cache.out;
    size = g.out_size;
    c_in = g.c_out;
  }

  // Aggregate the 1-channel patch map into one logit per sample.
  const LayerCache& top = f.layers.back();
  const int Ms = top.geom.out_size * top.geom.out_size;
  f.mean_logit.resize(n);
  for (int s = 0; s < n; ++s) {
    double z = 0;
    for (int m = 0; m < Ms; ++m) z += top.out[static_cast<std::size_t>(s) * Ms + m];
    f.mean_logit[s] = z / Ms;
  }
  return f;
}

// Backward for one micro-batch; dz holds dLoss/d(mean_logit) per sample.
// Gradient contributions are accumulated (unscaled) into grads.
void backward_batch(const MsnModel& model, const BatchForward& f, int n,
                    const std::vector<double>& dz, Gradients& grads) {
  const MsnArch& arch = model.arch;
  const int L = static_cast<int>(arch.layers.size());

  // Seed: spread each sample's logit gradient uniformly over its patch map.
  const LayerGeom& top = f.layers[L - 1].geom;
  const int Mt = top.out_size * top.out_size;
  std::vector<double> d_out(static_cast<std::size_t>(n) * Mt, 0.0);
  for (int s = 0; s < n; ++s) {
    const double g = dz[s] / Mt;
    for (int m = 0; m < Mt; ++m) d_out[static_cast<std::size_t>(s) * Mt + m] = g;
  }

  std::vector<double> d_prev;
  for (int l = L - 1; l >= 0; --l) {
    const LayerCache& cache = f.layers[l];
    const LayerGeom& g = cache.geom;
    const int M = n * g.out_size * g.out_size;
    const int Ms = g.out_size * g.out_size;
    const int K = arch.kernel * arch.kernel * g.c_in;
    const bool last = l == L - 1;

    // Through the activation: LeakyReLU derivative recovered from the output sign.
    if (!last) {
      for (std::size_t i = 0; i < d_out.size(); ++i)
        if (cache.out[i] <= 0) d_out[i] *= kLeakySlope;
    }

    // Through the normalization.
    if (arch.layers[l].normalize) {
      std::vector<double>& d_norm = d_out;
      for (int s = 0; s < n; ++s) {
        const std::size_t base = static_cast<std::size_t>(s) * Ms * g.c_out;
        for (int c = 0; c < g.c_out; ++c) {
          const double mu = cache.mean[static_cast<std::size_t>(s) * g.c_out + c];
          const double inv = cache.inv_std[static_cast<std::size_t>(s) * g.c_out + c];
          const double gamma = model.layers[l].gamma[c];
          double sum_d = 0, sum_dx = 0;
          for (int m = 0; m < Ms; ++m) {
            const double xhat = (cache.conv_out[base + m * g.c_out + c] - mu) * inv;
            const double dv = d_norm[base + m * g.c_out + c];
            sum_d += dv;
            sum_dx += dv * xhat;
          }
          grads.layers[l].beta[c] += sum_d;
          grads.layers[l].gamma[c] += sum_dx;
          const double mean_d = sum_d / Ms, mean_dx = sum_dx / Ms;
          for (int m = 0; m < Ms; ++m) {
            const double xhat = (cache.conv_out[base + m * g.c_out + c] - mu) * inv;
            double& dv = d_norm[base + m * g.c_out + c];
            dv = gamma * inv * (dv - mean_d - xhat * mean_dx);
          }
        }
      }
    }

    // Conv: dW += cols^T * dY, db += column sums, dX = (dY * W^T) scattered back.
    gemm_at_b(K, g.c_out, M, cache.cols.data(), d_out.data(), grads.layers[l].weight.data(), true);
    for (int m = 0; m < M; ++m) {
      const double* row = d_out.data() + static_cast<std::size_t>(m) * g.c_out;
      for (int c = 0; c < g.c_out; ++c) grads.layers[l].bias[c] += row[c];
    }
    if (l > 0) {
      std::vector<double> d_cols(static_cast<std::size_t>(M) * K);
      gemm_a_bt(M, K, g.c_out, d_out.data(), model.layers[l].weight.data(), d_cols.data(), false);
      col2im(d_cols, n, g, arch.kernel, d_prev);
      d_out = std::move(d_prev);
    }
  }
}

LayerParams zero_like(const LayerParams& p) {
  LayerParams z;
  z.weight.assign(p.weight.size(), 0.0);
  z.bias.assign(p.bias.size(), 0.0);
  z.gamma.assign(p.gamma.size(), 0.0);
  z.beta.assign(p.beta.size(), 0.0);
  return z;
}

Gradients zero_grads(const MsnModel& model) {
  Gradients g;
  g.layers.reserve(model.layers.size());
  for (const auto& p : model.layers) g.layers.push_back(zero_like(p));
  return g;
}

}  // namespace

MsnArch MsnArch::full256() {
  MsnArch a;
  a.input_size = 256;
  a.layers = {{64, 2, false}, {128, 2, true}, {256, 2, true}, {512, 2, true},
              {512, 2, true}, {512, 1, true}, {1, 1, false}};
  return a;
}

MsnArch MsnArch::reduced64() {
  MsnArch a;
  a.input_size = 64;
  a.layers = {{16, 2, false}, {32, 2, true}, {64, 2, true}, {128, 2, true},
              {128, 1, true}, {128, 1, true}, {1, 1, false}};
  return a;
}

MsnArch MsnArch::toy(int input_size) {
  MsnArch a;
  a.input_size = input_size;
  a.layers = {{8, 2, false}, {16, 2, true}, {1, 1, false}};
  return a;
}

std::vector<int> MsnArch::output_sizes() const {
  std::vector<int> out;
  int size = input_size;
  int c_in = input_channels;
  for (const auto& spec : layers) {
    const LayerGeom g = make_geom(size, c_in, spec, kernel);
    out.push_back(g.out_size);
    size = g.out_size;
    c_in = spec.out_channels;
  }
  return out;
}

void MsnArch::validate() const {
  if (input_size < 1 || input_channels < 1 || kernel < 1)
    throw std::invalid_argument("MsnArch: bad input geometry");
  if (layers.empty()) throw std::invalid_argument("MsnArch: at least one layer required");
  for (const auto& l : layers) {
    if (l.out_channels < 1) throw std::invalid_argument("MsnArch: layer needs >= 1 channel");
    if (l.stride != 1 && l.stride != 2) throw std::invalid_argument("MsnArch: stride must be 1 or 2");
  }
  if (layers.back().out_channels != 1)
    throw std::invalid_argument("MsnArch: final layer must emit 1 channel of patch logits");
  if (output_sizes().back() < 4)
    throw std::invalid_argument("MsnArch: patch logit map must be at least 4x4");
}

MsnModel MsnModel::init(const MsnArch& arch, std::uint64_t seed) {
  arch.validate();
  MsnModel model;
  model.arch = arch;
  Rng rng = Rng(seed).fork("msn-init");
  int c_in = arch.input_channels;
  for (const auto& spec : arch.layers) {
    LayerParams p;
    p.weight.resize(static_cast<std::size_t>(arch.kernel) * arch.kernel * c_in *
                    spec.out_channels);
    for (double& w : p.weight) w = rng.normal(0.0, 0.02);
    p.bias.assign(spec.out_channels, 0.0);
    if (spec.normalize) {
      p.gamma.assign(spec.out_channels, 1.0);
      p.beta.assign(spec.out_channels, 0.0);
    }
    model.layers.push_back(std::move(p));
    c_in = spec.out_channels;
  }
  return model;
}

ForwardResult forward(const MsnModel& model, const Tensor& input) {
  model.arch.validate();
  BatchForward f = forward_batch(model, to_nhwc({input}, model.arch), 1);
  ForwardResult r;
  const int p = f.layers.back().geom.out_size;
  r.patch_logits = Tensor(1, p, p);
  for (int m = 0; m < p * p; ++m) r.patch_logits.data[m] = f.layers.back().out[m];
  r.mean_logit = f.mean_logit[0];
  r.probability = sigmoid(r.mean_logit);
  return r;
}

double loss_and_grad(const MsnModel& model, const std::vector<Tensor>& inputs,
                     const std::vector<double>& labels, Gradients* grads) {
  model.arch.validate();
  if (inputs.empty()) throw std::invalid_argument("msn::loss_and_grad: empty batch");
  if (inputs.size() != labels.size())
    throw std::invalid_argument("msn::loss_and_grad: inputs/labels size mismatch");

  Gradients acc = zero_grads(model);
  double loss_sum = 0;
  const int total = static_cast<int>(inputs.size());
  for (int begin = 0; begin < total; begin += kMicroBatch) {
    const int n = std::min(kMicroBatch, total - begin);
    std::vector<Tensor> chunk(inputs.begin() + begin, inputs.begin() + begin + n);
    BatchForward f = forward_batch(model, to_nhwc(chunk, model.arch), n);
    std::vector<double> dz(n);
    for (int s = 0; s < n; ++s) {
      const double z = f.mean_logit[s];
      const double y = labels[begin + s];
      loss_sum += softplus(z) - y * z;
      dz[s] = sigmoid(z) - y;
    }
    if (grads) backward_batch(model, f, n, dz, acc);
  }

  if (grads) {
    const double scale = 1.0 / total;
    for (auto& layer : acc.layers) {
      for (double& v : layer.weight) v *= scale;
      for (double& v : layer.bias) v *= scale;
      for (double& v : layer.gamma) v *= scale;
      for (double& v : layer.beta) v *= scale;
    }
    *grads = std::move(acc);
  }
  return loss_sum / total;
}

Tensor make_pair_input(const Image& image, const DenseMask& mask_a, const DenseMask& mask_b,
                       int input_size) {
  if (area(mask_a) == 0 || area(mask_b) == 0)
    throw std::invalid_argument("msn: selection requires two non-empty masks");
  DenseMask uni = mask_a;
  for (std::size_t i = 0; i < uni.bits.size(); ++i) uni.bits[i] |= mask_b.bits[i];
  BBox box = tight_bbox(uni);
  // Expand 10% per side so both candidates sit fully inside the crop.
  const int ex = std::max(1, static_cast<int>(std::lround(0.1 * box.width())));
  const int ey = std::max(1, static_cast<int>(std::lround(0.1 * box.height())));
  box.x0 = std::max(0, box.x0 - ex);
  box.y0 = std::max(0, box.y0 - ey);
  box.x1 = std::min(image.width, box.x1 + ex);
  box.y1 = std::min(image.height, box.y1 + ey);
  return crop_resize(image, mask_a, mask_b, box, input_size);
}

Selection select(const MsnModel& model, const Image& image, const DenseMask& mask_a,
                 const DenseMask& mask_b) {
  const Tensor ab = make_pair_input(image, mask_a, mask_b, model.arch.input_size);
  const Tensor ba = make_pair_input(image, mask_b, mask_a, model.arch.input_size);
  const double p = 0.5 * (forward(model, ab).probability + 1.0 - forward(model, ba).probability);
  return Selection{p >= 0.5, p};
}

std::optional<PairSample> make_pair(const Image& image, const DenseMask& gt, DenseMask mask_a,
                                    DenseMask mask_b, double ambiguity_margin) {
  if (area(mask_a) == 0 || area(mask_b) == 0) return std::nullopt;
  const double iou_a = mask_iou(mask_a, gt);
  const double iou_b = mask_iou(mask_b, gt);
  if (std::abs(iou_a - iou_b) < ambiguity_margin) return std::nullopt;
  PairSample s;
  s.image = image;
  s.mask_a = std::move(mask_a);
  s.mask_b = std::move(mask_b);
  s.gt_mask = gt;
  s.iou_a = iou_a;
  s.iou_b = iou_b;
  s.a_better = iou_a > iou_b;
  return s;
}

std::vector<PairSample> generate_pairs(const std::vector<std::pair<Image, DenseMask>>& gt_masks,
                                       const PerturbConfig& cfg, std::uint64_t seed,
                                       PairStats* stats) {
  if (gt_masks.empty()) throw std::invalid_argument("generate_pairs: empty ground truth");
  Rng rng = Rng(seed).fork("msn-pairs");
  std::vector<PairSample> out;
  PairStats st;
  for (const auto& [image, gt] : gt_masks) {
    if (area(gt) < static_cast<std::uint64_t>(cfg.min_mask_area)) continue;
    for (int i = 0; i < cfg.pairs_per_mask; ++i) {
      DenseMask a = random_degradation(gt, cfg.strength, rng);
      DenseMask b = random_degradation(gt, cfg.strength, rng);
      auto pair = make_pair(image, gt, std::move(a), std::move(b), cfg.ambiguity_margin);
      if (pair) {
        out.push_back(std::move(*pair));
        ++st.kept;
      } else {
        ++st.discarded;
      }
    }
  }
  if (stats) *stats = st;
  return out;
}

PairAccuracy evaluate_pairs(const MsnModel& model, const std::vector<PairSample>& pairs) {
  PairAccuracy acc;
  if (pairs.empty()) return acc;
  std::size_t ok_sym = 0, ok_raw = 0;
  for (const auto& p : pairs) {
    const Tensor ab = make_pair_input(p.image, p.mask_a, p.mask_b, model.arch.input_size);
    const Tensor ba = make_pair_input(p.image, p.mask_b, p.mask_a, model.arch.input_size);
    const double p_ab = forward(model, ab).probability;
    const double p_ba = forward(model, ba).probability;
    const double p_sym = 0.5 * (p_ab + 1.0 - p_ba);
    if ((p_sym >= 0.5) == p.a_better) ++ok_sym;
    if ((p_ab >= 0.5) == p.a_better) ++ok_raw;
  }
  acc.symmetrized = static_cast<double>(ok_sym) / pairs.size();
  acc.raw = static_cast<double>(ok_raw) / pairs.size();
  return acc;
}

TrainResult train(const std::vector<PairSample>& dataset, const MsnArch& arch,
                  const TrainConfig& cfg) {
  arch.validate();
  if (dataset.empty()) throw std::invalid_argument("msn::train: empty dataset");
  if (cfg.batch_size < 1 || cfg.learning_rate < 0)
    throw std::invalid_argument("msn::train: bad config");

  Rng root(cfg.seed);
  Rng split_rng = root.fork("msn-split");
  std::vector<int> indices(dataset.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = static_cast<int>(i);
  for (int i = static_cast<int>(indices.size()) - 1; i > 0; --i)
    std::swap(indices[i], indices[split_rng.uniform_int(0, i)]);

  const int val_n = std::clamp(
      static_cast<int>(std::lround(cfg.validation_fraction * static_cast<double>(indices.size()))),
      1, static_cast<int>(indices.size()) - 1);
  std::vector<int> val_idx(indices.end() - val_n, indices.end());
  std::vector<int> train_idx(indices.begin(), indices.end() - val_n);
  if (train_idx.empty()) throw std::invalid_argument("msn::train: dataset too small to split");

  std::vector<PairSample> val_set;
  val_set.reserve(val_idx.size());
  for (int i : val_idx) val_set.push_back(dataset[i]);

  MsnModel model = MsnModel::init(arch, root.fork("msn-weights").next_u64());

  // Adam state
  Gradients m1 = zero_grads(model), m2 = zero_grads(model);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  long step = 0;

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr =
        cfg.learning_rate * std::pow(cfg.lr_decay_factor, epoch / std::max(1, cfg.lr_decay_every));

    Rng erng = root.fork("msn-epoch").fork(static_cast<std::uint64_t>(epoch));
    std::vector<int> order = train_idx;
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[erng.uniform_int(0, i)]);

    double loss_weighted = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      std::vector<Tensor> batch;
      std::vector<double> labels;
      batch.reserve(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        const PairSample& s = dataset[order[i]];
        const bool swap_pair = cfg.shuffle_input_order && erng.bernoulli(0.5);
        const DenseMask& first = swap_pair ? s.mask_b : s.mask_a;
        const DenseMask& second = swap_pair ? s.mask_a : s.mask_b;
        batch.push_back(make_pair_input(s.image, first, second, arch.input_size));
        labels.push_back((s.a_better != swap_pair) ? 1.0 : 0.0);
      }

      Gradients grads;
      const double loss = loss_and_grad(model, batch, labels, &grads);
      loss_weighted += loss * static_cast<double>(batch.size());

      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto update = [&](std::vector<double>& theta, const std::vector<double>& g,
                          std::vector<double>& m, std::vector<double>& v) {
          for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            theta[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + adam_eps);
          }
        };
        update(model.layers[l].weight, grads.layers[l].weight, m1.layers[l].weight,
               m2.layers[l].weight);
        update(model.layers[l].bias, grads.layers[l].bias, m1.layers[l].bias, m2.layers[l].bias);
        update(model.layers[l].gamma, grads.layers[l].gamma, m1.layers[l].gamma,
               m2.layers[l].gamma);
        update(model.layers[l].beta, grads.layers[l].beta, m1.layers[l].beta, m2.layers[l].beta);
      }
    }

    const PairAccuracy acc = evaluate_pairs(model, val_set);
    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    stats.train_loss = loss_weighted / static_cast<double>(order.size());
    stats.val_accuracy_raw = acc.raw;
    stats.val_accuracy = acc.symmetrized;
    result.history.push_back(stats);

    if (cfg.stop_at_accuracy > 0 && acc.symmetrized >= cfg.stop_at_accuracy) break;
  }

  result.model = std::move(model);
  return result;
}

namespace {

// Score a mask by contour smoothness plus image-gradient alignment along the
// contour. A compact, edge-hugging mask scores high.
double heuristic_score(const Image& image, const DenseMask& m) {
  const std::uint64_t a = area(m);
  if (a == 0) return -1.0;
  double grad_sum = 0;
  std::uint64_t perimeter = 0;
  auto gray = [&](int y, int x) {
    y = std::clamp(y, 0, image.height - 1);
    x = std::clamp(x, 0, image.width - 1);
    return (image.at(0, y, x) + image.at(1, y, x) + image.at(2, y, x)) / 3.0;
  };
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(y, x)) continue;
      const bool edge = y == 0 || x == 0 || y == m.height - 1 || x == m.width - 1;
      if (!(edge || !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) || !m.at(y, x + 1)))
        continue;
      ++perimeter;
      const double gx = gray(y - 1, x + 1) + 2 * gray(y, x + 1) + gray(y + 1, x + 1) -
                        gray(y - 1, x - 1) - 2 * gray(y, x - 1) - gray(y + 1, x - 1);
      const double gy = gray(y + 1, x - 1) + 2 * gray(y + 1, x) + gray(y + 1, x + 1) -
                        gray(y - 1, x - 1) - 2 * gray(y - 1, x) - gray(y - 1, x + 1);
      grad_sum += std::sqrt(gx * gx + gy * gy);
    }
  if (perimeter == 0) return -1.0;
  const double smoothness = std::sqrt(static_cast<double>(a)) / static_cast<double>(perimeter);
  const double grad_align = grad_sum / static_cast<double>(perimeter) / (4.0 * std::sqrt(2.0));
  return 2.0 * smoothness + grad_align;
}

}  // namespace

Selection heuristic_select(const Image& image, const DenseMask& mask_a, const DenseMask& mask_b) {
  if (area(mask_a) == 0 || area(mask_b) == 0)
    throw std::invalid_argument("heuristic_select: masks must be non-empty");
  const double sa = heuristic_score(image, mask_a);
  const double sb = heuristic_score(image, mask_b);
  const double p = 1.0 / (1.0 + std::exp(-8.0 * (sa - sb)));
  return Selection{sa >= sb, p};
}

Budget count_params_flops(const MsnArch& arch) {
  Budget b;
  int size = arch.input_size;
  int c_in = arch.input_channels;
  for (const auto& spec : arch.layers) {
    const LayerGeom g = make_geom(size, c_in, spec, arch.kernel);
    const std::uint64_t kk = static_cast<std::uint64_t>(arch.kernel) * arch.kernel;
    const std::uint64_t conv_w = kk * c_in * spec.out_channels;
    b.params += conv_w + spec.out_channels;
    if (spec.normalize) b.params += 2ULL * spec.out_channels;
    b.macs += conv_w * static_cast<std::uint64_t>(g.out_size) * g.out_size;
    size = g.out_size;
    c_in = spec.out_channels;
  }
  return b;
}

void save_model(const MsnModel& model, const std::string& path) {
  nlohmann::json header;
  header["format"] = "msn-weights";
  header["version"] = 1;
  header["arch"] = {{"input_size", model.arch.input_size},
                    {"input_channels", model.arch.input_channels},
                    {"kernel", model.arch.kernel}};
  auto& layers = header["arch"]["layers"] = nlohmann::json::array();
  for (const auto& l : model.arch.layers)
    layers.push_back({{"out", l.out_channels}, {"stride", l.stride}, {"norm", l.normalize}});

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_model: cannot open " + path);
  const std::string h = header.dump();
  const char magic[8] = {'M', 'T', 'M', 'S', 'N', '0', '0', '1'};
  out.write(magic, 8);
  const std::uint64_t hlen = h.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& l : model.layers)
    for (const auto* v : {&l.weight, &l.bias, &l.gamma, &l.beta})
      out.write(reinterpret_cast<const char*>(v->data()),
                static_cast<std::streamsize>(v->size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_model: write failed for " + path);
}

MsnModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_model: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "MTMSN001", 8) != 0)
    throw std::runtime_error("load_model: bad magic in " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen > (1ULL << 20)) throw std::runtime_error("load_model: bad header length");
  std::string h(hlen, '\0');
  in.read(h.data(), static_cast<std::streamsize>(hlen));
  const nlohmann::json header = nlohmann::json::parse(h);

  MsnArch arch;
  arch.input_size = header.at("arch").at("input_size").get<int>();
  arch.input_channels = header.at("arch").at("input_channels").get<int>();
  arch.kernel = header.at("arch").at("kernel").get<int>();
  for (const auto& l : header.at("arch").at("layers"))
    arch.layers.push_back(
        {l.at("out").get<int>(), l.at("stride").get<int>(), l.at("norm").get<bool>()});
  arch.validate();

  MsnModel model;
  model.arch = arch;
  int c_in = arch.input_channels;
  for (const auto& spec : arch.layers) {
    LayerParams p;
    p.weight.resize(static_cast<std::size_t>(arch.kernel) * arch.kernel * c_in *
                    spec.out_channels);
    p.bias.resize(spec.out_channels);
    if (spec.normalize) {
      p.gamma.resize(spec.out_channels);
      p.beta.resize(spec.out_channels);
    }
    for (auto* v : {&p.weight, &p.bias, &p.gamma, &p.beta})
      in.read(reinterpret_cast<char*>(v->data()),
              static_cast<std::streamsize>(v->size() * sizeof(double)));
    model.layers.push_back(std::move(p));
    c_in = spec.out_channels;
  }
  if (!in) throw std::runtime_error("load_model: truncated weight data in " + path);
  in.peek();
  if (!in.eof()) throw std::runtime_error("load_model: trailing bytes in " + path);
  return model;
}

}  // namespace masktrack::msn
