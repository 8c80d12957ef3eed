#pragma once

// Naive nested-loop reference for the MSN forward pass. No im2col, no GEMM,
// no shared code with the implementation: direct transcription of the layer
// definitions (4x4 conv with ceil-same padding, per-channel instance norm,
// LeakyReLU 0.2 on all but the final layer).

#include <cmath>
#include <vector>

#include "masktrack/msn.hpp"

namespace oracles {

inline masktrack::Tensor naive_msn_patch_logits(const masktrack::msn::MsnModel& model,
                                                const masktrack::Tensor& input) {
  using masktrack::Tensor;
  const auto& arch = model.arch;
  const int k = arch.kernel;
  Tensor cur = input;
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    const auto& spec = arch.layers[l];
    const auto& par = model.layers[l];
    const int in_size = cur.height;
    const int c_in = cur.channels;
    const int out_size = (in_size + spec.stride - 1) / spec.stride;
    const int pad_total = std::max((out_size - 1) * spec.stride + k - in_size, 0);
    const int pad = pad_total / 2;

    Tensor next(spec.out_channels, out_size, out_size);
    for (int co = 0; co < spec.out_channels; ++co)
      for (int oy = 0; oy < out_size; ++oy)
        for (int ox = 0; ox < out_size; ++ox) {
          double acc = par.bias[co];
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * spec.stride - pad + ky;
              const int ix = ox * spec.stride - pad + kx;
              if (iy < 0 || iy >= in_size || ix < 0 || ix >= in_size) continue;
              for (int ci = 0; ci < c_in; ++ci)
                acc += par.weight[static_cast<std::size_t>((ky * k + kx) * c_in + ci) *
                                      spec.out_channels +
                                  co] *
                       cur.at(ci, iy, ix);
            }
          next.at(co, oy, ox) = acc;
        }

    if (spec.normalize) {
      const int m = out_size * out_size;
      for (int co = 0; co < spec.out_channels; ++co) {
        double mu = 0;
        for (int oy = 0; oy < out_size; ++oy)
          for (int ox = 0; ox < out_size; ++ox) mu += next.at(co, oy, ox);
        mu /= m;
        double var = 0;
        for (int oy = 0; oy < out_size; ++oy)
          for (int ox = 0; ox < out_size; ++ox) {
            const double d = next.at(co, oy, ox) - mu;
            var += d * d;
          }
        var /= m;
        const double inv = 1.0 / std::sqrt(var + 1e-5);
        for (int oy = 0; oy < out_size; ++oy)
          for (int ox = 0; ox < out_size; ++ox)
            next.at(co, oy, ox) = par.gamma[co] * (next.at(co, oy, ox) - mu) * inv + par.beta[co];
      }
    }
    if (l + 1 != arch.layers.size()) {
      for (double& v : next.data) v = v > 0 ? v : 0.2 * v;
    }
    cur = std::move(next);
  }
  return cur;
}

}  // namespace oracles
