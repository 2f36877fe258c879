#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vseg/hash.hpp"
#include "vseg/rng.hpp"
#include "vseg/tensor.hpp"
#include "vseg/volume.hpp"

namespace vseg {

inline constexpr double kInstanceNormEps = 1e-5;
inline constexpr double kLeakySlope = 0.01;
inline constexpr double kProbClamp = 1e-7;

/// U-Net shape: per level two conv blocks (conv - instance norm - leaky ReLU);
/// the first conv of each non-top encoder level carries the pooling stride;
/// decoder levels upsample with a transposed conv (kernel = stride) and
/// concatenate the encoder skip.
struct UNetConfig {
  int levels = 2;
  int base_channels = 8;
  int in_channels = 1;
  int out_channels = 1;
  std::vector<std::array<int, 3>> kernel_sizes;     // one per level
  std::vector<std::array<int, 3>> pooling_strides;  // one per level transition

  static UNetConfig make(int levels_, int base_channels_) {
    UNetConfig c;
    c.levels = levels_;
    c.base_channels = base_channels_;
    c.kernel_sizes.assign(levels_, {3, 3, 3});
    c.pooling_strides.assign(levels_ > 0 ? levels_ - 1 : 0, {2, 2, 2});
    return c;
  }

  int channels_at(int level) const { return base_channels << level; }

  void validate() const {
    if (levels < 1) throw std::invalid_argument("unet levels must be >= 1");
    if (base_channels < 1) throw std::invalid_argument("unet base_channels must be >= 1");
    if (in_channels < 1 || out_channels < 1) {
      throw std::invalid_argument("unet channel counts must be >= 1");
    }
    if (static_cast<int>(kernel_sizes.size()) != levels) {
      throw std::invalid_argument("unet kernel_sizes must have one entry per level");
    }
    if (static_cast<int>(pooling_strides.size()) != levels - 1) {
      throw std::invalid_argument("unet pooling_strides must have levels-1 entries");
    }
    for (const auto& k : kernel_sizes) {
      for (int a = 0; a < 3; ++a) {
        if (k[a] < 1 || k[a] % 2 == 0) {
          throw std::invalid_argument("unet kernels must be odd so padding preserves extent");
        }
      }
    }
    for (const auto& s : pooling_strides) {
      for (int a = 0; a < 3; ++a) {
        if (s[a] < 1) throw std::invalid_argument("unet strides must be >= 1");
      }
    }
  }

  bool operator==(const UNetConfig&) const = default;

  std::array<int, 3> total_stride() const {
    std::array<int, 3> t{1, 1, 1};
    for (const auto& s : pooling_strides) {
      for (int a = 0; a < 3; ++a) t[a] *= s[a];
    }
    return t;
  }
};

template <typename T>
struct ParamTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  std::vector<T> momentum;

  static ParamTensor make(std::string name_, std::vector<int> shape_) {
    ParamTensor p;
    p.name = std::move(name_);
    p.shape = std::move(shape_);
    std::size_t n = 1;
    for (int d : p.shape) n *= static_cast<std::size_t>(d);
    p.value.assign(n, T(0));
    p.grad.assign(n, T(0));
    p.momentum.assign(n, T(0));
    return p;
  }
};

template <typename T>
struct UNetParameters {
  std::vector<ParamTensor<T>> params;

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.value.size();
    return n;
  }
  void zero_grads() {
    for (auto& p : params) std::fill(p.grad.begin(), p.grad.end(), T(0));
  }
  uint64_t checksum() const {
    uint64_t h = kFnvOffset;
    for (const auto& p : params) {
      h = fnv1a64(p.value.data(), p.value.size() * sizeof(T), h);
    }
    return h;
  }
};

/// Fixed layer walk shared by init / forward / backward / serialization.
struct LayerSpec {
  enum class Kind { kConvBlock, kTransposedConv, kFinalConv };
  Kind kind;
  int in_ch, out_ch;
  std::array<int, 3> kernel;
  std::array<int, 3> stride;
  std::string name;
};

inline std::vector<LayerSpec> unet_layer_plan(const UNetConfig& cfg) {
  cfg.validate();
  std::vector<LayerSpec> plan;
  for (int l = 0; l < cfg.levels; ++l) {
    std::array<int, 3> down = l == 0 ? std::array<int, 3>{1, 1, 1} : cfg.pooling_strides[l - 1];
    int in_ch = l == 0 ? cfg.in_channels : cfg.channels_at(l - 1);
    plan.push_back({LayerSpec::Kind::kConvBlock, in_ch, cfg.channels_at(l), cfg.kernel_sizes[l],
                    down, "enc" + std::to_string(l) + ".block0"});
    plan.push_back({LayerSpec::Kind::kConvBlock, cfg.channels_at(l), cfg.channels_at(l),
                    cfg.kernel_sizes[l], {1, 1, 1}, "enc" + std::to_string(l) + ".block1"});
  }
  for (int l = cfg.levels - 2; l >= 0; --l) {
    plan.push_back({LayerSpec::Kind::kTransposedConv, cfg.channels_at(l + 1), cfg.channels_at(l),
                    cfg.pooling_strides[l], cfg.pooling_strides[l], "dec" + std::to_string(l) + ".up"});
    plan.push_back({LayerSpec::Kind::kConvBlock, 2 * cfg.channels_at(l), cfg.channels_at(l),
                    cfg.kernel_sizes[l], {1, 1, 1}, "dec" + std::to_string(l) + ".block0"});
    plan.push_back({LayerSpec::Kind::kConvBlock, cfg.channels_at(l), cfg.channels_at(l),
                    cfg.kernel_sizes[l], {1, 1, 1}, "dec" + std::to_string(l) + ".block1"});
  }
  plan.push_back({LayerSpec::Kind::kFinalConv, cfg.channels_at(0), cfg.out_channels, {1, 1, 1},
                  {1, 1, 1}, "out"});
  return plan;
}

/// Parameter arrays for the plan, zero-initialized (scale terms at one).
template <typename T>
UNetParameters<T> make_unet_parameters(const UNetConfig& cfg) {
  UNetParameters<T> out;
  for (const LayerSpec& layer : unet_layer_plan(cfg)) {
    int kz = layer.kernel[0], ky = layer.kernel[1], kx = layer.kernel[2];
    bool transposed = layer.kind == LayerSpec::Kind::kTransposedConv;
    // Transposed weights are stored (in, out, k); with kernel == stride each
    // output voxel receives exactly in_ch contributions.
    std::vector<int> wshape = transposed
                                  ? std::vector<int>{layer.in_ch, layer.out_ch, kz, ky, kx}
                                  : std::vector<int>{layer.out_ch, layer.in_ch, kz, ky, kx};
    out.params.push_back(ParamTensor<T>::make(layer.name + ".w", wshape));
    out.params.push_back(ParamTensor<T>::make(layer.name + ".b", {layer.out_ch}));
    if (layer.kind == LayerSpec::Kind::kConvBlock) {
      ParamTensor<T> gamma = ParamTensor<T>::make(layer.name + ".gamma", {layer.out_ch});
      std::fill(gamma.value.begin(), gamma.value.end(), T(1));
      out.params.push_back(std::move(gamma));
      out.params.push_back(ParamTensor<T>::make(layer.name + ".beta", {layer.out_ch}));
    }
  }
  return out;
}

/// He fan-in initialization with a fixed seed; biases and shift terms start at
/// zero, scale terms at one.
template <typename T>
UNetParameters<T> init_unet_parameters(const UNetConfig& cfg, uint64_t seed) {
  UNetParameters<T> out = make_unet_parameters<T>(cfg);
  Rng rng(mix_seed(seed, 0x1217));
  std::size_t pi = 0;
  for (const LayerSpec& layer : unet_layer_plan(cfg)) {
    bool transposed = layer.kind == LayerSpec::Kind::kTransposedConv;
    double fan_in = transposed ? layer.in_ch
                               : static_cast<double>(layer.in_ch) * layer.kernel[0] *
                                     layer.kernel[1] * layer.kernel[2];
    double stddev = std::sqrt(2.0 / fan_in);
    for (auto& v : out.params[pi].value) v = static_cast<T>(stddev * rng.gaussian());
    pi += layer.kind == LayerSpec::Kind::kConvBlock ? 4 : 2;
  }
  return out;
}

namespace netops {

inline int ceil_div(int a, int b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

/// y[n,co,o] (+)= sum_{ci,k} w[co,ci,k] * x[n,ci,s*o-p+k], y pre-initialized
/// with the bias (or zero).
template <typename T>
void conv3d_accumulate(const Tensor5<T>& x, const std::vector<T>& w, int c_out,
                       const std::array<int, 3>& kernel, const std::array<int, 3>& stride,
                       const std::array<int, 3>& pad, Tensor5<T>& y) {
  const int cin = x.dims[1];
  const int kz = kernel[0], ky = kernel[1], kx = kernel[2];
  const int sz = stride[0], sy = stride[1], sx = stride[2];
  const int pz = pad[0], py = pad[1], px = pad[2];
  for (int n = 0; n < x.dims[0]; ++n) {
    for (int co = 0; co < c_out; ++co) {
      for (int ci = 0; ci < cin; ++ci) {
        const std::size_t wbase =
            ((static_cast<std::size_t>(co) * cin + ci) * kz) * static_cast<std::size_t>(ky) * kx;
        for (int dz = 0; dz < kz; ++dz) {
          int oz_lo = std::max(0, ceil_div(pz - dz, sz));
          int oz_hi = std::min(y.dims[2] - 1, (x.dims[2] - 1 + pz - dz) / sz);
          for (int dy = 0; dy < ky; ++dy) {
            int oy_lo = std::max(0, ceil_div(py - dy, sy));
            int oy_hi = std::min(y.dims[3] - 1, (x.dims[3] - 1 + py - dy) / sy);
            for (int dx = 0; dx < kx; ++dx) {
              int ox_lo = std::max(0, ceil_div(px - dx, sx));
              int ox_hi = std::min(y.dims[4] - 1, (x.dims[4] - 1 + px - dx) / sx);
              const T wv = w[wbase + (static_cast<std::size_t>(dz) * ky + dy) * kx + dx];
              if (wv == T(0)) continue;
              for (int oz = oz_lo; oz <= oz_hi; ++oz) {
                int iz = sz * oz - pz + dz;
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                  int iy = sy * oy - py + dy;
                  const T* xrow = &x.data[x.index(n, ci, iz, iy, 0)];
                  T* yrow = &y.data[y.index(n, co, oz, oy, 0)];
                  int ix = sx * ox_lo - px + dx;
                  for (int ox = ox_lo; ox <= ox_hi; ++ox, ix += sx) {
                    yrow[ox] += wv * xrow[ix];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

/// Adjoint of conv3d_accumulate: gx[n,ci,s*o-p+k] += w[co,ci,k] * gy[n,co,o].
template <typename T>
void conv3d_scatter(const Tensor5<T>& gy, const std::vector<T>& w, int c_in,
                    const std::array<int, 3>& kernel, const std::array<int, 3>& stride,
                    const std::array<int, 3>& pad, Tensor5<T>& gx) {
  const int cout = gy.dims[1];
  const int kz = kernel[0], ky = kernel[1], kx = kernel[2];
  const int sz = stride[0], sy = stride[1], sx = stride[2];
  const int pz = pad[0], py = pad[1], px = pad[2];
  for (int n = 0; n < gy.dims[0]; ++n) {
    for (int co = 0; co < cout; ++co) {
      for (int ci = 0; ci < c_in; ++ci) {
        const std::size_t wbase =
            ((static_cast<std::size_t>(co) * c_in + ci) * kz) * static_cast<std::size_t>(ky) * kx;
        for (int dz = 0; dz < kz; ++dz) {
          int oz_lo = std::max(0, ceil_div(pz - dz, sz));
          int oz_hi = std::min(gy.dims[2] - 1, (gx.dims[2] - 1 + pz - dz) / sz);
          for (int dy = 0; dy < ky; ++dy) {
            int oy_lo = std::max(0, ceil_div(py - dy, sy));
            int oy_hi = std::min(gy.dims[3] - 1, (gx.dims[3] - 1 + py - dy) / sy);
            for (int dx = 0; dx < kx; ++dx) {
              int ox_lo = std::max(0, ceil_div(px - dx, sx));
              int ox_hi = std::min(gy.dims[4] - 1, (gx.dims[4] - 1 + px - dx) / sx);
              const T wv = w[wbase + (static_cast<std::size_t>(dz) * ky + dy) * kx + dx];
              if (wv == T(0)) continue;
              for (int oz = oz_lo; oz <= oz_hi; ++oz) {
                int iz = sz * oz - pz + dz;
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                  int iy = sy * oy - py + dy;
                  T* gxrow = &gx.data[gx.index(n, ci, iz, iy, 0)];
                  const T* gyrow = &gy.data[gy.index(n, co, oz, oy, 0)];
                  int ix = sx * ox_lo - px + dx;
                  for (int ox = ox_lo; ox <= ox_hi; ++ox, ix += sx) {
                    gxrow[ix] += wv * gyrow[ox];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

/// gw[co,ci,k] += sum x[n,ci,s*o-p+k] * gy[n,co,o]; gb[co] += sum gy.
template <typename T>
void conv3d_param_grads(const Tensor5<T>& x, const Tensor5<T>& gy,
                        const std::array<int, 3>& kernel, const std::array<int, 3>& stride,
                        const std::array<int, 3>& pad, std::vector<T>& gw, std::vector<T>* gb) {
  const int cin = x.dims[1], cout = gy.dims[1];
  const int kz = kernel[0], ky = kernel[1], kx = kernel[2];
  const int sz = stride[0], sy = stride[1], sx = stride[2];
  const int pz = pad[0], py = pad[1], px = pad[2];
  for (int n = 0; n < x.dims[0]; ++n) {
    for (int co = 0; co < cout; ++co) {
      for (int ci = 0; ci < cin; ++ci) {
        const std::size_t wbase =
            ((static_cast<std::size_t>(co) * cin + ci) * kz) * static_cast<std::size_t>(ky) * kx;
        for (int dz = 0; dz < kz; ++dz) {
          int oz_lo = std::max(0, ceil_div(pz - dz, sz));
          int oz_hi = std::min(gy.dims[2] - 1, (x.dims[2] - 1 + pz - dz) / sz);
          for (int dy = 0; dy < ky; ++dy) {
            int oy_lo = std::max(0, ceil_div(py - dy, sy));
            int oy_hi = std::min(gy.dims[3] - 1, (x.dims[3] - 1 + py - dy) / sy);
            for (int dx = 0; dx < kx; ++dx) {
              int ox_lo = std::max(0, ceil_div(px - dx, sx));
              int ox_hi = std::min(gy.dims[4] - 1, (x.dims[4] - 1 + px - dx) / sx);
              T acc = T(0);
              for (int oz = oz_lo; oz <= oz_hi; ++oz) {
                int iz = sz * oz - pz + dz;
                for (int oy = oy_lo; oy <= oy_hi; ++oy) {
                  int iy = sy * oy - py + dy;
                  const T* xrow = &x.data[x.index(n, ci, iz, iy, 0)];
                  const T* gyrow = &gy.data[gy.index(n, co, oz, oy, 0)];
                  int ix = sx * ox_lo - px + dx;
                  for (int ox = ox_lo; ox <= ox_hi; ++ox, ix += sx) {
                    acc += xrow[ix] * gyrow[ox];
                  }
                }
              }
              gw[wbase + (static_cast<std::size_t>(dz) * ky + dy) * kx + dx] += acc;
            }
          }
        }
      }
    }
  }
  if (gb) {
    for (int n = 0; n < gy.dims[0]; ++n) {
      for (int co = 0; co < cout; ++co) {
        T acc = T(0);
        const T* p = &gy.data[gy.index(n, co, 0, 0, 0)];
        std::size_t sp = gy.spatial_size();
        for (std::size_t i = 0; i < sp; ++i) acc += p[i];
        (*gb)[co] += acc;
      }
    }
  }
}

/// Transposed conv forward (kernel == stride, no padding): exact adjoint of a
/// strided conv with the same weight, plus a bias on the upsampled side.
/// Weight layout (in, out, kz, ky, kx).
template <typename T>
void tconv3d_forward(const Tensor5<T>& x, const std::vector<T>& w, const std::vector<T>& b,
                     const std::array<int, 3>& stride, Tensor5<T>& y) {
  const int cin = x.dims[1], cout = y.dims[1];
  const int sz = stride[0], sy = stride[1], sx = stride[2];
  for (int n = 0; n < x.dims[0]; ++n) {
    for (int co = 0; co < cout; ++co) {
      T* base = &y.data[y.index(n, co, 0, 0, 0)];
      std::fill_n(base, y.spatial_size(), b[co]);
    }
  }
  for (int n = 0; n < x.dims[0]; ++n) {
    for (int ci = 0; ci < cin; ++ci) {
      for (int co = 0; co < cout; ++co) {
        const std::size_t wbase =
            ((static_cast<std::size_t>(ci) * cout + co) * sz) * static_cast<std::size_t>(sy) * sx;
        for (int dz = 0; dz < sz; ++dz) {
          for (int dy = 0; dy < sy; ++dy) {
            for (int dx = 0; dx < sx; ++dx) {
              const T wv = w[wbase + (static_cast<std::size_t>(dz) * sy + dy) * sx + dx];
              for (int iz = 0; iz < x.dims[2]; ++iz) {
                for (int iy = 0; iy < x.dims[3]; ++iy) {
                  const T* xrow = &x.data[x.index(n, ci, iz, iy, 0)];
                  T* yrow = &y.data[y.index(n, co, sz * iz + dz, sy * iy + dy, dx)];
                  for (int ix = 0; ix < x.dims[4]; ++ix) {
                    yrow[static_cast<std::size_t>(sx) * ix] += wv * xrow[ix];
                  }
                }
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void tconv3d_backward(const Tensor5<T>& x, const Tensor5<T>& gy, const std::vector<T>& w,
                      const std::array<int, 3>& stride, std::vector<T>& gw, std::vector<T>& gb,
                      Tensor5<T>& gx) {
  const int cin = x.dims[1], cout = gy.dims[1];
  const int sz = stride[0], sy = stride[1], sx = stride[2];
  for (int n = 0; n < x.dims[0]; ++n) {
    for (int ci = 0; ci < cin; ++ci) {
      for (int co = 0; co < cout; ++co) {
        const std::size_t wbase =
            ((static_cast<std::size_t>(ci) * cout + co) * sz) * static_cast<std::size_t>(sy) * sx;
        for (int dz = 0; dz < sz; ++dz) {
          for (int dy = 0; dy < sy; ++dy) {
            for (int dx = 0; dx < sx; ++dx) {
              const std::size_t wi = wbase + (static_cast<std::size_t>(dz) * sy + dy) * sx + dx;
              const T wv = w[wi];
              T acc = T(0);
              for (int iz = 0; iz < x.dims[2]; ++iz) {
                for (int iy = 0; iy < x.dims[3]; ++iy) {
                  const T* xrow = &x.data[x.index(n, ci, iz, iy, 0)];
                  T* gxrow = &gx.data[gx.index(n, ci, iz, iy, 0)];
                  const T* gyrow = &gy.data[gy.index(n, co, sz * iz + dz, sy * iy + dy, dx)];
                  for (int ix = 0; ix < x.dims[4]; ++ix) {
                    const T g = gyrow[static_cast<std::size_t>(sx) * ix];
                    acc += xrow[ix] * g;
                    gxrow[ix] += wv * g;
                  }
                }
              }
              gw[wi] += acc;
            }
          }
        }
      }
    }
  }
  for (int n = 0; n < gy.dims[0]; ++n) {
    for (int co = 0; co < cout; ++co) {
      T acc = T(0);
      const T* p = &gy.data[gy.index(n, co, 0, 0, 0)];
      std::size_t sp = gy.spatial_size();
      for (std::size_t i = 0; i < sp; ++i) acc += p[i];
      gb[co] += acc;
    }
  }
}

/// Per-(batch, channel) normalization over spatial dims.
template <typename T>
void instance_norm_forward(const Tensor5<T>& x, const std::vector<T>& gamma,
                           const std::vector<T>& beta, Tensor5<T>& y, std::vector<T>& mean,
                           std::vector<T>& invstd) {
  const int nb = x.dims[0], nc = x.dims[1];
  const std::size_t sp = x.spatial_size();
  mean.assign(static_cast<std::size_t>(nb) * nc, T(0));
  invstd.assign(static_cast<std::size_t>(nb) * nc, T(0));
  for (int n = 0; n < nb; ++n) {
    for (int c = 0; c < nc; ++c) {
      const T* xs = &x.data[x.index(n, c, 0, 0, 0)];
      double sum = 0;
      for (std::size_t i = 0; i < sp; ++i) sum += static_cast<double>(xs[i]);
      double mu = sum / static_cast<double>(sp);
      double var = 0;
      for (std::size_t i = 0; i < sp; ++i) {
        double d = static_cast<double>(xs[i]) - mu;
        var += d * d;
      }
      var /= static_cast<double>(sp);
      double is = 1.0 / std::sqrt(var + kInstanceNormEps);
      mean[static_cast<std::size_t>(n) * nc + c] = static_cast<T>(mu);
      invstd[static_cast<std::size_t>(n) * nc + c] = static_cast<T>(is);
      T* ys = &y.data[y.index(n, c, 0, 0, 0)];
      const T g = gamma[c], b = beta[c];
      for (std::size_t i = 0; i < sp; ++i) {
        ys[i] = g * static_cast<T>((static_cast<double>(xs[i]) - mu) * is) + b;
      }
    }
  }
}

template <typename T>
void instance_norm_backward(const Tensor5<T>& x, const Tensor5<T>& gy, const std::vector<T>& gamma,
                            const std::vector<T>& mean, const std::vector<T>& invstd,
                            Tensor5<T>& gx, std::vector<T>& ggamma, std::vector<T>& gbeta) {
  const int nb = x.dims[0], nc = x.dims[1];
  const std::size_t sp = x.spatial_size();
  for (int n = 0; n < nb; ++n) {
    for (int c = 0; c < nc; ++c) {
      const T* xs = &x.data[x.index(n, c, 0, 0, 0)];
      const T* gys = &gy.data[gy.index(n, c, 0, 0, 0)];
      T* gxs = &gx.data[gx.index(n, c, 0, 0, 0)];
      const double mu = mean[static_cast<std::size_t>(n) * nc + c];
      const double is = invstd[static_cast<std::size_t>(n) * nc + c];
      double sum_gy = 0, sum_gy_xhat = 0;
      for (std::size_t i = 0; i < sp; ++i) {
        double xhat = (static_cast<double>(xs[i]) - mu) * is;
        sum_gy += static_cast<double>(gys[i]);
        sum_gy_xhat += static_cast<double>(gys[i]) * xhat;
      }
      ggamma[c] += static_cast<T>(sum_gy_xhat);
      gbeta[c] += static_cast<T>(sum_gy);
      const double m = static_cast<double>(sp);
      const double g = gamma[c];
      for (std::size_t i = 0; i < sp; ++i) {
        double xhat = (static_cast<double>(xs[i]) - mu) * is;
        gxs[i] = static_cast<T>(g * is *
                                (static_cast<double>(gys[i]) - sum_gy / m - xhat * sum_gy_xhat / m));
      }
    }
  }
}

template <typename T>
void leaky_relu_forward(Tensor5<T>& x) {
  const T slope = static_cast<T>(kLeakySlope);
  for (T& v : x.data) {
    if (v < T(0)) v *= slope;
  }
}

/// gx = gy * (pre > 0 ? 1 : slope), written in place into gy.
template <typename T>
void leaky_relu_backward(const Tensor5<T>& pre_activation, Tensor5<T>& gy) {
  const T slope = static_cast<T>(kLeakySlope);
  for (std::size_t i = 0; i < gy.data.size(); ++i) {
    if (pre_activation.data[i] <= T(0)) gy.data[i] *= slope;
  }
}

}  // namespace netops

template <typename T>
struct ConvBlockCache {
  Tensor5<T> in;
  Tensor5<T> conv_out;
  std::vector<T> mean, invstd;
  Tensor5<T> norm_out;  // pre-activation
};

template <typename T>
struct UNetCache {
  bool valid = false;
  std::vector<ConvBlockCache<T>> enc_blocks;   // 2 per level
  std::vector<Tensor5<T>> enc_out;             // per level
  std::vector<Tensor5<T>> up_in, up_out;       // per decoder level (fine-to-coarse order reversed)
  std::vector<ConvBlockCache<T>> dec_blocks;   // 2 per decoder level
  Tensor5<T> final_in;
};

namespace detail {

template <typename T>
Tensor5<T> conv_block_forward(const ParamTensor<T>& w, const ParamTensor<T>& b,
                              const ParamTensor<T>& gamma, const ParamTensor<T>& beta,
                              const std::array<int, 3>& kernel, const std::array<int, 3>& stride,
                              const Tensor5<T>& in, ConvBlockCache<T>* cache) {
  std::array<int, 3> pad{(kernel[0] - 1) / 2, (kernel[1] - 1) / 2, (kernel[2] - 1) / 2};
  int c_out = w.shape[0];
  Tensor5<T> conv_out = Tensor5<T>::zeros(
      in.dims[0], c_out, (in.dims[2] + 2 * pad[0] - kernel[0]) / stride[0] + 1,
      (in.dims[3] + 2 * pad[1] - kernel[1]) / stride[1] + 1,
      (in.dims[4] + 2 * pad[2] - kernel[2]) / stride[2] + 1);
  for (int n = 0; n < conv_out.dims[0]; ++n) {
    for (int c = 0; c < c_out; ++c) {
      std::fill_n(conv_out.data.begin() + conv_out.index(n, c, 0, 0, 0), conv_out.spatial_size(),
                  b.value[c]);
    }
  }
  netops::conv3d_accumulate(in, w.value, c_out, kernel, stride, pad, conv_out);

  Tensor5<T> norm_out = Tensor5<T>::zeros(conv_out.dims[0], conv_out.dims[1], conv_out.dims[2],
                                          conv_out.dims[3], conv_out.dims[4]);
  std::vector<T> mean, invstd;
  netops::instance_norm_forward(conv_out, gamma.value, beta.value, norm_out, mean, invstd);

  Tensor5<T> out = norm_out;
  netops::leaky_relu_forward(out);

  if (cache) {
    cache->in = in;
    cache->conv_out = std::move(conv_out);
    cache->mean = std::move(mean);
    cache->invstd = std::move(invstd);
    cache->norm_out = std::move(norm_out);
  }
  return out;
}

/// Returns the gradient with respect to the block input; accumulates
/// parameter gradients.
template <typename T>
Tensor5<T> conv_block_backward(ParamTensor<T>& w, ParamTensor<T>& b, ParamTensor<T>& gamma,
                               ParamTensor<T>& beta, const std::array<int, 3>& kernel,
                               const std::array<int, 3>& stride, const ConvBlockCache<T>& cache,
                               Tensor5<T> grad_out) {
  std::array<int, 3> pad{(kernel[0] - 1) / 2, (kernel[1] - 1) / 2, (kernel[2] - 1) / 2};
  netops::leaky_relu_backward(cache.norm_out, grad_out);

  Tensor5<T> grad_conv = Tensor5<T>::zeros(grad_out.dims[0], grad_out.dims[1], grad_out.dims[2],
                                           grad_out.dims[3], grad_out.dims[4]);
  netops::instance_norm_backward(cache.conv_out, grad_out, gamma.value, cache.mean, cache.invstd,
                                 grad_conv, gamma.grad, beta.grad);

  netops::conv3d_param_grads(cache.in, grad_conv, kernel, stride, pad, w.grad, &b.grad);
  Tensor5<T> grad_in = Tensor5<T>::zeros(cache.in.dims[0], cache.in.dims[1], cache.in.dims[2],
                                         cache.in.dims[3], cache.in.dims[4]);
  netops::conv3d_scatter(grad_conv, w.value, cache.in.dims[1], kernel, stride, pad, grad_in);
  return grad_in;
}

}  // namespace detail

/// Forward pass; logits spatially match the input. Pass a cache to enable
/// unet_backward.
template <typename T>
Tensor5<T> unet_forward(const UNetConfig& cfg, const UNetParameters<T>& params,
                        const Tensor5<T>& x, UNetCache<T>* cache = nullptr) {
  cfg.validate();
  if (x.dims[1] != cfg.in_channels) {
    throw std::invalid_argument("unet_forward: input channel count mismatch");
  }
  // Strides must divide the running spatial extent so skip connections align.
  {
    std::array<int, 3> d{x.dims[2], x.dims[3], x.dims[4]};
    for (const auto& s : cfg.pooling_strides) {
      for (int a = 0; a < 3; ++a) {
        if (d[a] % s[a] != 0) {
          throw std::invalid_argument("unet_forward: stride does not divide input extent");
        }
        d[a] /= s[a];
      }
    }
  }

  const int L = cfg.levels;
  auto& P = params.params;
  std::size_t pi = 0;

  if (cache) {
    cache->enc_blocks.assign(2 * L, {});
    cache->enc_out.assign(L, {});
    cache->up_in.assign(std::max(0, L - 1), {});
    cache->up_out.assign(std::max(0, L - 1), {});
    cache->dec_blocks.assign(2 * std::max(0, L - 1), {});
  }

  Tensor5<T> cur = x;
  std::vector<Tensor5<T>> enc_out(L);
  for (int l = 0; l < L; ++l) {
    std::array<int, 3> down = l == 0 ? std::array<int, 3>{1, 1, 1} : cfg.pooling_strides[l - 1];
    cur = detail::conv_block_forward(P[pi], P[pi + 1], P[pi + 2], P[pi + 3], cfg.kernel_sizes[l],
                                     down, cur, cache ? &cache->enc_blocks[2 * l] : nullptr);
    pi += 4;
    cur = detail::conv_block_forward(P[pi], P[pi + 1], P[pi + 2], P[pi + 3], cfg.kernel_sizes[l],
                                     {1, 1, 1}, cur, cache ? &cache->enc_blocks[2 * l + 1] : nullptr);
    pi += 4;
    enc_out[l] = cur;
    if (cache) cache->enc_out[l] = cur;
  }

  for (int l = L - 2; l >= 0; --l) {
    const auto& s = cfg.pooling_strides[l];
    const ParamTensor<T>& w = P[pi];
    const ParamTensor<T>& b = P[pi + 1];
    pi += 2;
    Tensor5<T> up = Tensor5<T>::zeros(cur.dims[0], cfg.channels_at(l), cur.dims[2] * s[0],
                                      cur.dims[3] * s[1], cur.dims[4] * s[2]);
    netops::tconv3d_forward(cur, w.value, b.value, s, up);
    if (cache) {
      cache->up_in[l] = cur;
      cache->up_out[l] = up;
    }
    Tensor5<T> cat = concat_channels(up, enc_out[l]);
    cur = detail::conv_block_forward(P[pi], P[pi + 1], P[pi + 2], P[pi + 3], cfg.kernel_sizes[l],
                                     {1, 1, 1}, cat, cache ? &cache->dec_blocks[2 * l] : nullptr);
    pi += 4;
    cur = detail::conv_block_forward(P[pi], P[pi + 1], P[pi + 2], P[pi + 3], cfg.kernel_sizes[l],
                                     {1, 1, 1}, cur, cache ? &cache->dec_blocks[2 * l + 1] : nullptr);
    pi += 4;
  }

  if (cache) cache->final_in = cur;
  const ParamTensor<T>& wf = P[pi];
  const ParamTensor<T>& bf = P[pi + 1];
  Tensor5<T> logits =
      Tensor5<T>::zeros(cur.dims[0], cfg.out_channels, cur.dims[2], cur.dims[3], cur.dims[4]);
  for (int n = 0; n < logits.dims[0]; ++n) {
    for (int c = 0; c < cfg.out_channels; ++c) {
      std::fill_n(logits.data.begin() + logits.index(n, c, 0, 0, 0), logits.spatial_size(),
                  bf.value[c]);
    }
  }
  netops::conv3d_accumulate(cur, wf.value, cfg.out_channels, {1, 1, 1}, {1, 1, 1}, {0, 0, 0},
                            logits);
  if (cache) cache->valid = true;
  return logits;
}

/// Accumulates parameter gradients for the cached forward pass; repeated calls
/// add up until zero_grads()/sgd_step(). Optionally emits the input gradient.
template <typename T>
void unet_backward(const UNetConfig& cfg, UNetParameters<T>& params, const UNetCache<T>& cache,
                   const Tensor5<T>& grad_logits, Tensor5<T>* grad_input = nullptr) {
  if (!cache.valid) throw std::logic_error("unet_backward: cache missing (run forward first)");
  const int L = cfg.levels;
  auto& P = params.params;

  // Parameter index of each stage, mirroring the forward walk.
  std::vector<std::size_t> enc_pi(2 * L), dec_up_pi(std::max(0, L - 1)),
      dec_block_pi(2 * std::max(0, L - 1));
  std::size_t pi = 0;
  for (int l = 0; l < L; ++l) {
    enc_pi[2 * l] = pi;
    pi += 4;
    enc_pi[2 * l + 1] = pi;
    pi += 4;
  }
  for (int l = L - 2; l >= 0; --l) {
    dec_up_pi[l] = pi;
    pi += 2;
    dec_block_pi[2 * l] = pi;
    pi += 4;
    dec_block_pi[2 * l + 1] = pi;
    pi += 4;
  }
  const std::size_t final_pi = pi;

  // Final 1x1x1 conv.
  Tensor5<T> g = grad_logits;
  {
    ParamTensor<T>& wf = P[final_pi];
    ParamTensor<T>& bf = P[final_pi + 1];
    netops::conv3d_param_grads(cache.final_in, g, {1, 1, 1}, {1, 1, 1}, {0, 0, 0}, wf.grad,
                               &bf.grad);
    Tensor5<T> gi = Tensor5<T>::zeros(cache.final_in.dims[0], cache.final_in.dims[1],
                                      cache.final_in.dims[2], cache.final_in.dims[3],
                                      cache.final_in.dims[4]);
    netops::conv3d_scatter(g, wf.value, cache.final_in.dims[1], {1, 1, 1}, {1, 1, 1}, {0, 0, 0},
                           gi);
    g = std::move(gi);
  }

  std::vector<Tensor5<T>> enc_grad(L);
  for (int l = 0; l < L; ++l) {
    const Tensor5<T>& e = cache.enc_out[l];
    enc_grad[l] = Tensor5<T>::zeros(e.dims[0], e.dims[1], e.dims[2], e.dims[3], e.dims[4]);
  }
  if (L == 1) {
    // No decoder: the final conv input is enc_out[0].
    for (std::size_t i = 0; i < g.data.size(); ++i) enc_grad[0].data[i] += g.data[i];
  }

  // Decoder, fine to coarse.
  for (int l = 0; l <= L - 2; ++l) {
    g = detail::conv_block_backward(P[dec_block_pi[2 * l + 1]], P[dec_block_pi[2 * l + 1] + 1],
                                    P[dec_block_pi[2 * l + 1] + 2], P[dec_block_pi[2 * l + 1] + 3],
                                    cfg.kernel_sizes[l], {1, 1, 1}, cache.dec_blocks[2 * l + 1],
                                    std::move(g));
    g = detail::conv_block_backward(P[dec_block_pi[2 * l]], P[dec_block_pi[2 * l] + 1],
                                    P[dec_block_pi[2 * l] + 2], P[dec_block_pi[2 * l] + 3],
                                    cfg.kernel_sizes[l], {1, 1, 1}, cache.dec_blocks[2 * l],
                                    std::move(g));
    // g is the concat gradient: first channels_at(l) for the upsample path,
    // the rest for the skip.
    int ch = cfg.channels_at(l);
    Tensor5<T> g_up = Tensor5<T>::zeros(g.dims[0], ch, g.dims[2], g.dims[3], g.dims[4]);
    Tensor5<T> g_skip = Tensor5<T>::zeros(g.dims[0], ch, g.dims[2], g.dims[3], g.dims[4]);
    split_channels(g, ch, g_up, g_skip);
    for (std::size_t i = 0; i < g_skip.data.size(); ++i) enc_grad[l].data[i] += g_skip.data[i];

    ParamTensor<T>& wu = P[dec_up_pi[l]];
    ParamTensor<T>& bu = P[dec_up_pi[l] + 1];
    const Tensor5<T>& up_in = cache.up_in[l];
    Tensor5<T> g_deeper =
        Tensor5<T>::zeros(up_in.dims[0], up_in.dims[1], up_in.dims[2], up_in.dims[3], up_in.dims[4]);
    netops::tconv3d_backward(up_in, g_up, wu.value, cfg.pooling_strides[l], wu.grad, bu.grad,
                             g_deeper);
    if (l == L - 2) {
      for (std::size_t i = 0; i < g_deeper.data.size(); ++i) {
        enc_grad[L - 1].data[i] += g_deeper.data[i];
      }
    } else {
      g = std::move(g_deeper);  // feeds the next (coarser) decoder level
    }
  }

  // Encoder, deep to shallow.
  Tensor5<T> gcur = std::move(enc_grad[L - 1]);
  for (int l = L - 1; l >= 0; --l) {
    std::array<int, 3> down = l == 0 ? std::array<int, 3>{1, 1, 1} : cfg.pooling_strides[l - 1];
    gcur = detail::conv_block_backward(P[enc_pi[2 * l + 1]], P[enc_pi[2 * l + 1] + 1],
                                       P[enc_pi[2 * l + 1] + 2], P[enc_pi[2 * l + 1] + 3],
                                       cfg.kernel_sizes[l], {1, 1, 1}, cache.enc_blocks[2 * l + 1],
                                       std::move(gcur));
    gcur = detail::conv_block_backward(P[enc_pi[2 * l]], P[enc_pi[2 * l] + 1],
                                       P[enc_pi[2 * l] + 2], P[enc_pi[2 * l] + 3],
                                       cfg.kernel_sizes[l], down, cache.enc_blocks[2 * l],
                                       std::move(gcur));
    if (l > 0) {
      for (std::size_t i = 0; i < gcur.data.size(); ++i) gcur.data[i] += enc_grad[l - 1].data[i];
    }
  }
  if (grad_input) *grad_input = std::move(gcur);
}

template <typename T>
struct WceResult {
  double loss = 0.0;
  Tensor5<T> grad_logits;
  bool flagged = false;  // some batch item lacked a label class entirely
};

/// Auto-weighted cross-entropy over labeled voxels: per volume the labeled
/// background mean and labeled foreground mean are averaged, unlabeled voxels
/// contribute nothing, and a missing class contributes zero with the other
/// side still halved (flagged). Probabilities clamp to [1e-7, 1-1e-7]; a
/// clamped voxel's gradient is zero. Loss and gradients average over the
/// batch.
template <typename T>
WceResult<T> weighted_ce_loss(const Tensor5<T>& logits,
                              const std::vector<const TriLabelMask*>& labels) {
  if (logits.dims[1] != 1) throw std::invalid_argument("weighted_ce_loss expects one channel");
  if (static_cast<int>(labels.size()) != logits.dims[0]) {
    throw std::invalid_argument("weighted_ce_loss: one label per batch item required");
  }
  const std::size_t sp = logits.spatial_size();
  WceResult<T> out;
  out.grad_logits = Tensor5<T>::zeros(logits.dims[0], 1, logits.dims[2], logits.dims[3],
                                      logits.dims[4]);
  const int nb = logits.dims[0];
  const T lo = static_cast<T>(kProbClamp), hi = static_cast<T>(1.0 - kProbClamp);
  for (int n = 0; n < nb; ++n) {
    const TriLabelMask& y = *labels[n];
    if (voxel_count(y.dims) != sp) {
      throw std::invalid_argument("weighted_ce_loss: label dims mismatch");
    }
    const T* zrow = &logits.data[logits.index(n, 0, 0, 0, 0)];
    std::size_t n_f = 0, n_b = 0;
    for (std::size_t i = 0; i < sp; ++i) {
      if (y.data[i] == 1) ++n_f;
      else if (y.data[i] == 0) ++n_b;
    }
    if (n_f == 0 || n_b == 0) out.flagged = true;
    if (n_f == 0 && n_b == 0) continue;  // all unlabeled: zero loss, zero grad

    double sum_f = 0, sum_b = 0;
    T* grow = &out.grad_logits.data[out.grad_logits.index(n, 0, 0, 0, 0)];
    const double wf = n_f > 0 ? 1.0 / (2.0 * static_cast<double>(n_f) * nb) : 0.0;
    const double wb = n_b > 0 ? 1.0 / (2.0 * static_cast<double>(n_b) * nb) : 0.0;
    for (std::size_t i = 0; i < sp; ++i) {
      uint8_t lab = y.data[i];
      if (lab == kUnlabeled) continue;
      T p = T(1) / (T(1) + std::exp(-zrow[i]));
      bool clamped = p < lo || p > hi;
      p = std::clamp(p, lo, hi);
      if (lab == 1) {
        sum_f += -std::log(static_cast<double>(p));
        if (!clamped) grow[i] = static_cast<T>((static_cast<double>(p) - 1.0) * wf);
      } else {
        sum_b += -std::log(1.0 - static_cast<double>(p));
        if (!clamped) grow[i] = static_cast<T>(static_cast<double>(p) * wb);
      }
    }
    double vol_loss = 0;
    if (n_b > 0) vol_loss += sum_b / static_cast<double>(n_b);
    if (n_f > 0) vol_loss += sum_f / static_cast<double>(n_f);
    out.loss += vol_loss / 2.0;
  }
  out.loss /= static_cast<double>(nb);
  return out;
}

/// Plain per-voxel cross-entropy against a dense binary target, averaged over
/// all voxels and the batch.
template <typename T>
WceResult<T> plain_ce_loss(const Tensor5<T>& logits, const std::vector<const BinaryMask*>& targets) {
  if (logits.dims[1] != 1) throw std::invalid_argument("plain_ce_loss expects one channel");
  if (static_cast<int>(targets.size()) != logits.dims[0]) {
    throw std::invalid_argument("plain_ce_loss: one target per batch item required");
  }
  const std::size_t sp = logits.spatial_size();
  WceResult<T> out;
  out.grad_logits = Tensor5<T>::zeros(logits.dims[0], 1, logits.dims[2], logits.dims[3],
                                      logits.dims[4]);
  const int nb = logits.dims[0];
  const T lo = static_cast<T>(kProbClamp), hi = static_cast<T>(1.0 - kProbClamp);
  const double w = 1.0 / (static_cast<double>(sp) * nb);
  for (int n = 0; n < nb; ++n) {
    const BinaryMask& t = *targets[n];
    if (voxel_count(t.dims) != sp) throw std::invalid_argument("plain_ce_loss: dims mismatch");
    const T* zrow = &logits.data[logits.index(n, 0, 0, 0, 0)];
    T* grow = &out.grad_logits.data[out.grad_logits.index(n, 0, 0, 0, 0)];
    for (std::size_t i = 0; i < sp; ++i) {
      T p = T(1) / (T(1) + std::exp(-zrow[i]));
      bool clamped = p < lo || p > hi;
      p = std::clamp(p, lo, hi);
      double target = t.data[i];
      out.loss += w * -(target * std::log(static_cast<double>(p)) +
                        (1.0 - target) * std::log(1.0 - static_cast<double>(p)));
      if (!clamped) grow[i] = static_cast<T>((static_cast<double>(p) - target) * w);
    }
  }
  return out;
}

/// v <- momentum*v + g; w <- w - lr*v; gradients cleared afterwards.
template <typename T>
void sgd_step(UNetParameters<T>& params, double lr, double momentum) {
  if (lr < 0) throw std::invalid_argument("sgd_step: lr must be >= 0");
  for (auto& p : params.params) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      p.momentum[i] = static_cast<T>(momentum) * p.momentum[i] + p.grad[i];
      p.value[i] -= static_cast<T>(lr) * p.momentum[i];
      p.grad[i] = T(0);
    }
  }
}

/// lr(e) = lr_end + (lr_start - lr_end) * (1 - e/total)^0.9.
inline double poly_lr(int epoch, int total_epochs, double lr_start, double lr_end) {
  if (total_epochs <= 0) throw std::invalid_argument("poly_lr: total_epochs must be >= 1");
  if (epoch < 0 || epoch >= total_epochs) throw std::invalid_argument("poly_lr: epoch out of range");
  double frac = 1.0 - static_cast<double>(epoch) / static_cast<double>(total_epochs);
  return lr_end + (lr_start - lr_end) * std::pow(frac, 0.9);
}

/// Central finite differences of weighted_ce_loss(sigmoid(unet_forward))
/// against the analytic gradients, every parameter; returns the worst
/// relative error (denominator floored at 1e-4).
inline double finite_diff_check(const UNetConfig& cfg, UNetParameters<double>& params,
                                const Tensor5<double>& x, const TriLabelMask& y, double h) {
  if (!(h > 0)) throw std::invalid_argument("finite_diff_check: h must be > 0");
  std::vector<const TriLabelMask*> labels{&y};

  UNetCache<double> cache;
  Tensor5<double> logits = unet_forward(cfg, params, x, &cache);
  WceResult<double> res = weighted_ce_loss(logits, labels);
  params.zero_grads();
  unet_backward(cfg, params, cache, res.grad_logits);

  std::vector<std::vector<double>> analytic;
  for (const auto& p : params.params) analytic.push_back(p.grad);
  params.zero_grads();

  auto loss_at = [&]() {
    Tensor5<double> l = unet_forward<double>(cfg, params, x, nullptr);
    return weighted_ce_loss(l, labels).loss;
  };

  double worst = 0;
  for (std::size_t pi = 0; pi < params.params.size(); ++pi) {
    auto& p = params.params[pi];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      double keep = p.value[i];
      p.value[i] = keep + h;
      double lp = loss_at();
      p.value[i] = keep - h;
      double lm = loss_at();
      p.value[i] = keep;
      double fd = (lp - lm) / (2 * h);
      double an = analytic[pi][i];
      double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-4});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

/// Sigmoid of one batch item, as a probability volume.
inline ProbabilityVolume probabilities_from_logits(const Tensor5<float>& logits, int n,
                                                   const Dims3& dims, const Spacing3& spacing) {
  ProbabilityVolume p;
  p.dims = dims;
  p.spacing = spacing;
  p.data.resize(voxel_count(dims));
  const float* z = &logits.data[logits.index(n, 0, 0, 0, 0)];
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    p.data[i] = 1.0f / (1.0f + std::exp(-z[i]));
  }
  return p;
}

}  // namespace vseg
