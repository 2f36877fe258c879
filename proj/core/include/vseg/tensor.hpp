#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace vseg {

/// Dense 5D tensor indexed (batch, channel, z, y, x). float for training,
/// double for gradient checks.
template <typename T>
struct Tensor5 {
  std::vector<T> data;
  std::array<int, 5> dims{0, 0, 0, 0, 0};  // (N, C, D, H, W)

  static Tensor5 zeros(int n, int c, int d, int h, int w) {
    if (n < 1 || c < 1 || d < 1 || h < 1 || w < 1) {
      throw std::invalid_argument("tensor dims must be >= 1");
    }
    Tensor5 t;
    t.dims = {n, c, d, h, w};
    t.data.assign(static_cast<std::size_t>(n) * c * d * h * w, T(0));
    return t;
  }

  std::size_t size() const { return data.size(); }
  std::size_t spatial_size() const {
    return static_cast<std::size_t>(dims[2]) * dims[3] * dims[4];
  }

  std::size_t index(int n, int c, int z, int y, int x) const {
    return (((static_cast<std::size_t>(n) * dims[1] + c) * dims[2] + z) * static_cast<std::size_t>(dims[3]) + y) *
               dims[4] +
           x;
  }
  T& at(int n, int c, int z, int y, int x) { return data[index(n, c, z, y, x)]; }
  T at(int n, int c, int z, int y, int x) const { return data[index(n, c, z, y, x)]; }
};

/// Concatenates along the channel axis; all other dims must match.
template <typename T>
Tensor5<T> concat_channels(const Tensor5<T>& a, const Tensor5<T>& b) {
  if (a.dims[0] != b.dims[0] || a.dims[2] != b.dims[2] || a.dims[3] != b.dims[3] ||
      a.dims[4] != b.dims[4]) {
    throw std::invalid_argument("concat_channels: spatial/batch dims differ");
  }
  Tensor5<T> out = Tensor5<T>::zeros(a.dims[0], a.dims[1] + b.dims[1], a.dims[2], a.dims[3],
                                     a.dims[4]);
  std::size_t sp = a.spatial_size();
  for (int n = 0; n < a.dims[0]; ++n) {
    for (int c = 0; c < a.dims[1]; ++c) {
      std::copy_n(a.data.begin() + a.index(n, c, 0, 0, 0), sp,
                  out.data.begin() + out.index(n, c, 0, 0, 0));
    }
    for (int c = 0; c < b.dims[1]; ++c) {
      std::copy_n(b.data.begin() + b.index(n, c, 0, 0, 0), sp,
                  out.data.begin() + out.index(n, a.dims[1] + c, 0, 0, 0));
    }
  }
  return out;
}

/// Inverse of concat_channels: copies the first `c_first` channels into `a`
/// and the rest into `b` (both must be pre-sized).
template <typename T>
void split_channels(const Tensor5<T>& cat, int c_first, Tensor5<T>& a, Tensor5<T>& b) {
  std::size_t sp = cat.spatial_size();
  for (int n = 0; n < cat.dims[0]; ++n) {
    for (int c = 0; c < c_first; ++c) {
      std::copy_n(cat.data.begin() + cat.index(n, c, 0, 0, 0), sp,
                  a.data.begin() + a.index(n, c, 0, 0, 0));
    }
    for (int c = c_first; c < cat.dims[1]; ++c) {
      std::copy_n(cat.data.begin() + cat.index(n, c, 0, 0, 0), sp,
                  b.data.begin() + b.index(n, c - c_first, 0, 0, 0));
    }
  }
}

}  // namespace vseg
