#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace affgrasp::nets {

/// Batch of multi-channel volumes, layout (n, c, d, h, w) with w fastest. A single
/// feature map is the n == 1 case.
template <typename T>
struct Tensor {
  int n = 0, c = 0, d = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int d_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), d(d_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * d_ * h_ * w_, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t spatial() const noexcept { return static_cast<std::size_t>(d) * h * w; }
  std::size_t plane_offset(int i, int ch) const noexcept {
    return (static_cast<std::size_t>(i) * c + ch) * spatial();
  }
  T* plane(int i, int ch) noexcept { return data.data() + plane_offset(i, ch); }
  const T* plane(int i, int ch) const noexcept { return data.data() + plane_offset(i, ch); }
  T& at(int i, int ch, int z, int y, int x) noexcept {
    return data[plane_offset(i, ch) + (static_cast<std::size_t>(z) * h + y) * w + x];
  }
  const T& at(int i, int ch, int z, int y, int x) const noexcept {
    return data[plane_offset(i, ch) + (static_cast<std::size_t>(z) * h + y) * w + x];
  }
  bool same_shape(const Tensor& o) const noexcept {
    return n == o.n && c == o.c && d == o.d && h == o.h && w == o.w;
  }
  std::string shape_string() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(d) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

}  // namespace affgrasp::nets
