#include <algorithm>

#include "affgrasp/nets/kernels.hpp"

namespace affgrasp::nets::reference {

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout,
                         int ksize) {
  const int r = ksize / 2;
  Tensor<T> y(x.n, cout, x.d, x.h, x.w);
  for (int i = 0; i < x.n; ++i)
    for (int co = 0; co < cout; ++co)
      for (int z = 0; z < x.d; ++z)
        for (int yy = 0; yy < x.h; ++yy)
          for (int xx = 0; xx < x.w; ++xx) {
            double s = bias[co];
            for (int ci = 0; ci < x.c; ++ci)
              for (int kz = 0; kz < ksize; ++kz)
                for (int ky = 0; ky < ksize; ++ky)
                  for (int kx = 0; kx < ksize; ++kx) {
                    const int sz = z + kz - r, sy = yy + ky - r, sx = xx + kx - r;
                    if (sz < 0 || sy < 0 || sx < 0 || sz >= x.d || sy >= x.h || sx >= x.w) continue;
                    const std::size_t wi = (((static_cast<std::size_t>(co) * x.c + ci) * ksize + kz) * ksize + ky) * ksize + kx;
                    s += static_cast<double>(weight[wi]) * x.at(i, ci, sz, sy, sx);
                  }
            y.at(i, co, z, yy, xx) = static_cast<T>(s);
          }
  return y;
}

template <typename T>
kernels::ConvGrads<T> conv3d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy,
                                      int ksize) {
  const int r = ksize / 2;
  const int cout = dy.c;
  std::vector<double> dw(weight.size(), 0.0), db(cout, 0.0);
  std::vector<double> dx(x.size(), 0.0);
  for (int i = 0; i < x.n; ++i)
    for (int co = 0; co < cout; ++co)
      for (int z = 0; z < x.d; ++z)
        for (int yy = 0; yy < x.h; ++yy)
          for (int xx = 0; xx < x.w; ++xx) {
            const double g = dy.at(i, co, z, yy, xx);
            db[co] += g;
            for (int ci = 0; ci < x.c; ++ci)
              for (int kz = 0; kz < ksize; ++kz)
                for (int ky = 0; ky < ksize; ++ky)
                  for (int kx = 0; kx < ksize; ++kx) {
                    const int sz = z + kz - r, sy = yy + ky - r, sx = xx + kx - r;
                    if (sz < 0 || sy < 0 || sx < 0 || sz >= x.d || sy >= x.h || sx >= x.w) continue;
                    const std::size_t wi = (((static_cast<std::size_t>(co) * x.c + ci) * ksize + kz) * ksize + ky) * ksize + kx;
                    dw[wi] += g * x.at(i, ci, sz, sy, sx);
                    dx[x.plane_offset(i, ci) + (static_cast<std::size_t>(sz) * x.h + sy) * x.w + sx] += g * weight[wi];
                  }
          }
  kernels::ConvGrads<T> out;
  out.dweight.assign(dw.begin(), dw.end());
  out.dbias.assign(db.begin(), db.end());
  out.dx = Tensor<T>(x.n, x.c, x.d, x.h, x.w);
  for (std::size_t k = 0; k < dx.size(); ++k) out.dx.data[k] = static_cast<T>(dx[k]);
  return out;
}

template <typename T>
Tensor<T> maxpool3d_forward(const Tensor<T>& x) {
  Tensor<T> y(x.n, x.c, x.d / 2, x.h / 2, x.w / 2);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch)
      for (int z = 0; z < y.d; ++z)
        for (int yy = 0; yy < y.h; ++yy)
          for (int xx = 0; xx < y.w; ++xx) {
            T m = x.at(i, ch, 2 * z, 2 * yy, 2 * xx);
            for (int k = 1; k < 8; ++k) {
              m = std::max(m, x.at(i, ch, 2 * z + (k >> 2), 2 * yy + ((k >> 1) & 1), 2 * xx + (k & 1)));
            }
            y.at(i, ch, z, yy, xx) = m;
          }
  return y;
}

template <typename T>
Tensor<T> upsample3d_forward(const Tensor<T>& x) {
  Tensor<T> y(x.n, x.c, 2 * x.d, 2 * x.h, 2 * x.w);
  for (int i = 0; i < x.n; ++i)
    for (int ch = 0; ch < x.c; ++ch)
      for (int z = 0; z < y.d; ++z)
        for (int yy = 0; yy < y.h; ++yy)
          for (int xx = 0; xx < y.w; ++xx) y.at(i, ch, z, yy, xx) = x.at(i, ch, z / 2, yy / 2, xx / 2);
  return y;
}

#define AFFGRASP_INSTANTIATE_REFERENCE(T)                                                                    \
  template Tensor<T> conv3d_forward(const Tensor<T>&, std::span<const T>, std::span<const T>, int, int);      \
  template kernels::ConvGrads<T> conv3d_backward(const Tensor<T>&, std::span<const T>, const Tensor<T>&, int); \
  template Tensor<T> maxpool3d_forward(const Tensor<T>&);                                                     \
  template Tensor<T> upsample3d_forward(const Tensor<T>&);

AFFGRASP_INSTANTIATE_REFERENCE(float)
AFFGRASP_INSTANTIATE_REFERENCE(double)

}  // namespace affgrasp::nets::reference
