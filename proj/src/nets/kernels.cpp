#include "affgrasp/nets/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "affgrasp/error.hpp"

namespace affgrasp::nets::kernels {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeError, what);
}

// Zero-pads every (n, c) volume by one voxel on each side.
template <typename T>
Tensor<T> pad1(const Tensor<T>& x) {
  Tensor<T> p(x.n, x.c, x.d + 2, x.h + 2, x.w + 2);
  const int planes = x.n * x.c;
#pragma omp parallel for schedule(static)
  for (int pc = 0; pc < planes; ++pc) {
    const int i = pc / x.c, ch = pc % x.c;
    for (int z = 0; z < x.d; ++z) {
      for (int y = 0; y < x.h; ++y) {
        const T* src = &x.at(i, ch, z, y, 0);
        std::copy(src, src + x.w, &p.at(i, ch, z + 1, y + 1, 1));
      }
    }
  }
  return p;
}

constexpr int kChannelBlock = 4;

}  // namespace

template <typename T>
Tensor<T> conv3d_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout,
                         int ksize) {
  require(ksize == 1 || ksize == 3, "kernel size must be 1 or 3");
  const int cin = x.c;
  require(weight.size() == static_cast<std::size_t>(cout) * cin * ksize * ksize * ksize,
          "conv weight does not match input channels " + std::to_string(cin));
  require(bias.size() == static_cast<std::size_t>(cout), "conv bias size mismatch");
  Tensor<T> y(x.n, cout, x.d, x.h, x.w);
  const std::size_t vox = x.spatial();

  if (ksize == 1) {
    const int jobs = x.n * cout;
#pragma omp parallel for schedule(static)
    for (int job = 0; job < jobs; ++job) {
      const int i = job / cout, co = job % cout;
      T* out = y.plane(i, co);
      std::fill(out, out + vox, bias[co]);
      for (int ci = 0; ci < cin; ++ci) {
        const T wv = weight[static_cast<std::size_t>(co) * cin + ci];
        const T* in = x.plane(i, ci);
        for (std::size_t v = 0; v < vox; ++v) out[v] += wv * in[v];
      }
    }
    return y;
  }

  const Tensor<T> xp = pad1(x);
  const int blocks = (cout + kChannelBlock - 1) / kChannelBlock;
  const int jobs = x.n * blocks;
  const int W = x.w;
#pragma omp parallel for schedule(dynamic)
  for (int job = 0; job < jobs; ++job) {
    const int i = job / blocks;
    const int co0 = (job % blocks) * kChannelBlock;
    const int cb = std::min(kChannelBlock, cout - co0);
    std::vector<T> acc(static_cast<std::size_t>(kChannelBlock) * W);
    for (int z = 0; z < x.d; ++z) {
      for (int yy = 0; yy < x.h; ++yy) {
        for (int b = 0; b < cb; ++b) std::fill_n(acc.data() + b * W, W, bias[co0 + b]);
        for (int ci = 0; ci < cin; ++ci) {
          for (int kz = 0; kz < 3; ++kz) {
            for (int ky = 0; ky < 3; ++ky) {
              const T* row = &xp.at(i, ci, z + kz, yy + ky, 0);
              for (int b = 0; b < cb; ++b) {
                const T* k = weight.data() + ((static_cast<std::size_t>(co0 + b) * cin + ci) * 27 + kz * 9 + ky * 3);
                const T w0 = k[0], w1 = k[1], w2 = k[2];
                T* a = acc.data() + b * W;
#pragma omp simd
                for (int xx = 0; xx < W; ++xx) a[xx] += w0 * row[xx] + w1 * row[xx + 1] + w2 * row[xx + 2];
              }
            }
          }
        }
        for (int b = 0; b < cb; ++b) {
          std::copy_n(acc.data() + b * W, W, &y.at(i, co0 + b, z, yy, 0));
        }
      }
    }
  }
  return y;
}

template <typename T>
ConvGrads<T> conv3d_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, int ksize,
                             bool need_dx) {
  require(ksize == 1 || ksize == 3, "kernel size must be 1 or 3");
  require(dy.n == x.n && dy.d == x.d && dy.h == x.h && dy.w == x.w, "conv gradient shape mismatch");
  const int cin = x.c, cout = dy.c;
  const int k3 = ksize * ksize * ksize;
  require(weight.size() == static_cast<std::size_t>(cout) * cin * k3, "conv weight shape mismatch");
  const std::size_t vox = x.spatial();

  ConvGrads<T> g;
  g.dweight.assign(weight.size(), T(0));
  g.dbias.assign(cout, T(0));

#pragma omp parallel for schedule(static)
  for (int co = 0; co < cout; ++co) {
    double s = 0.0;
    for (int i = 0; i < x.n; ++i) {
      const T* d = dy.plane(i, co);
      for (std::size_t v = 0; v < vox; ++v) s += d[v];
    }
    g.dbias[co] = static_cast<T>(s);
  }

  if (ksize == 1) {
    const int pairs = cout * cin;
#pragma omp parallel for schedule(static)
    for (int pc = 0; pc < pairs; ++pc) {
      const int co = pc / cin, ci = pc % cin;
      double s = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const T* d = dy.plane(i, co);
        const T* in = x.plane(i, ci);
        T part = 0;
        for (std::size_t v = 0; v < vox; ++v) part += d[v] * in[v];
        s += part;
      }
      g.dweight[pc] = static_cast<T>(s);
    }
    if (need_dx) {
      g.dx = Tensor<T>(x.n, cin, x.d, x.h, x.w);
      const int jobs = x.n * cin;
#pragma omp parallel for schedule(static)
      for (int job = 0; job < jobs; ++job) {
        const int i = job / cin, ci = job % cin;
        T* out = g.dx.plane(i, ci);
        for (int co = 0; co < cout; ++co) {
          const T wv = weight[static_cast<std::size_t>(co) * cin + ci];
          const T* d = dy.plane(i, co);
          for (std::size_t v = 0; v < vox; ++v) out[v] += wv * d[v];
        }
      }
    }
    return g;
  }

  const int W = x.w;
  const Tensor<T> xp = pad1(x);
  const int pairs = cout * cin;
#pragma omp parallel for schedule(dynamic)
  for (int pc = 0; pc < pairs; ++pc) {
    const int co = pc / cin, ci = pc % cin;
    double s[27] = {};
    for (int i = 0; i < x.n; ++i) {
      for (int z = 0; z < x.d; ++z) {
        for (int yy = 0; yy < x.h; ++yy) {
          const T* d = &dy.at(i, co, z, yy, 0);
          for (int kz = 0; kz < 3; ++kz) {
            for (int ky = 0; ky < 3; ++ky) {
              const T* row = &xp.at(i, ci, z + kz, yy + ky, 0);
              T s0 = 0, s1 = 0, s2 = 0;
#pragma omp simd reduction(+ : s0, s1, s2)
              for (int xx = 0; xx < W; ++xx) {
                s0 += d[xx] * row[xx];
                s1 += d[xx] * row[xx + 1];
                s2 += d[xx] * row[xx + 2];
              }
              double* t = s + kz * 9 + ky * 3;
              t[0] += s0;
              t[1] += s1;
              t[2] += s2;
            }
          }
        }
      }
    }
    T* out = g.dweight.data() + static_cast<std::size_t>(pc) * 27;
    for (int k = 0; k < 27; ++k) out[k] = static_cast<T>(s[k]);
  }

  if (need_dx) {
    const Tensor<T> dyp = pad1(dy);
    g.dx = Tensor<T>(x.n, cin, x.d, x.h, x.w);
    const int blocks = (cin + kChannelBlock - 1) / kChannelBlock;
    const int jobs = x.n * blocks;
#pragma omp parallel for schedule(dynamic)
    for (int job = 0; job < jobs; ++job) {
      const int i = job / blocks;
      const int ci0 = (job % blocks) * kChannelBlock;
      const int cb = std::min(kChannelBlock, cin - ci0);
      std::vector<T> acc(static_cast<std::size_t>(kChannelBlock) * W);
      for (int z = 0; z < x.d; ++z) {
        for (int yy = 0; yy < x.h; ++yy) {
          std::fill(acc.begin(), acc.end(), T(0));
          for (int co = 0; co < cout; ++co) {
            for (int kz = 0; kz < 3; ++kz) {
              for (int ky = 0; ky < 3; ++ky) {
                const T* row = &dyp.at(i, co, z + 2 - kz, yy + 2 - ky, 0);
                for (int b = 0; b < cb; ++b) {
                  const T* k = weight.data() + ((static_cast<std::size_t>(co) * cin + ci0 + b) * 27 + kz * 9 + ky * 3);
                  const T w0 = k[0], w1 = k[1], w2 = k[2];
                  T* a = acc.data() + b * W;
#pragma omp simd
                  for (int xx = 0; xx < W; ++xx) a[xx] += w0 * row[xx + 2] + w1 * row[xx + 1] + w2 * row[xx];
                }
              }
            }
          }
          for (int b = 0; b < cb; ++b) std::copy_n(acc.data() + b * W, W, &g.dx.at(i, ci0 + b, z, yy, 0));
        }
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> batchnorm_forward_train(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                                  BatchNormCache<T>& cache) {
  if (x.n < 2) throw Error(ErrorCode::BatchTooSmall, "training-mode batch norm needs a batch of at least 2");
  require(gamma.size() == static_cast<std::size_t>(x.c) && beta.size() == gamma.size(), "batch norm size mismatch");
  const std::size_t vox = x.spatial();
  const double count = static_cast<double>(vox) * x.n;
  cache.xhat = Tensor<T>(x.n, x.c, x.d, x.h, x.w);
  cache.mean.assign(x.c, 0.0);
  cache.var.assign(x.c, 0.0);
  cache.inv_std.assign(x.c, 0.0);
  Tensor<T> y(x.n, x.c, x.d, x.h, x.w);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < x.c; ++ch) {
    double sum = 0.0;
    for (int i = 0; i < x.n; ++i) {
      const T* p = x.plane(i, ch);
      for (std::size_t v = 0; v < vox; ++v) sum += p[v];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (int i = 0; i < x.n; ++i) {
      const T* p = x.plane(i, ch);
      for (std::size_t v = 0; v < vox; ++v) {
        const double dv = p[v] - mean;
        sq += dv * dv;
      }
    }
    const double var = sq / count;
    const double inv = 1.0 / std::sqrt(var + kBatchNormEps);
    cache.mean[ch] = mean;
    cache.var[ch] = var;
    cache.inv_std[ch] = inv;
    for (int i = 0; i < x.n; ++i) {
      const T* p = x.plane(i, ch);
      T* xh = cache.xhat.plane(i, ch);
      T* out = y.plane(i, ch);
      for (std::size_t v = 0; v < vox; ++v) {
        xh[v] = static_cast<T>((p[v] - mean) * inv);
        out[v] = gamma[ch] * xh[v] + beta[ch];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> batchnorm_forward_infer(const Tensor<T>& x, std::span<const T> gamma, std::span<const T> beta,
                                  std::span<const T> running_mean, std::span<const T> running_var) {
  require(gamma.size() == static_cast<std::size_t>(x.c), "batch norm size mismatch");
  const std::size_t vox = x.spatial();
  Tensor<T> y(x.n, x.c, x.d, x.h, x.w);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < x.c; ++ch) {
    const double inv = 1.0 / std::sqrt(static_cast<double>(running_var[ch]) + kBatchNormEps);
    const double mean = running_mean[ch];
    for (int i = 0; i < x.n; ++i) {
      const T* p = x.plane(i, ch);
      T* out = y.plane(i, ch);
      for (std::size_t v = 0; v < vox; ++v) {
        out[v] = static_cast<T>(gamma[ch] * ((p[v] - mean) * inv) + beta[ch]);
      }
    }
  }
  return y;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, std::span<const T> gamma, const Tensor<T>& dy) {
  const auto& xh = cache.xhat;
  require(xh.same_shape(dy), "batch norm gradient shape mismatch");
  const std::size_t vox = dy.spatial();
  const double count = static_cast<double>(vox) * dy.n;
  BatchNormGrads<T> g;
  g.dx = Tensor<T>(dy.n, dy.c, dy.d, dy.h, dy.w);
  g.dgamma.assign(dy.c, T(0));
  g.dbeta.assign(dy.c, T(0));
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < dy.c; ++ch) {
    double sg = 0.0, sb = 0.0;
    for (int i = 0; i < dy.n; ++i) {
      const T* d = dy.plane(i, ch);
      const T* h = xh.plane(i, ch);
      for (std::size_t v = 0; v < vox; ++v) {
        sg += static_cast<double>(d[v]) * h[v];
        sb += d[v];
      }
    }
    g.dgamma[ch] = static_cast<T>(sg);
    g.dbeta[ch] = static_cast<T>(sb);
    const double scale = gamma[ch] * cache.inv_std[ch] / count;
    for (int i = 0; i < dy.n; ++i) {
      const T* d = dy.plane(i, ch);
      const T* h = xh.plane(i, ch);
      T* out = g.dx.plane(i, ch);
      for (std::size_t v = 0; v < vox; ++v) {
        out[v] = static_cast<T>(scale * (count * d[v] - sb - h[v] * sg));
      }
    }
  }
  return g;
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  T* p = x.data.data();
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) p[k] = p[k] > T(0) ? p[k] : T(0);
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& y, const Tensor<T>& dy) {
  require(y.same_shape(dy), "relu gradient shape mismatch");
  Tensor<T> dx(dy.n, dy.c, dy.d, dy.h, dy.w);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(dy.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) dx.data[k] = y.data[k] > T(0) ? dy.data[k] : T(0);
  return dx;
}

template <typename T>
Tensor<T> maxpool3d_forward(const Tensor<T>& x, std::vector<std::uint32_t>& argmax) {
  require(x.d % 2 == 0 && x.h % 2 == 0 && x.w % 2 == 0, "max pooling needs even spatial dims, got " + x.shape_string());
  Tensor<T> y(x.n, x.c, x.d / 2, x.h / 2, x.w / 2);
  argmax.assign(y.size(), 0);
  const int planes = x.n * x.c;
  const std::size_t row = static_cast<std::size_t>(x.w), slab = static_cast<std::size_t>(x.h) * x.w;
  const T* __restrict xs = x.data.data();
  T* __restrict ys = y.data.data();
  std::uint32_t* __restrict as = argmax.data();
#pragma omp parallel for schedule(static)
  for (int pc = 0; pc < planes; ++pc) {
    const std::size_t in_base = static_cast<std::size_t>(pc) * x.spatial();
    std::size_t out = static_cast<std::size_t>(pc) * y.spatial();
    for (int z = 0; z < y.d; ++z) {
      for (int yy = 0; yy < y.h; ++yy) {
        const std::size_t r0 = in_base + 2 * z * slab + 2 * yy * row;
        const std::size_t taps[4] = {r0, r0 + row, r0 + slab, r0 + slab + row};
        T* yo = ys + out;
        std::uint32_t* ao = as + out;
        for (int xx = 0; xx < y.w; ++xx) {
          T v[8];
          for (int k = 0; k < 8; ++k) v[k] = xs[taps[k >> 1] + 2 * xx + (k & 1)];
          T m = v[0];
          int best = 0;
          // strict > keeps the first maximum in (dz, dy, dx) order
          // (mask arithmetic: GCC turns a ternary here into a branch that mispredicts on real data)
          for (int k = 1; k < 8; ++k) {
            const int take = -static_cast<int>(v[k] > m);
            best = (best & ~take) | (k & take);
            m = std::max(m, v[k]);
          }
          yo[xx] = m;
          ao[xx] = static_cast<std::uint32_t>(taps[best >> 1] + 2 * xx + (best & 1));
        }
        out += static_cast<std::size_t>(y.w);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> maxpool3d_backward(const Tensor<T>& dy, const std::vector<std::uint32_t>& argmax, int n, int c, int d,
                             int h, int w) {
  require(argmax.size() == dy.size(), "max pool cache mismatch");
  Tensor<T> dx(n, c, d, h, w);
  // Each input index belongs to exactly one pooling window, so writes never collide.
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(dy.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < total; ++k) dx.data[argmax[k]] += dy.data[k];
  return dx;
}

template <typename T>
Tensor<T> upsample3d_forward(const Tensor<T>& x) {
  Tensor<T> y(x.n, x.c, x.d * 2, x.h * 2, x.w * 2);
  const int planes = x.n * x.c;
#pragma omp parallel for schedule(static)
  for (int pc = 0; pc < planes; ++pc) {
    const int i = pc / x.c, ch = pc % x.c;
    for (int z = 0; z < y.d; ++z) {
      for (int yy = 0; yy < y.h; ++yy) {
        const T* src = &x.at(i, ch, z / 2, yy / 2, 0);
        T* dst = &y.at(i, ch, z, yy, 0);
        for (int xx = 0; xx < y.w; ++xx) dst[xx] = src[xx / 2];
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample3d_backward(const Tensor<T>& dy) {
  require(dy.d % 2 == 0 && dy.h % 2 == 0 && dy.w % 2 == 0, "upsample gradient needs even dims");
  Tensor<T> dx(dy.n, dy.c, dy.d / 2, dy.h / 2, dy.w / 2);
  const int planes = dy.n * dy.c;
#pragma omp parallel for schedule(static)
  for (int pc = 0; pc < planes; ++pc) {
    const int i = pc / dy.c, ch = pc % dy.c;
    for (int z = 0; z < dy.d; ++z) {
      for (int yy = 0; yy < dy.h; ++yy) {
        const T* src = &dy.at(i, ch, z, yy, 0);
        T* dst = &dx.at(i, ch, z / 2, yy / 2, 0);
        for (int xx = 0; xx < dy.w; ++xx) dst[xx / 2] += src[xx];
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.n == b.n && a.d == b.d && a.h == b.h && a.w == b.w, "concat needs matching batch and spatial dims");
  Tensor<T> y(a.n, a.c + b.c, a.d, a.h, a.w);
  const std::size_t sa = a.c * a.spatial(), sb = b.c * b.spatial();
  for (int i = 0; i < a.n; ++i) {
    std::copy_n(a.data.data() + i * sa, sa, y.plane(i, 0));
    std::copy_n(b.data.data() + i * sb, sb, y.plane(i, a.c));
  }
  return y;
}

template <typename T>
void split_channels(const Tensor<T>& d, int channels_a, Tensor<T>& da, Tensor<T>& db) {
  require(channels_a > 0 && channels_a < d.c, "split point out of range");
  da = Tensor<T>(d.n, channels_a, d.d, d.h, d.w);
  db = Tensor<T>(d.n, d.c - channels_a, d.d, d.h, d.w);
  const std::size_t sa = da.c * d.spatial(), sb = db.c * d.spatial();
  for (int i = 0; i < d.n; ++i) {
    std::copy_n(d.plane(i, 0), sa, da.data.data() + i * sa);
    std::copy_n(d.plane(i, channels_a), sb, db.data.data() + i * sb);
  }
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  require(a.same_shape(b), "add needs equal shapes");
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(a.size());
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) a.data[k] += b.data[k];
}

template <typename T>
void sigmoid_inplace(Tensor<T>& x) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) x.data[k] = T(1) / (T(1) + std::exp(-x.data[k]));
}

#define AFFGRASP_INSTANTIATE_KERNELS(T)                                                                          \
  template Tensor<T> conv3d_forward(const Tensor<T>&, std::span<const T>, std::span<const T>, int, int);          \
  template ConvGrads<T> conv3d_backward(const Tensor<T>&, std::span<const T>, const Tensor<T>&, int, bool);       \
  template Tensor<T> batchnorm_forward_train(const Tensor<T>&, std::span<const T>, std::span<const T>,            \
                                             BatchNormCache<T>&);                                                 \
  template Tensor<T> batchnorm_forward_infer(const Tensor<T>&, std::span<const T>, std::span<const T>,            \
                                             std::span<const T>, std::span<const T>);                             \
  template BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>&, std::span<const T>, const Tensor<T>&);  \
  template void relu_inplace(Tensor<T>&);                                                                         \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                                           \
  template Tensor<T> maxpool3d_forward(const Tensor<T>&, std::vector<std::uint32_t>&);                            \
  template Tensor<T> maxpool3d_backward(const Tensor<T>&, const std::vector<std::uint32_t>&, int, int, int, int,  \
                                        int);                                                                     \
  template Tensor<T> upsample3d_forward(const Tensor<T>&);                                                        \
  template Tensor<T> upsample3d_backward(const Tensor<T>&);                                                       \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                                         \
  template void split_channels(const Tensor<T>&, int, Tensor<T>&, Tensor<T>&);                                    \
  template void add_inplace(Tensor<T>&, const Tensor<T>&);                                                        \
  template void sigmoid_inplace(Tensor<T>&);

AFFGRASP_INSTANTIATE_KERNELS(float)
AFFGRASP_INSTANTIATE_KERNELS(double)

}  // namespace affgrasp::nets::kernels
