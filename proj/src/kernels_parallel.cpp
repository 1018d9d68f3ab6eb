// OpenMP kernels. Work is split over independent outputs only (rows, batch
// samples, kernel taps or parameter entries) so that no two threads write the
// same element, and each element is reduced in a fixed order.

#include <algorithm>
#include <cmath>
#include <vector>

#include "tlstm/kernels.hpp"

namespace tlstm::kernels::parallel {

namespace {

using ssize = std::ptrdiff_t;

// y[0..n) += a * x[0..n)
inline void axpy(std::size_t n, double a, const double* __restrict x, double* __restrict y) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// y += a0*x0 + a1*x1 + a2*x2 + a3*x3, evaluated left to right per element
inline void axpy4(std::size_t n, const double* a, const double* __restrict x0,
                  const double* __restrict x1, const double* __restrict x2,
                  const double* __restrict x3, double* __restrict y) {
  const double a0 = a[0], a1 = a[1], a2 = a[2], a3 = a[3];
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + a0 * x0[i] + a1 * x1[i] + a2 * x2[i] + a3 * x3[i];
}

}  // namespace

void affine_forward(std::size_t rows, std::size_t in, std::size_t out, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b, std::span<double> y) {
#pragma omp parallel for schedule(static)
  for (ssize r = 0; r < static_cast<ssize>(rows); ++r) {
    double* yr = &y[static_cast<std::size_t>(r) * out];
    std::copy(b.begin(), b.end(), yr);
    const double* xr = &x[static_cast<std::size_t>(r) * in];
    for (std::size_t i = 0; i < in; ++i)
      if (xr[i] != 0.0) axpy(out, xr[i], &w[i * out], yr);
  }
}

void affine_backward(std::size_t rows, std::size_t in, std::size_t out, std::span<const double> x,
                     std::span<const double> w, std::span<const double> dy, std::span<double> dx,
                     std::span<double> dw, std::span<double> db) {
  if (!dx.empty()) {
#pragma omp parallel for schedule(static)
    for (ssize r = 0; r < static_cast<ssize>(rows); ++r) {
      const double* g = &dy[static_cast<std::size_t>(r) * out];
      double* dxr = &dx[static_cast<std::size_t>(r) * in];
      for (std::size_t i = 0; i < in; ++i) {
        const double* wi = &w[i * out];
        double acc = 0.0;
        for (std::size_t m = 0; m < out; ++m) acc += g[m] * wi[m];
        dxr[i] += acc;
      }
    }
  }
  if (!dw.empty()) {
#pragma omp parallel for schedule(static)
    for (ssize i = 0; i < static_cast<ssize>(in); ++i) {
      double* dwi = &dw[static_cast<std::size_t>(i) * out];
      for (std::size_t r = 0; r < rows; ++r) {
        const double a = x[r * in + static_cast<std::size_t>(i)];
        if (a != 0.0) axpy(out, a, &dy[r * out], dwi);
      }
    }
  }
  if (!db.empty())
    for (std::size_t r = 0; r < rows; ++r) axpy(out, 1.0, &dy[r * out], db.data());
}

void cross_layer_forward(const CrossLayerDims& d, std::span<const std::ptrdiff_t> taps,
                         std::span<const double> in, std::span<const double> w,
                         std::span<const double> b, std::span<double> out) {
  const std::size_t mi_n = d.in_channels, mo_n = d.out_channels;
#pragma omp parallel for schedule(static)
  for (ssize job = 0; job < static_cast<ssize>(d.batch * d.out_locations); ++job) {
    const std::size_t n = static_cast<std::size_t>(job) / d.out_locations;
    const std::size_t o = static_cast<std::size_t>(job) % d.out_locations;
    double* y = &out[(n * d.out_locations + o) * mo_n];
    std::copy(b.begin(), b.end(), y);
    for (std::size_t t = 0; t < d.taps; ++t) {
      const auto s = taps[o * d.taps + t];
      if (s < 0) continue;
      const double* x = &in[(n * d.in_locations + static_cast<std::size_t>(s)) * mi_n];
      const double* wt = &w[t * mi_n * mo_n];
      std::size_t mi = 0;
      for (; mi + 4 <= mi_n; mi += 4)
        axpy4(mo_n, x + mi, wt + mi * mo_n, wt + (mi + 1) * mo_n, wt + (mi + 2) * mo_n,
              wt + (mi + 3) * mo_n, y);
      for (; mi < mi_n; ++mi) axpy(mo_n, x[mi], wt + mi * mo_n, y);
    }
  }
}

void cross_layer_backward(const CrossLayerDims& d, std::span<const std::ptrdiff_t> taps,
                          std::span<const double> in, std::span<const double> w,
                          std::span<const double> dout, std::span<double> din,
                          std::span<double> dw, std::span<double> db) {
  const std::size_t mi_n = d.in_channels, mo_n = d.out_channels;
  if (!din.empty()) {
    // din[n, s, :] += W[t] * dout[n, o, :]; the transposed kernel turns the
    // matrix-vector product into contiguous updates along the input channels.
    std::vector<double> wt(w.size());
    for (std::size_t t = 0; t < d.taps; ++t)
      for (std::size_t mi = 0; mi < mi_n; ++mi)
        for (std::size_t mo = 0; mo < mo_n; ++mo)
          wt[(t * mo_n + mo) * mi_n + mi] = w[(t * mi_n + mi) * mo_n + mo];
#pragma omp parallel for schedule(static)
    for (ssize n = 0; n < static_cast<ssize>(d.batch); ++n) {
      const std::size_t nn = static_cast<std::size_t>(n);
      for (std::size_t o = 0; o < d.out_locations; ++o) {
        const double* g = &dout[(nn * d.out_locations + o) * mo_n];
        for (std::size_t t = 0; t < d.taps; ++t) {
          const auto s = taps[o * d.taps + t];
          if (s < 0) continue;
          double* dx = &din[(nn * d.in_locations + static_cast<std::size_t>(s)) * mi_n];
          const double* wtt = &wt[t * mo_n * mi_n];
          std::size_t mo = 0;
          for (; mo + 4 <= mo_n; mo += 4)
            axpy4(mi_n, g + mo, wtt + mo * mi_n, wtt + (mo + 1) * mi_n, wtt + (mo + 2) * mi_n,
                  wtt + (mo + 3) * mi_n, dx);
          for (; mo < mo_n; ++mo) axpy(mi_n, g[mo], wtt + mo * mi_n, dx);
        }
      }
    }
  }
  if (!dw.empty()) {
    // Each (tap, input channel) row of dW is owned by one thread and reduced
    // over (sample, location) in order.
#pragma omp parallel for schedule(static)
    for (ssize row = 0; row < static_cast<ssize>(d.taps * mi_n); ++row) {
      const std::size_t t = static_cast<std::size_t>(row) / mi_n;
      const std::size_t mi = static_cast<std::size_t>(row) % mi_n;
      double* dwr = &dw[static_cast<std::size_t>(row) * mo_n];
      double a[4];
      const double* g[4];
      int pending = 0;
      for (std::size_t n = 0; n < d.batch; ++n)
        for (std::size_t o = 0; o < d.out_locations; ++o) {
          const auto s = taps[o * d.taps + t];
          if (s < 0) continue;
          a[pending] = in[(n * d.in_locations + static_cast<std::size_t>(s)) * mi_n + mi];
          g[pending] = &dout[(n * d.out_locations + o) * mo_n];
          if (++pending == 4) {
            axpy4(mo_n, a, g[0], g[1], g[2], g[3], dwr);
            pending = 0;
          }
        }
      for (int k = 0; k < pending; ++k) axpy(mo_n, a[k], g[k], dwr);
    }
  }
  if (!db.empty())
    for (std::size_t r = 0; r < d.batch * d.out_locations; ++r) axpy(mo_n, 1.0, &dout[r * mo_n], db.data());
}

void memory_cell_forward(const MemoryCellDims& d, std::span<const std::size_t> taps,
                         std::span<const double> c, std::span<const double> bank,
                         std::span<double> out) {
#pragma omp parallel for schedule(static)
  for (ssize job = 0; job < static_cast<ssize>(d.batch * d.locations); ++job) {
    const std::size_t n = static_cast<std::size_t>(job) / d.locations;
    const std::size_t o = static_cast<std::size_t>(job) % d.locations;
    double* y = &out[(n * d.locations + o) * d.channels];
    std::fill(y, y + d.channels, 0.0);
    const double* q = &bank[(n * d.locations + o) * d.taps];
    for (std::size_t t = 0; t < d.taps; ++t)
      axpy(d.channels, q[t], &c[(n * d.locations + taps[o * d.taps + t]) * d.channels], y);
  }
}

void memory_cell_backward(const MemoryCellDims& d, std::span<const std::size_t> taps,
                          std::span<const double> c, std::span<const double> bank,
                          std::span<const double> dout, std::span<double> dc,
                          std::span<double> dbank) {
#pragma omp parallel for schedule(static)
  for (ssize n = 0; n < static_cast<ssize>(d.batch); ++n) {
    const std::size_t nn = static_cast<std::size_t>(n);
    for (std::size_t o = 0; o < d.locations; ++o) {
      const double* g = &dout[(nn * d.locations + o) * d.channels];
      for (std::size_t t = 0; t < d.taps; ++t) {
        const std::size_t s = taps[o * d.taps + t];
        const std::size_t q = (nn * d.locations + o) * d.taps + t;
        if (!dc.empty()) axpy(d.channels, bank[q], g, &dc[(nn * d.locations + s) * d.channels]);
        if (!dbank.empty()) {
          const double* cs = &c[(nn * d.locations + s) * d.channels];
          double acc = 0.0;
          for (std::size_t m = 0; m < d.channels; ++m) acc += g[m] * cs[m];
          dbank[q] += acc;
        }
      }
    }
  }
}

void group_norm_forward(const GroupNormDims& d, std::span<const double> z,
                        std::span<const double> gain, std::span<const double> bias,
                        std::span<double> out, std::span<double> normalized,
                        std::span<double> inv_std) {
  const std::size_t per_sample = d.groups * d.group_size;
#pragma omp parallel for schedule(static)
  for (ssize job = 0; job < static_cast<ssize>(d.batch * d.groups); ++job) {
    const std::size_t n = static_cast<std::size_t>(job) / d.groups;
    const std::size_t g = static_cast<std::size_t>(job) % d.groups;
    const std::size_t base = n * per_sample + g * d.group_size;
    double mean = 0.0;
    for (std::size_t i = 0; i < d.group_size; ++i) mean += z[base + i];
    mean /= static_cast<double>(d.group_size);
    double var = 0.0;
    for (std::size_t i = 0; i < d.group_size; ++i) var += (z[base + i] - mean) * (z[base + i] - mean);
    var /= static_cast<double>(d.group_size);
    const double is = 1.0 / std::sqrt(var + kNormEpsilon);
    inv_std[static_cast<std::size_t>(job)] = is;
    for (std::size_t i = 0; i < d.group_size; ++i) {
      const double zn = (z[base + i] - mean) * is;
      normalized[base + i] = zn;
      out[base + i] = zn * gain[g * d.group_size + i] + bias[g * d.group_size + i];
    }
  }
}

void group_norm_backward(const GroupNormDims& d, std::span<const double> normalized,
                         std::span<const double> inv_std, std::span<const double> gain,
                         std::span<const double> dout, std::span<double> dz,
                         std::span<double> dgain, std::span<double> dbias) {
  const std::size_t per_sample = d.groups * d.group_size;
  const double count = static_cast<double>(d.group_size);
  if (!dz.empty()) {
#pragma omp parallel for schedule(static)
    for (ssize job = 0; job < static_cast<ssize>(d.batch * d.groups); ++job) {
      const std::size_t n = static_cast<std::size_t>(job) / d.groups;
      const std::size_t g = static_cast<std::size_t>(job) % d.groups;
      const std::size_t base = n * per_sample + g * d.group_size;
      const double* gp = &gain[g * d.group_size];
      double mean_dn = 0.0, mean_dn_n = 0.0;
      for (std::size_t i = 0; i < d.group_size; ++i) {
        const double dn = dout[base + i] * gp[i];
        mean_dn += dn;
        mean_dn_n += dn * normalized[base + i];
      }
      mean_dn /= count;
      mean_dn_n /= count;
      const double is = inv_std[static_cast<std::size_t>(job)];
      for (std::size_t i = 0; i < d.group_size; ++i)
        dz[base + i] += is * (dout[base + i] * gp[i] - mean_dn - normalized[base + i] * mean_dn_n);
    }
  }
  if (!dgain.empty() || !dbias.empty()) {
#pragma omp parallel for schedule(static)
    for (ssize p = 0; p < static_cast<ssize>(per_sample); ++p) {
      const std::size_t pp = static_cast<std::size_t>(p);
      for (std::size_t n = 0; n < d.batch; ++n) {
        const double g = dout[n * per_sample + pp];
        if (!dgain.empty()) dgain[pp] += g * normalized[n * per_sample + pp];
        if (!dbias.empty()) dbias[pp] += g;
      }
    }
  }
}

}  // namespace tlstm::kernels::parallel
