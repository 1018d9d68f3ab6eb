// Reference kernels: direct loops in the order the formulas are written.

#include <cmath>

#include "tlstm/kernels.hpp"

namespace tlstm::kernels::serial {

void affine_forward(std::size_t rows, std::size_t in, std::size_t out, std::span<const double> x,
                    std::span<const double> w, std::span<const double> b, std::span<double> y) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t m = 0; m < out; ++m) {
      double acc = b[m];
      for (std::size_t i = 0; i < in; ++i) acc += x[r * in + i] * w[i * out + m];
      y[r * out + m] = acc;
    }
}

void affine_backward(std::size_t rows, std::size_t in, std::size_t out, std::span<const double> x,
                     std::span<const double> w, std::span<const double> dy, std::span<double> dx,
                     std::span<double> dw, std::span<double> db) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t m = 0; m < out; ++m) {
      const double g = dy[r * out + m];
      if (!db.empty()) db[m] += g;
      for (std::size_t i = 0; i < in; ++i) {
        if (!dx.empty()) dx[r * in + i] += g * w[i * out + m];
        if (!dw.empty()) dw[i * out + m] += g * x[r * in + i];
      }
    }
}

void cross_layer_forward(const CrossLayerDims& d, std::span<const std::ptrdiff_t> taps,
                         std::span<const double> in, std::span<const double> w,
                         std::span<const double> b, std::span<double> out) {
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t o = 0; o < d.out_locations; ++o)
      for (std::size_t mo = 0; mo < d.out_channels; ++mo) {
        double acc = b[mo];
        for (std::size_t t = 0; t < d.taps; ++t) {
          const auto s = taps[o * d.taps + t];
          if (s < 0) continue;
          const double* src = &in[(n * d.in_locations + static_cast<std::size_t>(s)) * d.in_channels];
          for (std::size_t mi = 0; mi < d.in_channels; ++mi)
            acc += src[mi] * w[(t * d.in_channels + mi) * d.out_channels + mo];
        }
        out[(n * d.out_locations + o) * d.out_channels + mo] = acc;
      }
}

void cross_layer_backward(const CrossLayerDims& d, std::span<const std::ptrdiff_t> taps,
                          std::span<const double> in, std::span<const double> w,
                          std::span<const double> dout, std::span<double> din,
                          std::span<double> dw, std::span<double> db) {
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t o = 0; o < d.out_locations; ++o)
      for (std::size_t mo = 0; mo < d.out_channels; ++mo) {
        const double g = dout[(n * d.out_locations + o) * d.out_channels + mo];
        if (!db.empty()) db[mo] += g;
        for (std::size_t t = 0; t < d.taps; ++t) {
          const auto s = taps[o * d.taps + t];
          if (s < 0) continue;
          const std::size_t base = (n * d.in_locations + static_cast<std::size_t>(s)) * d.in_channels;
          for (std::size_t mi = 0; mi < d.in_channels; ++mi) {
            const std::size_t wi = (t * d.in_channels + mi) * d.out_channels + mo;
            if (!din.empty()) din[base + mi] += g * w[wi];
            if (!dw.empty()) dw[wi] += g * in[base + mi];
          }
        }
      }
}

void memory_cell_forward(const MemoryCellDims& d, std::span<const std::size_t> taps,
                         std::span<const double> c, std::span<const double> bank,
                         std::span<double> out) {
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t o = 0; o < d.locations; ++o)
      for (std::size_t m = 0; m < d.channels; ++m) {
        double acc = 0.0;
        for (std::size_t t = 0; t < d.taps; ++t) {
          const std::size_t s = taps[o * d.taps + t];
          acc += bank[(n * d.locations + o) * d.taps + t] * c[(n * d.locations + s) * d.channels + m];
        }
        out[(n * d.locations + o) * d.channels + m] = acc;
      }
}

void memory_cell_backward(const MemoryCellDims& d, std::span<const std::size_t> taps,
                          std::span<const double> c, std::span<const double> bank,
                          std::span<const double> dout, std::span<double> dc,
                          std::span<double> dbank) {
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t o = 0; o < d.locations; ++o)
      for (std::size_t m = 0; m < d.channels; ++m) {
        const double g = dout[(n * d.locations + o) * d.channels + m];
        for (std::size_t t = 0; t < d.taps; ++t) {
          const std::size_t s = taps[o * d.taps + t];
          const std::size_t q = (n * d.locations + o) * d.taps + t;
          if (!dc.empty()) dc[(n * d.locations + s) * d.channels + m] += g * bank[q];
          if (!dbank.empty()) dbank[q] += g * c[(n * d.locations + s) * d.channels + m];
        }
      }
}

void group_norm_forward(const GroupNormDims& d, std::span<const double> z,
                        std::span<const double> gain, std::span<const double> bias,
                        std::span<double> out, std::span<double> normalized,
                        std::span<double> inv_std) {
  const std::size_t per_sample = d.groups * d.group_size;
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t g = 0; g < d.groups; ++g) {
      const std::size_t base = n * per_sample + g * d.group_size;
      double mean = 0.0;
      for (std::size_t i = 0; i < d.group_size; ++i) mean += z[base + i];
      mean /= static_cast<double>(d.group_size);
      double var = 0.0;
      for (std::size_t i = 0; i < d.group_size; ++i) var += (z[base + i] - mean) * (z[base + i] - mean);
      var /= static_cast<double>(d.group_size);
      const double is = 1.0 / std::sqrt(var + kNormEpsilon);
      inv_std[n * d.groups + g] = is;
      for (std::size_t i = 0; i < d.group_size; ++i) {
        const double zn = (z[base + i] - mean) * is;
        normalized[base + i] = zn;
        const std::size_t p = g * d.group_size + i;
        out[base + i] = zn * gain[p] + bias[p];
      }
    }
}

void group_norm_backward(const GroupNormDims& d, std::span<const double> normalized,
                         std::span<const double> inv_std, std::span<const double> gain,
                         std::span<const double> dout, std::span<double> dz,
                         std::span<double> dgain, std::span<double> dbias) {
  const std::size_t per_sample = d.groups * d.group_size;
  const double count = static_cast<double>(d.group_size);
  for (std::size_t n = 0; n < d.batch; ++n)
    for (std::size_t g = 0; g < d.groups; ++g) {
      const std::size_t base = n * per_sample + g * d.group_size;
      double mean_dn = 0.0, mean_dn_n = 0.0;
      for (std::size_t i = 0; i < d.group_size; ++i) {
        const std::size_t p = g * d.group_size + i;
        const double dn = dout[base + i] * gain[p];
        mean_dn += dn;
        mean_dn_n += dn * normalized[base + i];
        if (!dgain.empty()) dgain[p] += dout[base + i] * normalized[base + i];
        if (!dbias.empty()) dbias[p] += dout[base + i];
      }
      mean_dn /= count;
      mean_dn_n /= count;
      if (dz.empty()) continue;
      const double is = inv_std[n * d.groups + g];
      for (std::size_t i = 0; i < d.group_size; ++i) {
        const double dn = dout[base + i] * gain[g * d.group_size + i];
        dz[base + i] += is * (dn - mean_dn - normalized[base + i] * mean_dn_n);
      }
    }
}

}  // namespace tlstm::kernels::serial
