// SPDX-License-Identifier: Apache-2.0
#include "petsynth/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace petsynth {

namespace {

double data_range_of(const Volume& real) {
  const auto [lo, hi] =
      std::minmax_element(real.values().begin(), real.values().end());
  return static_cast<double>(*hi) - static_cast<double>(*lo);
}

void check_same_dims(const Volume& a, const Volume& b) {
  require(a.same_dims(b), ErrorCode::DimMismatch, "metric dims mismatch");
}

// SSIM of one time-step with uniform 7^3 windows over valid positions.
double ssim_3d(const float* x, const float* y, int d, int h, int w,
               double c1, double c2) {
  const int k = kSsimWindow;
  const double n = static_cast<double>(k) * k * k;
  double total = 0.0;
  long windows = 0;
  for (int z0 = 0; z0 + k <= d; ++z0) {
    for (int y0 = 0; y0 + k <= h; ++y0) {
      for (int x0 = 0; x0 + k <= w; ++x0) {
        double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
        for (int dz = 0; dz < k; ++dz) {
          for (int dy = 0; dy < k; ++dy) {
            const std::size_t row =
                (static_cast<std::size_t>(z0 + dz) * h + (y0 + dy)) * w + x0;
            for (int dx = 0; dx < k; ++dx) {
              const double a = x[row + dx];
              const double b = y[row + dx];
              sx += a;
              sy += b;
              sxx += a * a;
              syy += b * b;
              sxy += a * b;
            }
          }
        }
        const double mx = sx / n, my = sy / n;
        const double vx = sxx / n - mx * mx;
        const double vy = syy / n - my * my;
        const double cov = sxy / n - mx * my;
        const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
        const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
        total += num / den;
        ++windows;
      }
    }
  }
  require(windows > 0, ErrorCode::DimMismatch, "volume smaller than SSIM window");
  return total / static_cast<double>(windows);
}

}  // namespace

double psnr(const Volume& real, const Volume& generated) {
  check_same_dims(real, generated);
  const double range = data_range_of(real);
  double mse = 0.0;
  const auto& a = real.values();
  const auto& b = generated.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(range * range / mse);
}

double ssim(const Volume& real, const Volume& generated) {
  check_same_dims(real, generated);
  require(real.d() >= kSsimWindow && real.h() >= kSsimWindow &&
              real.w() >= kSsimWindow,
          ErrorCode::DimMismatch, "dims smaller than the SSIM window");
  const double range = data_range_of(real);
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);
  const std::size_t step = static_cast<std::size_t>(real.d()) * real.h() * real.w();
  double total = 0.0;
  for (int t = 0; t < real.t(); ++t) {
    total += ssim_3d(real.values().data() + t * step,
                     generated.values().data() + t * step, real.d(), real.h(),
                     real.w(), c1, c2);
  }
  return total / static_cast<double>(real.t());
}

double rmse(const Volume& real, const Volume& generated) {
  check_same_dims(real, generated);
  double mse = 0.0;
  const auto& a = real.values();
  const auto& b = generated.values();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    mse += d * d;
  }
  return std::sqrt(mse / static_cast<double>(a.size()));
}

PairMetrics pair_metrics(const Volume& real, const Volume& generated) {
  PairMetrics m;
  m.psnr = psnr(real, generated);
  m.ssim = ssim(real, generated);
  m.rmse = rmse(real, generated);
  m.data_range = data_range_of(real);
  return m;
}

MetricsReport aggregate_metrics(const std::vector<PairMetrics>& pairs) {
  MetricsReport r;
  r.n_pairs = static_cast<int>(pairs.size());
  r.per_pair = pairs;
  if (pairs.empty()) return r;
  for (const auto& p : pairs) {
    r.psnr += p.psnr;
    r.ssim += p.ssim;
    r.rmse += p.rmse;
    r.data_range += p.data_range;
  }
  r.psnr /= r.n_pairs;
  r.ssim /= r.n_pairs;
  r.rmse /= r.n_pairs;
  r.data_range /= r.n_pairs;
  return r;
}

HistogramReport histogram(const std::vector<const Volume*>& vols, int n_bins,
                          double lo, double hi) {
  require(n_bins >= 1, ErrorCode::InvalidArgument, "need at least one bin");
  require(hi > lo, ErrorCode::InvalidArgument, "degenerate histogram range");
  require(!vols.empty(), ErrorCode::InvalidArgument, "no volumes to bin");

  HistogramReport r;
  r.edges.resize(n_bins + 1);
  const double width = (hi - lo) / n_bins;
  for (int i = 0; i <= n_bins; ++i) r.edges[i] = lo + width * i;
  r.counts.assign(n_bins, 0);
  r.min_value = std::numeric_limits<double>::infinity();
  r.max_value = -std::numeric_limits<double>::infinity();
  long below_one = 0;
  for (const Volume* v : vols) {
    for (float f : v->values()) {
      const double x = f;
      int bin = static_cast<int>(std::floor((x - lo) / width));
      bin = std::clamp(bin, 0, n_bins - 1);  // clip out-of-range into edge bins
      ++r.counts[bin];
      ++r.total;
      r.min_value = std::min(r.min_value, x);
      r.max_value = std::max(r.max_value, x);
      if (std::fabs(x) < 1.0) ++below_one;
    }
  }
  r.fraction_abs_below_one = static_cast<double>(below_one) / static_cast<double>(r.total);
  return r;
}

HistogramReport histogram(const Volume& vol, int n_bins, double lo, double hi) {
  return histogram(std::vector<const Volume*>{&vol}, n_bins, lo, hi);
}

void write_histogram_pgm(const HistogramReport& report, const std::string& path,
                         int width, int height) {
  const int n = static_cast<int>(report.counts.size());
  // Log-scaled bars; zero-biased distributions are unreadable on a linear axis.
  std::vector<double> bars(n);
  double peak = 0.0;
  for (int i = 0; i < n; ++i) {
    bars[i] = std::log1p(static_cast<double>(report.counts[i]));
    peak = std::max(peak, bars[i]);
  }
  if (peak <= 0.0) peak = 1.0;

  std::vector<unsigned char> img(static_cast<std::size_t>(width) * height, 255);
  for (int x = 0; x < width; ++x) {
    const int bin = std::min(n - 1, x * n / width);
    const int bar = static_cast<int>(bars[bin] / peak * (height - 2));
    for (int y = height - 1 - bar; y < height; ++y) {
      img[static_cast<std::size_t>(y) * width + x] = 40;
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::IoError, "cannot open for writing: " + path);
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data()),
            static_cast<std::streamsize>(img.size()));
  require(out.good(), ErrorCode::IoError, "write failed: " + path);
}

}  // namespace petsynth
