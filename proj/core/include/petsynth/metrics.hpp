// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>
#include <string>
#include <vector>

#include "petsynth/volume.hpp"

namespace petsynth {

// Quality metrics for one (real, generated) pair, computed on restored PET
// values. psnr is +inf when the volumes agree exactly.
struct PairMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
  double rmse = 0.0;
  double data_range = 0.0;  // max - min of the real volume
};

struct MetricsReport {
  double psnr = 0.0;  // per-volume metrics averaged over pairs
  double ssim = 0.0;
  double rmse = 0.0;
  int n_pairs = 0;
  double data_range = 0.0;
  std::vector<PairMetrics> per_pair;
};

struct HistogramReport {
  std::vector<double> edges;   // n_bins + 1, strictly increasing
  std::vector<long> counts;    // per bin; clipped values land in edge bins
  double min_value = 0.0;
  double max_value = 0.0;
  double fraction_abs_below_one = 0.0;
  long total = 0;
};

// 10*log10(range^2 / MSE), range taken from the real volume.
double psnr(const Volume& real, const Volume& generated);

// Mean local SSIM over all fully-contained 7^3 windows, uniform weighting,
// C1=(0.01*range)^2, C2=(0.03*range)^2; 4D volumes average per time-step.
double ssim(const Volume& real, const Volume& generated);
inline constexpr int kSsimWindow = 7;

double rmse(const Volume& real, const Volume& generated);

PairMetrics pair_metrics(const Volume& real, const Volume& generated);
MetricsReport aggregate_metrics(const std::vector<PairMetrics>& pairs);

HistogramReport histogram(const Volume& vol, int n_bins, double lo, double hi);
HistogramReport histogram(const std::vector<const Volume*>& vols, int n_bins,
                          double lo, double hi);

// Simple bar-chart rendering of a histogram as a binary PGM image.
void write_histogram_pgm(const HistogramReport& report, const std::string& path,
                         int width = 512, int height = 256);

}  // namespace petsynth
