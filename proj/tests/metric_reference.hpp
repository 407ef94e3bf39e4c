// SPDX-License-Identifier: Apache-2.0
#pragma once

// Brute-force definitional metrics, written independently of the library
// implementations. Test-only oracle: every window is walked explicitly and
// the textbook formulas are evaluated term by term.

#include <algorithm>
#include <cmath>
#include <vector>

#include "petsynth/metrics.hpp"
#include "petsynth/volume.hpp"

namespace petsynth::testref {

inline double psnr_reference(const Volume& real, const Volume& gen) {
  const auto [lo, hi] =
      std::minmax_element(real.values().begin(), real.values().end());
  const double range = static_cast<double>(*hi) - *lo;
  double mse = 0.0;
  for (std::size_t i = 0; i < real.values().size(); ++i) {
    const double d = static_cast<double>(real.values()[i]) - gen.values()[i];
    mse += d * d;
  }
  mse /= static_cast<double>(real.values().size());
  return 10.0 * std::log10(range * range / mse);
}

inline double rmse_reference(const Volume& real, const Volume& gen) {
  double mse = 0.0;
  for (std::size_t i = 0; i < real.values().size(); ++i) {
    const double d = static_cast<double>(real.values()[i]) - gen.values()[i];
    mse += d * d;
  }
  return std::sqrt(mse / static_cast<double>(real.values().size()));
}

inline double ssim_reference(const Volume& real, const Volume& gen) {
  const auto [lo, hi] =
      std::minmax_element(real.values().begin(), real.values().end());
  const double range = static_cast<double>(*hi) - *lo;
  const double c1 = std::pow(0.01 * range, 2.0);
  const double c2 = std::pow(0.03 * range, 2.0);
  const int k = kSsimWindow;
  double sum = 0.0;
  long t_count = 0;
  for (int t = 0; t < real.t(); ++t) {
    double tsum = 0.0;
    long windows = 0;
    for (int z = 0; z + k <= real.d(); ++z) {
      for (int y = 0; y + k <= real.h(); ++y) {
        for (int x = 0; x + k <= real.w(); ++x) {
          std::vector<double> a, b;
          for (int dz = 0; dz < k; ++dz) {
            for (int dy = 0; dy < k; ++dy) {
              for (int dx = 0; dx < k; ++dx) {
                a.push_back(real.at(t, z + dz, y + dy, x + dx));
                b.push_back(gen.at(t, z + dz, y + dy, x + dx));
              }
            }
          }
          const double n = static_cast<double>(a.size());
          double ma = 0, mb = 0;
          for (double v : a) ma += v;
          for (double v : b) mb += v;
          ma /= n;
          mb /= n;
          double va = 0, vb = 0, cov = 0;
          for (std::size_t i = 0; i < a.size(); ++i) {
            va += (a[i] - ma) * (a[i] - ma);
            vb += (b[i] - mb) * (b[i] - mb);
            cov += (a[i] - ma) * (b[i] - mb);
          }
          va /= n;
          vb /= n;
          cov /= n;
          tsum += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                  ((ma * ma + mb * mb + c1) * (va + vb + c2));
          ++windows;
        }
      }
    }
    sum += tsum / static_cast<double>(windows);
    ++t_count;
  }
  return sum / static_cast<double>(t_count);
}

}  // namespace petsynth::testref
