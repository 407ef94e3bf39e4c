// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "petsynth/error.hpp"

namespace petsynth {

enum class Modality : std::uint32_t { MRI = 0, PET = 1 };

// Dense intensity grid, the image currency of the whole pipeline.
// MRI volumes are 3D (depth, height, width); PET volumes are 4D with a
// leading time axis (time, depth, height, width). Values are 32-bit floats
// stored row-major, and every stored value is finite.
class Volume {
 public:
  Volume() = default;

  static Volume mri(int d, int h, int w);
  static Volume pet(int t, int d, int h, int w);
  static Volume from_buffer(Modality m, int ndim, const std::array<int, 4>& dims,
                            std::vector<float> values);

  Modality modality() const { return modality_; }
  int ndim() const { return ndim_; }
  int t() const { return dims_[0]; }
  int d() const { return dims_[1]; }
  int h() const { return dims_[2]; }
  int w() const { return dims_[3]; }
  const std::array<int, 4>& dims() const { return dims_; }

  std::size_t voxel_count() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  float& at(int t, int z, int y, int x) {
    return values_[((static_cast<std::size_t>(t) * dims_[1] + z) * dims_[2] + y) * dims_[3] + x];
  }
  float at(int t, int z, int y, int x) const {
    return values_[((static_cast<std::size_t>(t) * dims_[1] + z) * dims_[2] + y) * dims_[3] + x];
  }

  std::vector<float>& values() { return values_; }
  const std::vector<float>& values() const { return values_; }

  bool same_dims(const Volume& other) const {
    return ndim_ == other.ndim_ && dims_ == other.dims_;
  }

  // Throws on NaN/Inf content; construction paths call this.
  void check_finite() const;

 private:
  Modality modality_ = Modality::MRI;
  int ndim_ = 3;
  std::array<int, 4> dims_{1, 0, 0, 0};  // [T, D, H, W]; T fixed to 1 for MRI
  std::vector<float> values_;
};

// Per-volume first and second moments of the paired MRI. PET normalization
// and restoration both key off these, never off PET's own statistics.
struct NormalizationStats {
  double mean = 0.0;
  double std = 1.0;
};

inline constexpr double kStdEpsilon = 1e-8;

// Population mean/std over all voxels; std is clamped below by kStdEpsilon
// so constant volumes stay well-defined.
NormalizationStats compute_stats(const Volume& vol);

// (v - mean) / std elementwise. MRI only; returns the pre-normalization stats.
std::pair<Volume, NormalizationStats> normalize_mri(const Volume& vol);

// (v - mean/10) / (std/10) elementwise, with the paired MRI's stats.
Volume normalize_pet(const Volume& pet, const NormalizationStats& mri_stats);

// v * (std/10) + mean/10 elementwise; inverse of normalize_pet.
Volume restore_pet(const Volume& norm_pet, const NormalizationStats& mri_stats);

// Synthetic paired-sample configuration. mri_range / pet_range are the
// intensity targets of the generated fields.
struct DataConfig {
  std::array<int, 3> mri_dims{64, 64, 64};
  std::array<int, 4> pet_dims{2, 24, 19, 19};
  std::uint64_t seed = 7;
  double mri_min = 0.0;
  double mri_max = 255.0;
  double pet_min = -120.0;
  double pet_max = 1000.0;

  void validate() const;
};

struct PairSample {
  Volume mri;
  Volume pet;
  NormalizationStats mri_stats;
  std::string id;
};

// Deterministic paired sample: a blob-structured MRI in [mri_min, mri_max]
// and a PET whose uptake is a smooth monotone function of the co-located MRI
// signal plus Laplace noise, giving the wide zero-moded intensity profile the
// rest of the pipeline is built around.
PairSample synth_pair(std::uint64_t seed, const DataConfig& cfg);

// Raw little-endian container: 8-byte magic, u32 modality, u32 ndim,
// 4 x u32 dims (T slot is 1 for MRI), then float32 voxels row-major.
void save_volume(const std::string& path, const Volume& vol);
Volume load_volume(const std::string& path);

}  // namespace petsynth
