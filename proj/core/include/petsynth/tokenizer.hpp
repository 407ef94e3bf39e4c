// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "petsynth/volume.hpp"

namespace petsynth {

// Vocabulary layout: ids 1..10000 carry quantized intensity values, the five
// specials sit above the value band. PAD exists for completeness and is never
// produced by the tokenizer.
inline constexpr int kSummaryLength = 512;
inline constexpr int kSequenceLength = 1027;  // BEGIN + 512 + SEP + 512 + END
inline constexpr int kValueIdMin = 1;
inline constexpr int kValueIdMax = 10000;
inline constexpr int kPadId = 0;
inline constexpr int kBeginId = 10001;
inline constexpr int kSepId = 10002;
inline constexpr int kEndId = 10003;
inline constexpr int kMaskId = 10004;
inline constexpr int kVocabSize = 10005;

inline constexpr int kMriMaskCount = 26;   // round(0.05 * 512)
inline constexpr int kPetMaskCount = 128;  // round(0.25 * 512)

inline constexpr int kGridSide = 8;  // 8x8x8 sub-region grid

inline bool is_special_id(int id) { return id < kValueIdMin || id > kValueIdMax; }

enum class Segment : std::uint8_t { Begin = 0, Mri = 1, Sep = 2, Pet = 3, End = 4 };
inline constexpr int kSegmentCount = 5;

// 512 signed abs-max values, one per sub-region, in row-major grid order.
struct SummarySequence {
  std::array<double, kSummaryLength> values{};
  Modality source_modality = Modality::MRI;
};

// Same pooling, but also records which flat voxel won each sub-region.
// Training routes gradients back through these indices.
struct SummaryDetail {
  SummarySequence summary;
  std::array<std::size_t, kSummaryLength> argmax{};
};

struct TokenSequence {
  std::array<int, kSequenceLength> ids{};
  std::array<Segment, kSequenceLength> segments{};
  // positions are implicitly 0..1026

  bool valid_layout() const;
};

struct MaskPlan {
  std::vector<int> masked_positions;  // sorted, ascending
  std::vector<int> original_ids;      // aligned with masked_positions
};

// Abs-max pooling over an 8x8x8 grid of near-equal contiguous sub-regions
// (boundaries at floor(i*D/8)); 4D inputs pool across all time-steps. The
// winning element keeps its sign.
SummarySequence summarize(const Volume& vol);
SummaryDetail summarize_detailed(const Volume& vol);

// Double-buffer variant used by the model side, which works in f64. dims is
// (T, D, H, W) with T = 1 for 3D data.
SummaryDetail summarize_raw(std::span<const double> values,
                            const std::array<int, 4>& dims, Modality modality);

// id = round_half_away_from_zero(v * 1e3) when that lands in [1, 1e4];
// non-positive results fold via |q| mod 500 (0 remapped to 1), overflow folds
// via (q mod 500) + 500. Every output lands in the value band.
int quantize_value(double v);
std::array<int, kSummaryLength> quantize(const SummarySequence& seq);

// id / 1e3. An inverse only for unfolded ids; rejects specials.
double dequantize_value(int id);
std::array<double, kSummaryLength> dequantize(const std::array<int, kSummaryLength>& ids);

TokenSequence assemble(std::span<const int> mri_ids, std::span<const int> pet_ids);

// Uniformly masks exactly 26 MRI and 128 PET value slots (never specials),
// substituting MASK and recording the originals. Deterministic in rng_seed.
std::pair<TokenSequence, MaskPlan> plan_mask(const TokenSequence& seq,
                                             std::uint64_t rng_seed);

// Newline-delimited integer ids, for the dump-tokens debug path.
std::string format_token_ids(const TokenSequence& seq);

}  // namespace petsynth
