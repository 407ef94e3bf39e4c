// SPDX-License-Identifier: Apache-2.0
#include "petsynth/tokenizer.hpp"

#include <algorithm>
#include <cmath>

#include "petsynth/rng.hpp"

namespace petsynth {

bool TokenSequence::valid_layout() const {
  if (ids[0] != kBeginId || ids[513] != kSepId || ids[1026] != kEndId) return false;
  if (segments[0] != Segment::Begin || segments[513] != Segment::Sep ||
      segments[1026] != Segment::End) {
    return false;
  }
  for (int i = 1; i <= 512; ++i) {
    if (segments[i] != Segment::Mri || is_special_id(ids[i])) return false;
  }
  for (int i = 514; i <= 1025; ++i) {
    if (segments[i] != Segment::Pet || is_special_id(ids[i])) return false;
  }
  return true;
}

SummaryDetail summarize_raw(std::span<const double> values,
                            const std::array<int, 4>& dims, Modality modality) {
  const int t_len = dims[0], d = dims[1], h = dims[2], w = dims[3];
  require(d >= kGridSide && h >= kGridSide && w >= kGridSide,
          ErrorCode::DimMismatch, "summarize requires spatial dims >= 8");
  require(values.size() ==
              static_cast<std::size_t>(t_len) * d * h * w,
          ErrorCode::DimMismatch, "summarize buffer/dims mismatch");

  auto bound = [](int g, int n) { return static_cast<int>(static_cast<long long>(g) * n / kGridSide); };

  SummaryDetail out;
  out.summary.source_modality = modality;
  int region = 0;
  for (int gz = 0; gz < kGridSide; ++gz) {
    const int z0 = bound(gz, d), z1 = bound(gz + 1, d);
    for (int gy = 0; gy < kGridSide; ++gy) {
      const int y0 = bound(gy, h), y1 = bound(gy + 1, h);
      for (int gx = 0; gx < kGridSide; ++gx, ++region) {
        const int x0 = bound(gx, w), x1 = bound(gx + 1, w);
        double best = 0.0;
        double best_abs = -1.0;
        std::size_t best_idx = 0;
        for (int t = 0; t < t_len; ++t) {
          for (int z = z0; z < z1; ++z) {
            for (int y = y0; y < y1; ++y) {
              const std::size_t row =
                  ((static_cast<std::size_t>(t) * d + z) * h + y) * w;
              for (int x = x0; x < x1; ++x) {
                const double v = values[row + x];
                const double a = std::fabs(v);
                if (a > best_abs) {  // first occurrence wins ties
                  best_abs = a;
                  best = v;
                  best_idx = row + x;
                }
              }
            }
          }
        }
        out.summary.values[region] = best;
        out.argmax[region] = best_idx;
      }
    }
  }
  return out;
}

SummaryDetail summarize_detailed(const Volume& vol) {
  std::vector<double> buf(vol.values().begin(), vol.values().end());
  return summarize_raw(buf, vol.dims(), vol.modality());
}

SummarySequence summarize(const Volume& vol) {
  return summarize_detailed(vol).summary;
}

int quantize_value(double v) {
  require(!std::isnan(v), ErrorCode::InvalidArgument, "quantize on NaN");
  require(std::isfinite(v), ErrorCode::InvalidArgument, "quantize on Inf");
  const double q = std::round(v * 1000.0);  // half away from zero
  if (q >= 1.0 && q <= 10000.0) {
    return static_cast<int>(q);
  }
  if (q <= 0.0) {
    const double r = std::fmod(std::fabs(q), 500.0);
    const int id = static_cast<int>(r);
    return id == 0 ? 1 : id;  // keep out of PAD, land in [1, 500)
  }
  const double r = std::fmod(q, 500.0);
  return static_cast<int>(r) + 500;  // [500, 1000)
}

std::array<int, kSummaryLength> quantize(const SummarySequence& seq) {
  std::array<int, kSummaryLength> ids;
  for (int i = 0; i < kSummaryLength; ++i) {
    ids[i] = quantize_value(seq.values[i]);
  }
  return ids;
}

double dequantize_value(int id) {
  require(id >= kValueIdMin && id <= kValueIdMax, ErrorCode::BadToken,
          "dequantize outside the value band");
  return static_cast<double>(id) / 1000.0;
}

std::array<double, kSummaryLength> dequantize(const std::array<int, kSummaryLength>& ids) {
  std::array<double, kSummaryLength> out;
  for (int i = 0; i < kSummaryLength; ++i) out[i] = dequantize_value(ids[i]);
  return out;
}

TokenSequence assemble(std::span<const int> mri_ids, std::span<const int> pet_ids) {
  require(mri_ids.size() == kSummaryLength && pet_ids.size() == kSummaryLength,
          ErrorCode::InvalidArgument, "assemble requires two 512-length id lists");
  TokenSequence seq;
  seq.ids[0] = kBeginId;
  seq.segments[0] = Segment::Begin;
  for (int i = 0; i < kSummaryLength; ++i) {
    require(!is_special_id(mri_ids[i]), ErrorCode::BadToken,
            "MRI id outside the value band");
    seq.ids[1 + i] = mri_ids[i];
    seq.segments[1 + i] = Segment::Mri;
  }
  seq.ids[513] = kSepId;
  seq.segments[513] = Segment::Sep;
  for (int i = 0; i < kSummaryLength; ++i) {
    require(!is_special_id(pet_ids[i]), ErrorCode::BadToken,
            "PET id outside the value band");
    seq.ids[514 + i] = pet_ids[i];
    seq.segments[514 + i] = Segment::Pet;
  }
  seq.ids[1026] = kEndId;
  seq.segments[1026] = Segment::End;
  return seq;
}

namespace {

// Partial Fisher-Yates over the slot range; first `count` entries of the
// shuffle are the masked positions.
void sample_positions(Rng& rng, int first, int count, int total,
                      std::vector<int>& out) {
  std::vector<int> slots(total);
  for (int i = 0; i < total; ++i) slots[i] = first + i;
  for (int i = 0; i < count; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(total - i)));
    std::swap(slots[i], slots[j]);
    out.push_back(slots[i]);
  }
}

}  // namespace

std::pair<TokenSequence, MaskPlan> plan_mask(const TokenSequence& seq,
                                             std::uint64_t rng_seed) {
  require(seq.valid_layout(), ErrorCode::InvalidArgument,
          "plan_mask requires an assembled sequence");
  Rng rng(rng_seed);
  MaskPlan plan;
  plan.masked_positions.reserve(kMriMaskCount + kPetMaskCount);
  sample_positions(rng, 1, kMriMaskCount, kSummaryLength, plan.masked_positions);
  sample_positions(rng, 514, kPetMaskCount, kSummaryLength, plan.masked_positions);
  std::sort(plan.masked_positions.begin(), plan.masked_positions.end());

  TokenSequence masked = seq;
  plan.original_ids.reserve(plan.masked_positions.size());
  for (int pos : plan.masked_positions) {
    plan.original_ids.push_back(seq.ids[pos]);
    masked.ids[pos] = kMaskId;
  }
  return {masked, plan};
}

std::string format_token_ids(const TokenSequence& seq) {
  std::string out;
  out.reserve(kSequenceLength * 6);
  for (int id : seq.ids) {
    out += std::to_string(id);
    out += '\n';
  }
  return out;
}

}  // namespace petsynth
