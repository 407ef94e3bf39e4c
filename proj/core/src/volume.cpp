// SPDX-License-Identifier: Apache-2.0
#include "petsynth/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "petsynth/rng.hpp"

namespace petsynth {

namespace {

std::size_t product(const std::array<int, 4>& dims) {
  return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * dims[3];
}

void check_dims(Modality m, int ndim, const std::array<int, 4>& dims) {
  require(ndim == 3 || ndim == 4, ErrorCode::InvalidArgument,
          "volume ndim must be 3 or 4");
  require((m == Modality::MRI) == (ndim == 3), ErrorCode::ModalityMismatch,
          "MRI volumes are 3D, PET volumes are 4D");
  for (int i = 0; i < 4; ++i) {
    require(dims[i] >= 1, ErrorCode::InvalidArgument,
            "volume dims must be positive");
  }
  if (ndim == 3) {
    require(dims[0] == 1, ErrorCode::InvalidArgument,
            "3D volume must have unit time axis");
  }
}

}  // namespace

Volume Volume::mri(int d, int h, int w) {
  return from_buffer(Modality::MRI, 3, {1, d, h, w},
                     std::vector<float>(static_cast<std::size_t>(d) * h * w, 0.0f));
}

Volume Volume::pet(int t, int d, int h, int w) {
  return from_buffer(Modality::PET, 4, {t, d, h, w},
                     std::vector<float>(static_cast<std::size_t>(t) * d * h * w, 0.0f));
}

Volume Volume::from_buffer(Modality m, int ndim, const std::array<int, 4>& dims,
                           std::vector<float> values) {
  check_dims(m, ndim, dims);
  require(values.size() == product(dims), ErrorCode::DimMismatch,
          "buffer length does not match dims");
  Volume v;
  v.modality_ = m;
  v.ndim_ = ndim;
  v.dims_ = dims;
  v.values_ = std::move(values);
  v.check_finite();
  return v;
}

void Volume::check_finite() const {
  for (float v : values_) {
    require(std::isfinite(v), ErrorCode::InvalidArgument,
            "volume contains non-finite values");
  }
}

NormalizationStats compute_stats(const Volume& vol) {
  require(!vol.empty(), ErrorCode::InvalidArgument,
          "compute_stats on empty volume");
  const auto& v = vol.values();
  double sum = 0.0;
  for (float x : v) sum += x;
  const double mean = sum / static_cast<double>(v.size());
  double sq = 0.0;
  for (float x : v) {
    const double d = x - mean;
    sq += d * d;
  }
  const double var = sq / static_cast<double>(v.size());
  NormalizationStats stats;
  stats.mean = mean;
  stats.std = std::max(std::sqrt(var), kStdEpsilon);
  return stats;
}

std::pair<Volume, NormalizationStats> normalize_mri(const Volume& vol) {
  require(vol.modality() == Modality::MRI, ErrorCode::ModalityMismatch,
          "normalize_mri requires an MRI volume");
  const NormalizationStats stats = compute_stats(vol);
  Volume out = vol;
  for (float& x : out.values()) {
    x = static_cast<float>((x - stats.mean) / stats.std);
  }
  return {std::move(out), stats};
}

Volume normalize_pet(const Volume& pet, const NormalizationStats& mri_stats) {
  require(pet.modality() == Modality::PET, ErrorCode::ModalityMismatch,
          "normalize_pet requires a PET volume");
  const double shift = mri_stats.mean / 10.0;
  const double scale = std::max(mri_stats.std / 10.0, kStdEpsilon);
  Volume out = pet;
  for (float& x : out.values()) {
    x = static_cast<float>((x - shift) / scale);
  }
  return out;
}

Volume restore_pet(const Volume& norm_pet, const NormalizationStats& mri_stats) {
  require(norm_pet.modality() == Modality::PET, ErrorCode::ModalityMismatch,
          "restore_pet requires a PET volume");
  const double shift = mri_stats.mean / 10.0;
  const double scale = std::max(mri_stats.std / 10.0, kStdEpsilon);
  Volume out = norm_pet;
  for (float& x : out.values()) {
    x = static_cast<float>(x * scale + shift);
  }
  return out;
}

void DataConfig::validate() const {
  for (int d : mri_dims) {
    require(d >= 8, ErrorCode::ConfigError, "mri_dims must all be >= 8");
  }
  require(pet_dims[0] >= 1, ErrorCode::ConfigError, "pet time axis must be >= 1");
  for (int i = 1; i < 4; ++i) {
    require(pet_dims[i] >= 8, ErrorCode::ConfigError,
            "pet spatial dims must all be >= 8");
  }
  require(mri_max > mri_min, ErrorCode::ConfigError, "bad MRI intensity range");
  require(pet_max > 0.0 && pet_min < 0.0, ErrorCode::ConfigError,
          "pet range must straddle zero");
}

namespace {

struct Blob {
  double cz, cy, cx;
  double sigma;
  double amp;
};

// Smooth scalar field in [0, 1]: a handful of Gaussian bumps over a faint
// directional ripple, min-max normalized.
std::vector<double> blob_field(Rng& rng, int d, int h, int w, int n_blobs) {
  std::vector<Blob> blobs(n_blobs);
  for (auto& b : blobs) {
    b.cz = rng.uniform(0.15, 0.85) * d;
    b.cy = rng.uniform(0.15, 0.85) * h;
    b.cx = rng.uniform(0.15, 0.85) * w;
    b.sigma = rng.uniform(0.06, 0.14) * std::min({d, h, w});
    b.amp = rng.uniform(0.45, 1.0);
  }
  double fz = rng.uniform(0.5, 1.5), fy = rng.uniform(0.5, 1.5),
         fx = rng.uniform(0.5, 1.5);
  double phase = rng.uniform(0.0, 2.0 * M_PI);

  std::vector<double> field(static_cast<std::size_t>(d) * h * w);
  std::size_t i = 0;
  for (int z = 0; z < d; ++z) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x, ++i) {
        double v = 0.0;
        for (const auto& b : blobs) {
          const double dz = z - b.cz, dy = y - b.cy, dx = x - b.cx;
          const double r2 = dz * dz + dy * dy + dx * dx;
          v += b.amp * std::exp(-r2 / (2.0 * b.sigma * b.sigma));
        }
        v += 0.06 * std::sin(2.0 * M_PI * (fz * z / d + fy * y / h + fx * x / w) + phase);
        field[i] = v;
      }
    }
  }
  const auto [lo_it, hi_it] = std::minmax_element(field.begin(), field.end());
  const double lo = *lo_it, hi = *hi_it;
  const double span = std::max(hi - lo, 1e-12);
  for (double& v : field) v = (v - lo) / span;
  return field;
}

// Trilinear sample of a 3D field at fractional voxel coordinates.
double sample_field(const std::vector<double>& f, int d, int h, int w,
                    double z, double y, double x) {
  auto clampi = [](double v, int n) {
    return std::min(std::max(v, 0.0), static_cast<double>(n - 1));
  };
  z = clampi(z, d);
  y = clampi(y, h);
  x = clampi(x, w);
  const int z0 = static_cast<int>(z), y0 = static_cast<int>(y), x0 = static_cast<int>(x);
  const int z1 = std::min(z0 + 1, d - 1), y1 = std::min(y0 + 1, h - 1),
            x1 = std::min(x0 + 1, w - 1);
  const double tz = z - z0, ty = y - y0, tx = x - x0;
  auto at = [&](int zz, int yy, int xx) {
    return f[(static_cast<std::size_t>(zz) * h + yy) * w + xx];
  };
  const double c00 = at(z0, y0, x0) * (1 - tx) + at(z0, y0, x1) * tx;
  const double c01 = at(z0, y1, x0) * (1 - tx) + at(z0, y1, x1) * tx;
  const double c10 = at(z1, y0, x0) * (1 - tx) + at(z1, y0, x1) * tx;
  const double c11 = at(z1, y1, x0) * (1 - tx) + at(z1, y1, x1) * tx;
  const double c0 = c00 * (1 - ty) + c01 * ty;
  const double c1 = c10 * (1 - ty) + c11 * ty;
  return c0 * (1 - tz) + c1 * tz;
}

}  // namespace

PairSample synth_pair(std::uint64_t seed, const DataConfig& cfg) {
  cfg.validate();
  const int md = cfg.mri_dims[0], mh = cfg.mri_dims[1], mw = cfg.mri_dims[2];
  const int pt = cfg.pet_dims[0], pd = cfg.pet_dims[1], ph = cfg.pet_dims[2],
            pw = cfg.pet_dims[3];

  Rng mri_rng(seed, Stream::SynthMri);
  const int n_blobs = 5 + static_cast<int>(mri_rng.below(4));
  std::vector<double> field = blob_field(mri_rng, md, mh, mw, n_blobs);

  // Dark-dominant anatomy: most voxels near the low end of the range.
  Volume mri = Volume::mri(md, mh, mw);
  {
    auto& v = mri.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double u = std::pow(field[i], 2.4);
      v[i] = static_cast<float>(cfg.mri_min + (cfg.mri_max - cfg.mri_min) * u);
    }
  }

  Rng pet_rng(seed, Stream::SynthPet);
  const int n_wells = 3;
  std::vector<Blob> wells(n_wells);
  for (auto& b : wells) {
    b.cz = pet_rng.uniform(0.2, 0.8) * pd;
    b.cy = pet_rng.uniform(0.2, 0.8) * ph;
    b.cx = pet_rng.uniform(0.2, 0.8) * pw;
    b.sigma = pet_rng.uniform(0.08, 0.16) * std::min({pd, ph, pw});
    b.amp = pet_rng.uniform(0.35, 1.05) * cfg.pet_min;
  }
  double rz = pet_rng.uniform(0.5, 1.5), ry = pet_rng.uniform(0.5, 1.5),
         rx = pet_rng.uniform(0.5, 1.5);
  double rphase = pet_rng.uniform(0.0, 2.0 * M_PI);

  // Uptake rides on the MRI field through a thresholded cubic curve, so the
  // MRI->PET mapping stays learnable while the background stays at zero.
  const double uptake_peak = 1.15 * cfg.pet_max;
  const double u0 = 0.25;
  Volume pet = Volume::pet(pt, pd, ph, pw);
  for (int t = 0; t < pt; ++t) {
    const double time_scale = 1.0 - 0.12 * t;
    for (int z = 0; z < pd; ++z) {
      for (int y = 0; y < ph; ++y) {
        for (int x = 0; x < pw; ++x) {
          const double mz = (z + 0.5) * md / pd - 0.5;
          const double my = (y + 0.5) * mh / ph - 0.5;
          const double mx = (x + 0.5) * mw / pw - 0.5;
          const double u = sample_field(field, md, mh, mw, mz, my, mx);
          double s = 0.0;
          if (u > u0) {
            const double r = (u - u0) / (1.0 - u0);
            s = uptake_peak * r * r * r;
          }
          for (const auto& b : wells) {
            const double dz = z - b.cz, dy = y - b.cy, dx = x - b.cx;
            const double r2 = dz * dz + dy * dy + dx * dx;
            s += b.amp * std::exp(-r2 / (2.0 * b.sigma * b.sigma));
          }
          s += 0.4 * std::sin(2.0 * M_PI * (rz * z / pd + ry * y / ph + rx * x / pw) + rphase);
          const double noise = pet_rng.laplace(0.3);
          pet.at(t, z, y, x) = static_cast<float>(time_scale * s + noise);
        }
      }
    }
  }

  PairSample sample;
  sample.mri_stats = compute_stats(mri);
  sample.mri = std::move(mri);
  sample.pet = std::move(pet);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "pair-%016llx",
                static_cast<unsigned long long>(seed));
  sample.id = buf;
  return sample;
}

namespace {

constexpr char kMagic[8] = {'P', 'S', 'Y', 'N', 'V', 'O', 'L', '1'};
constexpr std::size_t kHeaderSize = 8 + 4 + 4 + 4 * 4;

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

void save_volume(const std::string& path, const Volume& vol) {
  std::string header;
  header.reserve(kHeaderSize);
  header.append(kMagic, sizeof(kMagic));
  put_u32(header, static_cast<std::uint32_t>(vol.modality()));
  put_u32(header, static_cast<std::uint32_t>(vol.ndim()));
  for (int i = 0; i < 4; ++i) {
    put_u32(header, static_cast<std::uint32_t>(vol.dims()[i]));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::IoError, "cannot open for writing: " + path);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  // x86 floats are already little-endian IEEE-754; serialize explicitly so the
  // container stays byte-stable regardless of host.
  std::string payload;
  payload.reserve(vol.voxel_count() * 4);
  for (float f : vol.values()) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(payload, bits);
  }
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  out.flush();
  require(out.good(), ErrorCode::IoError, "write failed: " + path);
}

Volume load_volume(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  require(in.good(), ErrorCode::IoError, "cannot open for reading: " + path);
  const std::streamsize file_size = in.tellg();
  in.seekg(0);

  require(file_size >= static_cast<std::streamsize>(kHeaderSize),
          ErrorCode::TruncatedPayload, "file shorter than header: " + path);
  std::vector<unsigned char> header(kHeaderSize);
  in.read(reinterpret_cast<char*>(header.data()), kHeaderSize);
  require(in.good(), ErrorCode::IoError, "read failed: " + path);

  require(std::memcmp(header.data(), kMagic, sizeof(kMagic)) == 0,
          ErrorCode::BadMagic, "bad magic: " + path);

  const std::uint32_t modality_raw = get_u32(&header[8]);
  const std::uint32_t ndim = get_u32(&header[12]);
  std::array<int, 4> dims;
  for (int i = 0; i < 4; ++i) {
    const std::uint32_t d = get_u32(&header[16 + 4 * i]);
    require(d >= 1 && d <= (1u << 24), ErrorCode::PayloadMismatch,
            "implausible dim in header: " + path);
    dims[i] = static_cast<int>(d);
  }
  require(modality_raw <= 1, ErrorCode::PayloadMismatch,
          "unknown modality in header: " + path);
  require(ndim == 3 || ndim == 4, ErrorCode::PayloadMismatch,
          "unknown ndim in header: " + path);

  const std::streamsize payload_bytes = file_size - static_cast<std::streamsize>(kHeaderSize);
  require(payload_bytes % 4 == 0, ErrorCode::TruncatedPayload,
          "payload ends mid-float: " + path);
  const std::size_t n_floats = static_cast<std::size_t>(payload_bytes) / 4;
  const std::size_t expected =
      static_cast<std::size_t>(dims[0]) * dims[1] * dims[2] * dims[3];
  require(n_floats == expected, ErrorCode::PayloadMismatch,
          "dim/payload mismatch: " + path);

  std::vector<unsigned char> raw(static_cast<std::size_t>(payload_bytes));
  in.read(reinterpret_cast<char*>(raw.data()), payload_bytes);
  require(in.good(), ErrorCode::IoError, "read failed: " + path);

  std::vector<float> values(n_floats);
  for (std::size_t i = 0; i < n_floats; ++i) {
    const std::uint32_t bits = get_u32(&raw[i * 4]);
    std::memcpy(&values[i], &bits, 4);
  }
  return Volume::from_buffer(static_cast<Modality>(modality_raw),
                             static_cast<int>(ndim), dims, std::move(values));
}

}  // namespace petsynth
