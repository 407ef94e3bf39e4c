// SPDX-License-Identifier: Apache-2.0
#include "petsynth/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "petsynth/error.hpp"

namespace petsynth {

namespace {

constexpr char kMagic[8] = {'P', 'S', 'Y', 'N', 'C', 'K', 'P', 'T'};

void write_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  write_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
  write_u32(out, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(in.good(), ErrorCode::TruncatedPayload, "checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t read_u64(std::istream& in) {
  const std::uint64_t lo = read_u32(in);
  const std::uint64_t hi = read_u32(in);
  return lo | (hi << 32);
}

}  // namespace

void Checkpoint::add_tensor(const std::string& name, const std::vector<int>& shape,
                            const double* data, std::size_t count) {
  Entry e;
  e.name = name;
  e.shape = shape;
  e.data.assign(data, data + count);
  tensors.push_back(std::move(e));
}

void Checkpoint::add_params(const std::vector<nn::TensorRef>& refs) {
  for (const auto& r : refs) add_tensor(r.name, r.shape, r.data, r.size);
}

void Checkpoint::add_optimizer(const std::string& prefix,
                               const std::vector<nn::TensorRef>& refs,
                               const nn::Adam& opt) {
  const auto& m = opt.first_moments();
  const auto& v = opt.second_moments();
  require(m.size() == refs.size(), ErrorCode::InvalidArgument,
          "optimizer does not match parameter list");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    add_tensor(prefix + "." + refs[i].name + ".m", refs[i].shape, m[i].data(),
               m[i].size());
    add_tensor(prefix + "." + refs[i].name + ".v", refs[i].shape, v[i].data(),
               v[i].size());
  }
}

const Checkpoint::Entry& Checkpoint::find(const std::string& name) const {
  for (const auto& e : tensors) {
    if (e.name == name) return e;
  }
  fail(ErrorCode::CheckpointMismatch, "checkpoint is missing tensor: " + name);
}

void Checkpoint::restore_params(const std::vector<nn::TensorRef>& refs) const {
  for (const auto& r : refs) {
    const Entry& e = find(r.name);
    require(e.data.size() == r.size, ErrorCode::CheckpointMismatch,
            "checkpoint tensor size mismatch: " + r.name);
    std::memcpy(r.data, e.data.data(), r.size * sizeof(double));
  }
}

void Checkpoint::restore_optimizer(const std::string& prefix,
                                   const std::vector<nn::TensorRef>& refs,
                                   nn::Adam& opt) const {
  auto& m = opt.first_moments();
  auto& v = opt.second_moments();
  require(m.size() == refs.size(), ErrorCode::CheckpointMismatch,
          "optimizer does not match parameter list");
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const Entry& em = find(prefix + "." + refs[i].name + ".m");
    const Entry& ev = find(prefix + "." + refs[i].name + ".v");
    require(em.data.size() == refs[i].size && ev.data.size() == refs[i].size,
            ErrorCode::CheckpointMismatch, "moment size mismatch: " + refs[i].name);
    m[i] = em.data;
    v[i] = ev.data;
  }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::IoError, "cannot open for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kCheckpointVersion);
  write_u64(out, ckpt.meta.size());
  out.write(ckpt.meta.data(), static_cast<std::streamsize>(ckpt.meta.size()));
  write_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& e : ckpt.tensors) {
    write_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_u32(out, static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) write_u32(out, static_cast<std::uint32_t>(d));
    write_u64(out, e.data.size());
    for (double x : e.data) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, 8);
      write_u64(out, bits);
    }
  }
  out.flush();
  require(out.good(), ErrorCode::IoError, "write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::IoError, "cannot open for reading: " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, kMagic, 8) == 0, ErrorCode::BadMagic,
          "not a checkpoint file: " + path);
  const std::uint32_t version = read_u32(in);
  require(version == kCheckpointVersion, ErrorCode::CheckpointVersion,
          "unsupported checkpoint version " + std::to_string(version) +
              " (expected " + std::to_string(kCheckpointVersion) + ")");

  Checkpoint ckpt;
  const std::uint64_t meta_len = read_u64(in);
  ckpt.meta.resize(meta_len);
  in.read(ckpt.meta.data(), static_cast<std::streamsize>(meta_len));
  require(in.good(), ErrorCode::TruncatedPayload, "checkpoint truncated");

  const std::uint32_t count = read_u32(in);
  ckpt.tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Checkpoint::Entry e;
    const std::uint32_t name_len = read_u32(in);
    e.name.resize(name_len);
    in.read(e.name.data(), name_len);
    const std::uint32_t ndim = read_u32(in);
    e.shape.resize(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) {
      e.shape[d] = static_cast<int>(read_u32(in));
    }
    const std::uint64_t n = read_u64(in);
    e.data.resize(n);
    for (std::uint64_t j = 0; j < n; ++j) {
      const std::uint64_t bits = read_u64(in);
      std::memcpy(&e.data[j], &bits, 8);
    }
    require(in.good(), ErrorCode::TruncatedPayload, "checkpoint truncated");
    ckpt.tensors.push_back(std::move(e));
  }
  return ckpt;
}

}  // namespace petsynth
