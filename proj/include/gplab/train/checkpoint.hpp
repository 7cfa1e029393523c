/*
 * Copyright 2026 The gplab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "gplab/error.hpp"
#include "gplab/model/network.hpp"
#include "gplab/train/adam.hpp"

namespace gplab {

inline constexpr char kCheckpointMagic[4] = {'G', 'P', 'L', 'B'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// 64-bit FNV-1a, used for config and content digests.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::string spec_name;
  std::uint64_t epoch = 0;
  std::uint64_t config_digest = 0;
  std::uint64_t optimizer_step = 0;
  std::string rng_state;
  std::vector<NamedArray> tensors;

  const NamedArray* find(std::string_view name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }
};

namespace detail {

class ByteWriter {
public:
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf.append(s);
  }
  std::string buf;

private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
};

class ByteReader {
public:
  ByteReader(std::string_view data, std::string origin) : d_(data), origin_(std::move(origin)) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(d_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  void need(std::uint64_t n) const {
    if (n > d_.size() - pos_) {
      throw CheckpointError(CheckpointError::Kind::truncated,
                            origin_ + ": truncated checkpoint (needed " + std::to_string(n) +
                                " bytes at offset " + std::to_string(pos_) + ")");
    }
  }
  std::size_t pos() const noexcept { return pos_; }

private:
  std::uint64_t get(int n) {
    need(static_cast<std::uint64_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(d_[pos_ + i])) << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view d_;
  std::string origin_;
  std::size_t pos_ = 0;
};

} // namespace detail

/**
 * Layout (little-endian): "GPLB", u32 version, u64 config digest, spec name,
 * u64 epoch, u64 optimizer step, rng state, u32 tensor count, then per
 * tensor: name, u32 rank, u64 dims, float32 values. A trailing u64 FNV-1a
 * digest covers every preceding byte. Strings are u32-length prefixed.
 */
inline std::string serialize(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.buf.append(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.u64(ck.config_digest);
  w.str(ck.spec_name);
  w.u64(ck.epoch);
  w.u64(ck.optimizer_step);
  w.str(ck.rng_state);
  w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& t : ck.tensors) {
    w.str(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.u64(d);
    for (float v : t.values) w.f32(v);
  }
  w.u64(fnv1a64(w.buf));
  return std::move(w.buf);
}

inline Checkpoint deserialize(std::string_view bytes, const std::string& origin = "checkpoint") {
  using K = CheckpointError::Kind;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw CheckpointError(K::bad_magic, origin + ": not a gplab checkpoint (bad magic bytes)");
  }
  detail::ByteReader r(bytes.substr(4), origin);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw CheckpointError(K::version_mismatch, origin + ": checkpoint format version " +
                                                   std::to_string(version) + ", expected " +
                                                   std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  ck.config_digest = r.u64();
  ck.spec_name = r.str();
  ck.epoch = r.u64();
  ck.optimizer_step = r.u64();
  ck.rng_state = r.str();
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray t;
    t.name = r.str();
    const std::uint32_t rank = r.u32();
    r.need(8ull * rank);
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(static_cast<std::size_t>(r.u64()));
      numel *= t.shape.back();
    }
    if (numel > (1ull << 40)) r.need(numel);  // absurd size: corrupt header
    r.need(4 * numel);
    t.values.resize(numel);
    for (auto& v : t.values) v = r.f32();
    ck.tensors.push_back(std::move(t));
  }
  const std::size_t body = 4 + r.pos();
  const std::uint64_t stored = r.u64();
  if (stored != fnv1a64(bytes.substr(0, body))) {
    throw CheckpointError(K::digest_mismatch, origin + ": content digest mismatch (file corrupted)");
  }
  if (4 + r.pos() != bytes.size()) {
    throw CheckpointError(K::digest_mismatch, origin + ": trailing bytes after checkpoint digest");
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::string bytes = serialize(ck);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw DataError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read checkpoint " + path.string());
  const std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
  return deserialize(bytes, path.string());
}

/// Snapshot of a network (and optionally its optimizer).
inline Checkpoint capture(const Network<float>& net, const Adam<float>* adam, std::uint64_t epoch,
                          std::uint64_t config_digest, std::string rng_state = {}) {
  Checkpoint ck;
  ck.spec_name = net.spec().name;
  ck.epoch = epoch;
  ck.config_digest = config_digest;
  ck.rng_state = std::move(rng_state);
  auto add = [&](const std::string& name, const Tensor<float>& t) {
    auto v = t.data();
    ck.tensors.push_back(NamedArray{name, t.shape(), std::vector<float>(v.begin(), v.end())});
  };
  for (const auto& e : net.parameters()) add(e.name, e.tensor);
  for (const auto& e : net.buffers()) add(e.name, e.tensor);
  if (adam) {
    ck.optimizer_step = adam->steps();
    const auto& ps = net.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) add("adam.m." + ps[i].name, adam->first_moments()[i]);
    for (std::size_t i = 0; i < ps.size(); ++i) add("adam.v." + ps[i].name, adam->second_moments()[i]);
  }
  return ck;
}

/**
 * Copies checkpoint tensors into `net` (and `adam` when given). Every
 * registry name must be present with an identical shape, and the checkpoint
 * may not carry model tensors the network lacks.
 */
inline void restore(const Checkpoint& ck, Network<float>& net, Adam<float>* adam = nullptr) {
  using K = CheckpointError::Kind;
  std::size_t model_tensors = 0;
  for (const auto& t : ck.tensors) model_tensors += t.name.starts_with("adam.") ? 0 : 1;
  auto fill = [&](const std::string& name, Tensor<float>& dst) {
    const NamedArray* src = ck.find(name);
    if (!src) {
      throw CheckpointError(K::incompatible, "checkpoint for '" + ck.spec_name + "' lacks tensor " +
                                                 name + " required by '" + net.spec().name + "'");
    }
    if (src->shape != dst.shape()) {
      throw CheckpointError(K::incompatible, "tensor " + name + " has shape " +
                                                 shape_str(src->shape) + " in checkpoint but " +
                                                 shape_str(dst.shape()) + " in model '" +
                                                 net.spec().name + "'");
    }
    std::copy(src->values.begin(), src->values.end(), dst.data().begin());
  };
  if (model_tensors != net.parameters().size() + net.buffers().size()) {
    throw CheckpointError(K::incompatible,
                          "checkpoint for '" + ck.spec_name + "' holds " +
                              std::to_string(model_tensors) + " model tensors; '" +
                              net.spec().name + "' expects " +
                              std::to_string(net.parameters().size() + net.buffers().size()));
  }
  for (auto& e : net.parameters()) fill(e.name, e.tensor);
  for (auto& e : net.buffers()) fill(e.name, e.tensor);
  if (adam) {
    auto& ps = net.parameters();
    for (std::size_t i = 0; i < ps.size(); ++i) fill("adam.m." + ps[i].name, adam->first_moments()[i]);
    for (std::size_t i = 0; i < ps.size(); ++i) fill("adam.v." + ps[i].name, adam->second_moments()[i]);
    adam->set_steps(ck.optimizer_step);
  }
}

/// Rebuilds the named model and loads its weights and statistics.
inline Network<float> network_from(const Checkpoint& ck) {
  auto net = build<float>(model_spec(ck.spec_name), 0);
  restore(ck, net);
  return net;
}

inline Network<float> load_network(const std::filesystem::path& path) {
  return network_from(load_checkpoint(path));
}

} // namespace gplab
