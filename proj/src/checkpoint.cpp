// Copyright 2026 The mamkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mamkit/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "mamkit/image.hpp"

namespace mamkit {

static_assert(std::endian::native == std::endian::little, "checkpoint layout assumes little-endian");

namespace {

constexpr char kMagic[8] = {'M', 'A', 'M', 'K', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <class T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes(b) {}
  template <class T>
  T get() {
    T v;
    get_bytes(&v, sizeof(T));
    return v;
  }
  void get_bytes(void* dst, std::size_t n) {
    if (n > bytes.size() - pos) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos));
    std::memcpy(dst, bytes.data() + pos, n);
    pos += n;
  }
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CheckpointFile& file) {
  Writer w;
  w.put_bytes(kMagic, sizeof kMagic);
  w.put(file.version);
  const std::string header = file.header.dump();
  w.put(static_cast<std::uint64_t>(header.size()));
  w.put_bytes(header.data(), header.size());
  w.put(static_cast<std::uint64_t>(file.tensors.size()));
  for (const auto& t : file.tensors) {
    if (shape_numel(t.shape) != t.values.size()) {
      throw CheckpointError("tensor " + t.name + " has inconsistent shape");
    }
    w.put(static_cast<std::uint32_t>(t.name.size()));
    w.put_bytes(t.name.data(), t.name.size());
    w.put(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) w.put(static_cast<std::uint64_t>(d));
    w.put_bytes(t.values.data(), t.values.size() * sizeof(double));
  }
  return std::move(w.out);
}

CheckpointFile decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[8];
  r.get_bytes(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CheckpointError("not a mamkit checkpoint");
  CheckpointFile f;
  f.version = r.get<std::uint32_t>();
  if (f.version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(f.version));
  }
  std::string header(r.get<std::uint64_t>(), '\0');
  r.get_bytes(header.data(), header.size());
  f.header = nlohmann::json::parse(header);
  const auto count = r.get<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name.resize(r.get<std::uint32_t>());
    r.get_bytes(t.name.data(), t.name.size());
    const auto rank = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(r.get<std::uint64_t>());
    t.values.resize(shape_numel(t.shape));
    r.get_bytes(t.values.data(), t.values.size() * sizeof(double));
    f.tensors.push_back(std::move(t));
  }
  if (r.pos != bytes.size()) throw CheckpointError("trailing bytes after checkpoint tensors");
  return f;
}

void save_checkpoint(const std::filesystem::path& path, const RetouchDetector& model,
                     const nlohmann::json& extra) {
  CheckpointFile f;
  f.header = {{"model", model_config_to_json(model.config())}, {"extra", extra}};
  for (const auto& e : model.params().entries()) {
    f.tensors.push_back({e.name, e.tensor.shape(),
                         std::vector<double>(e.tensor.values().begin(), e.tensor.values().end())});
  }
  write_file(path, encode_checkpoint(f));
}

std::unique_ptr<RetouchDetector> load_checkpoint(const std::filesystem::path& path,
                                                 nlohmann::json* extra) {
  if (!std::filesystem::exists(path)) throw CheckpointError("no checkpoint at " + path.string());
  const CheckpointFile f = decode_checkpoint(read_file(path));
  auto model = std::make_unique<RetouchDetector>(model_config_from_json(f.header.at("model")));
  const auto& entries = model->params().entries();
  if (entries.size() != f.tensors.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(f.tensors.size()) +
                          " tensors, model expects " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& src = f.tensors[i];
    Tensor dst = entries[i].tensor;
    if (src.name != entries[i].name || src.shape != dst.shape()) {
      throw CheckpointError("checkpoint tensor " + src.name + " " + shape_string(src.shape) +
                            " does not match " + entries[i].name + " " + shape_string(dst.shape()));
    }
    std::memcpy(dst.mutable_values().data(), src.values.data(), src.values.size() * sizeof(double));
  }
  if (extra) *extra = f.header.value("extra", nlohmann::json::object());
  return model;
}

}  // namespace mamkit
