#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cdet/model.hpp"
#include "cdet/optimizer.hpp"

namespace cdet {

// Single-file checkpoint: versioned header, config fingerprint plus the full
// config text, then named float32 blobs for parameters, BatchNorm running
// statistics, and (optionally) optimizer slots. All integers and floats are
// little-endian.
namespace ckpt {

constexpr char kMagic[8] = {'C', 'D', 'E', 'T', 'C', 'K', 'P', '1'};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("checkpoint: truncated file");
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  const auto n = read_pod<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw DataError("checkpoint: truncated string");
  return s;
}

inline void write_blob(std::ostream& os, const std::string& name, const Tensor<float>& t) {
  write_string(os, name);
  write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) write_pod<std::int64_t>(os, t.dim(i));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(float)));
}

inline std::pair<std::string, Tensor<float>> read_blob(std::istream& is) {
  std::string name = read_string(is);
  const auto ndim = read_pod<std::uint8_t>(is);
  std::vector<std::int64_t> shape;
  for (int i = 0; i < ndim; ++i) shape.push_back(read_pod<std::int64_t>(is));
  Tensor<float> t(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!is) throw DataError("checkpoint: truncated blob " + name);
  return {std::move(name), std::move(t)};
}

}  // namespace detail

struct Meta {
  int epoch = 0;
  bool is_best = false;
  float val_loss = 0.f;
  std::uint64_t fingerprint = 0;
  std::string config_text;
};

inline void save(const std::string& path, Detector<float>& model,
                 Optimizer<float>* optimizer, const Meta& meta) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("checkpoint: cannot write " + path);
  os.write(kMagic, sizeof(kMagic));
  detail::write_pod<std::uint32_t>(os, 1);  // version
  detail::write_pod<std::uint64_t>(os, meta.fingerprint);
  detail::write_pod<std::int32_t>(os, meta.epoch);
  detail::write_pod<std::uint8_t>(os, meta.is_best ? 1 : 0);
  detail::write_pod<float>(os, meta.val_loss);
  detail::write_string(os, meta.config_text);

  ParamRegistry<float> reg = model.params();
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(reg.items.size()));
  for (const auto& [name, v] : reg.items) detail::write_blob(os, name, v->value);

  auto stats = model.stats();
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(stats.size()));
  for (const auto& [name, t] : stats) detail::write_blob(os, name, t);

  if (optimizer) {
    detail::write_pod<std::uint8_t>(os, 1);
    detail::write_pod<std::int64_t>(os, optimizer->step_count());
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(optimizer->slot_m().size()));
    for (std::size_t i = 0; i < optimizer->slot_m().size(); ++i) {
      detail::write_blob(os, "m" + std::to_string(i), optimizer->slot_m()[i]);
      detail::write_blob(os, "v" + std::to_string(i), optimizer->slot_v()[i]);
    }
  } else {
    detail::write_pod<std::uint8_t>(os, 0);
  }
  if (!os) throw DataError("checkpoint: write failed for " + path);
}

// Reads only the header — used to rebuild the model before a full load.
inline Meta peek(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != 1) throw DataError("checkpoint: unsupported version");
  Meta meta;
  meta.fingerprint = detail::read_pod<std::uint64_t>(is);
  meta.epoch = detail::read_pod<std::int32_t>(is);
  meta.is_best = detail::read_pod<std::uint8_t>(is) != 0;
  meta.val_loss = detail::read_pod<float>(is);
  meta.config_text = detail::read_string(is);
  return meta;
}

inline Meta load(const std::string& path, Detector<float>& model,
                 Optimizer<float>* optimizer = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != 1) throw DataError("checkpoint: unsupported version");
  Meta meta;
  meta.fingerprint = detail::read_pod<std::uint64_t>(is);
  meta.epoch = detail::read_pod<std::int32_t>(is);
  meta.is_best = detail::read_pod<std::uint8_t>(is) != 0;
  meta.val_loss = detail::read_pod<float>(is);
  meta.config_text = detail::read_string(is);
  if (meta.fingerprint != config_fingerprint(model.cfg))
    throw DataError("checkpoint: config fingerprint mismatch (model architecture differs)");

  ParamRegistry<float> reg = model.params();
  const auto n_params = detail::read_pod<std::uint32_t>(is);
  if (n_params != reg.items.size()) throw DataError("checkpoint: parameter count mismatch");
  for (std::uint32_t i = 0; i < n_params; ++i) {
    auto [name, t] = detail::read_blob(is);
    Var<float> v = reg.find(name);
    if (!v) throw DataError("checkpoint: unknown parameter " + name);
    if (!v->value.same_shape(t)) throw DataError("checkpoint: shape mismatch for " + name);
    std::copy_n(t.data(), t.numel(), v->value.data());
  }

  auto stats = model.stats();
  const auto n_stats = detail::read_pod<std::uint32_t>(is);
  if (n_stats != stats.size()) throw DataError("checkpoint: stats count mismatch");
  for (std::uint32_t i = 0; i < n_stats; ++i) {
    auto [name, t] = detail::read_blob(is);
    bool found = false;
    for (auto& [sname, st] : stats)
      if (sname == name) {
        if (!st.same_shape(t)) throw DataError("checkpoint: stat shape mismatch for " + name);
        std::copy_n(t.data(), t.numel(), st.data());
        found = true;
        break;
      }
    if (!found) throw DataError("checkpoint: unknown stat " + name);
  }

  const auto has_opt = detail::read_pod<std::uint8_t>(is);
  if (has_opt && optimizer) {
    optimizer->set_step_count(detail::read_pod<std::int64_t>(is));
    const auto n = detail::read_pod<std::uint32_t>(is);
    if (n != optimizer->slot_m().size()) throw DataError("checkpoint: optimizer slot mismatch");
    for (std::uint32_t i = 0; i < n; ++i) {
      auto [mname, mt] = detail::read_blob(is);
      auto [vname, vt] = detail::read_blob(is);
      std::copy_n(mt.data(), mt.numel(), optimizer->slot_m()[i].data());
      std::copy_n(vt.data(), vt.numel(), optimizer->slot_v()[i].data());
    }
  }
  return meta;
}

}  // namespace ckpt
}  // namespace cdet
