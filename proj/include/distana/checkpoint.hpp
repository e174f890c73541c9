#pragma once

// "DSTW" weight checkpoint.
//
//   char[4]  "DSTW"
//   u32      version (1)
//   u32 x 8  d, l, s, pre, m, s_pre, H, W
//   f64[]    W_dl_pre, W_s_pre, W_x, W_h, W_s, W_dl_post, each row-major
//            with the shapes documented on PKWeights
//
// Little-endian throughout.

#include <cstdint>
#include <string>

#include "distana/binary_io.hpp"
#include "distana/network.hpp"

namespace distana {

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline io::Writer encode_weights(const PKWeights& w) {
  io::Writer out;
  out.raw("DSTW");
  out.u32(kCheckpointVersion);
  const NetworkConfig& c = w.config;
  for (std::size_t v : {c.dynamic_dim, c.lateral_dim, c.static_dim, c.pre_dim, c.lstm_cells, c.static_pre_dim, c.height,
                        c.width})
    out.u32(static_cast<std::uint32_t>(v));
  for (const Tensor* t : w.tensors()) out.f64s(t->values());
  return out;
}

inline PKWeights decode_weights(io::Reader& in) {
  if (in.raw(4) != "DSTW") throw IoError("not a DSTW checkpoint (bad magic)");
  const std::uint32_t version = in.u32();
  if (version != kCheckpointVersion) throw IoError("unsupported DSTW version " + std::to_string(version));
  NetworkConfig c;
  c.dynamic_dim = in.u32();
  c.lateral_dim = in.u32();
  c.static_dim = in.u32();
  c.pre_dim = in.u32();
  c.lstm_cells = in.u32();
  c.static_pre_dim = in.u32();
  c.height = in.u32();
  c.width = in.u32();
  PKWeights w;
  try {
    w = PKWeights::zeros(c);
  } catch (const ContractError& e) {
    throw IoError(std::string("checkpoint holds an invalid config: ") + e.what());
  }
  for (Tensor* t : w.tensors()) t->storage() = in.f64s(t->size());
  if (!in.at_end()) throw IoError("trailing bytes after DSTW weights");
  return w;
}

inline void save_weights(const std::string& path, const PKWeights& w) { encode_weights(w).save(path); }

inline PKWeights load_weights(const std::string& path) {
  io::Reader in = io::Reader::load(path);
  return decode_weights(in);
}

}  // namespace distana
