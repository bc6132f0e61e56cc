#pragma once

// Self-describing actor-critic checkpoints.
//
// Binary layout (little-endian):
//   magic "SRLCKPT\0" | u32 version | u32 obs_dim | u32 act_dim | u32 hidden
//   | u32 activation tag (0 = tanh) | u64 param count | params as f64[]
// Parameter order matches MlpActorCritic::flatten(): actor layers (W
// row-major, then b), log-std, critic layers.
//
// A plain-text JSON variant (.json extension) carries the same header fields
// and the parameter array for cross-language inspection.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "satrl/errors.hpp"
#include "satrl/net.hpp"

namespace satrl {

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'S', 'R', 'L', 'C',
                                             'K', 'P', 'T', '\0'};
inline constexpr uint32_t kCheckpointVersion = 1;

inline bool has_json_extension(const std::string& path) {
  return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
}

}  // namespace detail

// FNV-1a over the little-endian bytes of each parameter.
inline uint64_t parameter_hash(const MlpActorCritic& net) {
  const VectorXd p = net.flatten();
  uint64_t h = 0xCBF29CE484222325ULL;
  for (int i = 0; i < p.size(); ++i) {
    unsigned char bytes[sizeof(double)];
    const double v = p[i];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

inline void checkpoint_save(const MlpActorCritic& net, const std::string& path) {
  const VectorXd p = net.flatten();
  if (detail::has_json_extension(path)) {
    nlohmann::json j;
    j["format_version"] = detail::kCheckpointVersion;
    j["obs_dim"] = kObsDim;
    j["act_dim"] = kActDim;
    j["hidden"] = kHidden;
    j["activation"] = "tanh";
    j["params"] = std::vector<double>(p.data(), p.data() + p.size());
    std::ofstream f(path);
    if (!f) throw IoError("checkpoint save: cannot open " + path);
    f << j.dump(1) << "\n";
    if (!f) throw IoError("checkpoint save: write failed for " + path);
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint save: cannot open " + path);
  const uint32_t dims[5] = {detail::kCheckpointVersion, kObsDim, kActDim,
                            kHidden, 0 /* tanh */};
  const uint64_t count = static_cast<uint64_t>(p.size());
  f.write(detail::kCheckpointMagic, 8);
  f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
  f.write(reinterpret_cast<const char*>(&count), sizeof(count));
  f.write(reinterpret_cast<const char*>(p.data()),
          static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (!f) throw IoError("checkpoint save: write failed for " + path);
}

inline MlpActorCritic checkpoint_load(const std::string& path) {
  MlpActorCritic net(0);  // shapes only; parameters overwritten below
  const int expected = net.param_count();

  if (detail::has_json_extension(path)) {
    std::ifstream f(path);
    if (!f) throw IoError("checkpoint load: cannot open " + path);
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("checkpoint load: bad JSON: ") + e.what());
    }
    if (!j.contains("format_version") ||
        j["format_version"] != detail::kCheckpointVersion ||
        j.value("obs_dim", 0) != kObsDim || j.value("act_dim", 0) != kActDim ||
        j.value("hidden", 0) != kHidden || j.value("activation", "") != "tanh") {
      throw FormatError("checkpoint load: header mismatch in " + path);
    }
    std::vector<double> params = j.at("params").get<std::vector<double>>();
    if (static_cast<int>(params.size()) != expected) {
      throw FormatError("checkpoint load: parameter count mismatch in " + path);
    }
    VectorXd p = Eigen::Map<VectorXd>(params.data(), expected);
    net.unflatten(p);
    return net;
  }

  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint load: cannot open " + path);
  char magic[8];
  uint32_t dims[5];
  uint64_t count = 0;
  f.read(magic, 8);
  f.read(reinterpret_cast<char*>(dims), sizeof(dims));
  f.read(reinterpret_cast<char*>(&count), sizeof(count));
  if (!f || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) {
    throw FormatError("checkpoint load: corrupt header in " + path);
  }
  if (dims[0] != detail::kCheckpointVersion || dims[1] != kObsDim ||
      dims[2] != kActDim || dims[3] != kHidden || dims[4] != 0 ||
      count != static_cast<uint64_t>(expected)) {
    throw FormatError("checkpoint load: header mismatch in " + path);
  }
  VectorXd p(expected);
  f.read(reinterpret_cast<char*>(p.data()),
         static_cast<std::streamsize>(expected * sizeof(double)));
  if (!f || f.gcount() != static_cast<std::streamsize>(expected * sizeof(double))) {
    throw FormatError("checkpoint load: truncated file " + path);
  }
  if (!p.allFinite()) {
    throw FormatError("checkpoint load: non-finite parameters in " + path);
  }
  net.unflatten(p);
  return net;
}

}  // namespace satrl
