#pragma once

#include "ltssl/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ltssl {

struct NamedArray {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

/// Keyed container of float32 arrays tagged with the fingerprint of the
/// config that produced it. Key layout is documented in docs/formats.md.
struct Checkpoint {
  std::string fingerprint;
  std::int64_t iteration = 0;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;

  /// Stores every group of `params` under "<prefix>/<group name>".
  void put(const std::string& prefix, const ModelParams& params);
  void put(const std::string& name, std::vector<int> shape, std::vector<float> values);
  /// Fills `params` (layout already set) from "<prefix>/..." arrays.
  /// Throws ConfigError when an array is missing or mis-shaped.
  void get(const std::string& prefix, ModelParams& params) const;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace ltssl
