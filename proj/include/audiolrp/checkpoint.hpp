#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "audiolrp/io.hpp"
#include "audiolrp/model.hpp"

namespace audiolrp {

/// Checkpoint layout (little-endian):
///   "ALRPCKPT", u32 version, descriptor string, u64 architecture hash,
///   u32 blob count, parameter blobs then extra blobs, "END!".
/// Extra blobs (e.g. a preprocessing mean) carry names outside "layerN.*".
template <typename T>
struct Checkpoint {
  Model<T> model;
  std::vector<NamedTensor> extras;

  const NamedTensor* extra(const std::string& name) const {
    for (const auto& e : extras)
      if (e.name == name) return &e;
    return nullptr;
  }
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const std::vector<NamedTensor>& extras = {});

/// Rebuilds the model from the stored descriptor.
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path);

/// As above, but the stored architecture must equal `expected`
/// (ArchitectureMismatch otherwise).
template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path,
                              const ModelSpec& expected);

std::string serialize_checkpoint_bytes(const Model<float>& model,
                                       const std::vector<NamedTensor>& extras);

}  // namespace audiolrp
