#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "audiolrp/tensor.hpp"

namespace audiolrp {

/// Writes `bytes` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

/// One named tensor in the little-endian blob convention shared by
/// checkpoints, spectrogram dumps and relevance maps:
///   u32 name length, name bytes, u8 dtype, u32 rank, u64 extents, values.
struct NamedTensor {
  std::string name;
  std::variant<TensorF, TensorD> value;

  template <typename T>
  const Tensor<T>& as() const;
};

class BlobWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void raw(const std::string& s) { out_ += s; }
  void str(const std::string& s);
  void tensor(const NamedTensor& t);

  const std::string& bytes() const { return out_; }

 private:
  std::string out_;
};

/// Bounds-checked reader; any read past the end throws FormatError.
class BlobReader {
 public:
  explicit BlobReader(std::string bytes) : in_(std::move(bytes)) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::string raw(std::size_t n);
  std::string str();
  NamedTensor tensor();
  bool at_end() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const;
  std::string in_;
  std::size_t pos_ = 0;
};

/// Standalone tensor file: magic "ALRPTNSR", u32 version, u32 count, blobs,
/// "END!" trailer.
void save_tensors(const std::filesystem::path& path,
                  const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_tensors(const std::filesystem::path& path);

}  // namespace audiolrp
