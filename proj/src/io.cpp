#include "audiolrp/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace audiolrp {

namespace fs = std::filesystem;

namespace {
constexpr char kTensorMagic[] = "ALRPTNSR";
constexpr char kTrailer[] = "END!";
constexpr std::uint32_t kTensorVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");
}  // namespace

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <typename T>
const Tensor<T>& NamedTensor::as() const {
  if (auto* t = std::get_if<Tensor<T>>(&value)) return *t;
  throw FormatError("tensor '" + name + "' has an unexpected dtype");
}
template const TensorF& NamedTensor::as<float>() const;
template const TensorD& NamedTensor::as<double>() const;

void BlobWriter::u32(std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out_.append(b, 4);
}

void BlobWriter::u64(std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out_.append(b, 8);
}

void BlobWriter::str(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  out_ += s;
}

void BlobWriter::tensor(const NamedTensor& t) {
  str(t.name);
  std::visit(
      [&](const auto& tensor) {
        using V = typename std::decay_t<decltype(tensor)>::value_type;
        u8(static_cast<std::uint8_t>(std::is_same_v<V, float> ? DType::F32 : DType::F64));
        u32(static_cast<std::uint32_t>(tensor.rank()));
        for (auto e : tensor.shape()) u64(e);
        out_.append(reinterpret_cast<const char*>(tensor.data().data()),
                    tensor.size() * sizeof(V));
      },
      t.value);
}

void BlobReader::need(std::size_t n) const {
  if (n > in_.size() - pos_) throw FormatError("unexpected end of data (file truncated or corrupt)");
}

std::uint8_t BlobReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(in_[pos_++]);
}

std::uint32_t BlobReader::u32() {
  need(4);
  std::uint32_t v;
  std::memcpy(&v, in_.data() + pos_, 4);
  pos_ += 4;
  return v;
}

std::uint64_t BlobReader::u64() {
  need(8);
  std::uint64_t v;
  std::memcpy(&v, in_.data() + pos_, 8);
  pos_ += 8;
  return v;
}

std::string BlobReader::raw(std::size_t n) {
  need(n);
  std::string s = in_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::string BlobReader::str() { return raw(u32()); }

NamedTensor BlobReader::tensor() {
  NamedTensor t;
  t.name = str();
  const auto dtype = u8();
  if (dtype > 1) throw FormatError("unknown dtype tag in tensor '" + t.name + "'");
  const auto rank = u32();
  if (rank == 0 || rank > 8) throw FormatError("bad rank in tensor '" + t.name + "'");
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& e : shape) {
    e = u64();
    if (e == 0 || e > (std::size_t{1} << 40)) throw FormatError("bad extent in tensor '" + t.name + "'");
    count *= e;
  }
  auto read_values = [&](auto zero) {
    using V = decltype(zero);
    need(count * sizeof(V));
    std::vector<V> values(count);
    std::memcpy(values.data(), in_.data() + pos_, count * sizeof(V));
    pos_ += count * sizeof(V);
    return Tensor<V>(shape, std::move(values));
  };
  if (dtype == 0) t.value = read_values(0.0f);
  else t.value = read_values(0.0);
  return t;
}

void save_tensors(const fs::path& path, const std::vector<NamedTensor>& tensors) {
  BlobWriter w;
  w.raw(std::string(kTensorMagic, 8));
  w.u32(kTensorVersion);
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) w.tensor(t);
  w.raw(kTrailer);
  write_file_atomic(path, w.bytes());
}

std::vector<NamedTensor> load_tensors(const fs::path& path) {
  BlobReader r(read_file(path));
  if (r.raw(8) != std::string(kTensorMagic, 8)) throw FormatError(path.string() + ": not a tensor file");
  if (r.u32() != kTensorVersion) throw FormatError(path.string() + ": unsupported tensor file version");
  const auto n = r.u32();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < n; ++i) out.push_back(r.tensor());
  if (r.raw(4) != kTrailer || !r.at_end()) throw FormatError(path.string() + ": corrupt trailer");
  return out;
}

}  // namespace audiolrp
