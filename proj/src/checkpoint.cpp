#include "audiolrp/checkpoint.hpp"

#include <map>

namespace audiolrp {

namespace {
constexpr char kMagic[] = "ALRPCKPT";
constexpr char kTrailer[] = "END!";
constexpr std::uint32_t kVersion = 1;

template <typename T>
std::string serialize(const Model<T>& model, const std::vector<NamedTensor>& extras) {
  BlobWriter w;
  w.raw(std::string(kMagic, 8));
  w.u32(kVersion);
  w.str(model.spec().descriptor());
  w.u64(model.spec().hash());
  std::vector<NamedTensor> blobs;
  for_each_parameter(model, [&](const std::string& name, const Tensor<T>& t) {
    blobs.push_back({name, t});
  });
  for (const auto& e : extras) {
    if (e.name.rfind("layer", 0) == 0)
      throw ConfigError("extra tensor name '" + e.name + "' collides with parameters");
    blobs.push_back(e);
  }
  w.u32(static_cast<std::uint32_t>(blobs.size()));
  for (const auto& b : blobs) w.tensor(b);
  w.raw(kTrailer);
  return w.bytes();
}

template <typename T>
Checkpoint<T> parse(const std::filesystem::path& path, const ModelSpec* expected) {
  BlobReader r(read_file(path));
  if (r.raw(8) != std::string(kMagic, 8)) throw FormatError(path.string() + ": not a checkpoint");
  if (r.u32() != kVersion) throw FormatError(path.string() + ": unsupported checkpoint version");
  const std::string descriptor = r.str();
  const std::uint64_t hash = r.u64();
  ModelSpec spec = ModelSpec::parse_descriptor(descriptor);
  if (spec.hash() != hash) throw FormatError(path.string() + ": architecture hash mismatch (corrupt header)");
  if (expected && !(*expected == spec)) {
    throw ArchitectureMismatch(path.string() + ": stored architecture '" + descriptor +
                               "' differs from expected '" + expected->descriptor() + "'");
  }
  const auto count = r.u32();
  std::map<std::string, NamedTensor> blobs;
  std::vector<NamedTensor> extras;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto t = r.tensor();
    if (t.name.rfind("layer", 0) == 0) blobs.emplace(t.name, std::move(t));
    else extras.push_back(std::move(t));
  }
  if (r.raw(4) != kTrailer || !r.at_end()) throw FormatError(path.string() + ": corrupt trailer");

  Model<T> model(spec);
  std::size_t used = 0;
  for_each_parameter(model, [&](const std::string& name, Tensor<T>& dst) {
    auto it = blobs.find(name);
    if (it == blobs.end()) throw FormatError(path.string() + ": missing parameter " + name);
    const auto& src = it->second.template as<T>();
    if (src.shape() != dst.shape())
      throw ArchitectureMismatch(path.string() + ": parameter " + name + " has shape " +
                                 shape_string(src.shape()));
    dst = src;
    ++used;
  });
  if (used != blobs.size()) throw FormatError(path.string() + ": unexpected parameter blobs");
  return Checkpoint<T>{std::move(model), std::move(extras)};
}
}  // namespace

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const std::vector<NamedTensor>& extras) {
  write_file_atomic(path, serialize(model, extras));
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  return parse<T>(path, nullptr);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path, const ModelSpec& expected) {
  return parse<T>(path, &expected);
}

std::string serialize_checkpoint_bytes(const Model<float>& model,
                                       const std::vector<NamedTensor>& extras) {
  return serialize(model, extras);
}

template void save_checkpoint(const std::filesystem::path&, const Model<float>&,
                              const std::vector<NamedTensor>&);
template void save_checkpoint(const std::filesystem::path&, const Model<double>&,
                              const std::vector<NamedTensor>&);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&);
template Checkpoint<float> load_checkpoint(const std::filesystem::path&, const ModelSpec&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&, const ModelSpec&);

}  // namespace audiolrp
