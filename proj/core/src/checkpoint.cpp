#include "tsfm/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "tsfm/errors.hpp"

namespace tsfm {

namespace {

constexpr char kMagic[8] = {'T', 'S', 'F', 'M', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const char* what) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) raise(errc::corrupt_file, std::string("truncated checkpoint while reading ") + what);
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) raise(errc::missing_file, "cannot open for write: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put(os, kVersion);
  put(os, static_cast<uint64_t>(ckpt.config_json.size()));
  os.write(ckpt.config_json.data(), static_cast<std::streamsize>(ckpt.config_json.size()));
  put(os, static_cast<uint64_t>(ckpt.tensors.size()));
  for (const auto& [name, tensor] : ckpt.tensors) {
    put(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(os, static_cast<uint32_t>(tensor.rank()));
    for (int64_t d : tensor.shape()) put(os, d);
    os.write(reinterpret_cast<const char*>(tensor.data()),
             static_cast<std::streamsize>(tensor.size() * static_cast<int64_t>(sizeof(double))));
  }
  if (!os) raise(errc::corrupt_file, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(errc::missing_file, "checkpoint not found: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    raise(errc::corrupt_file, "bad magic in " + path.string());
  const auto version = get<uint32_t>(is, "version");
  if (version != kVersion)
    raise(errc::version_mismatch, "checkpoint version " + std::to_string(version) +
                                      ", expected " + std::to_string(kVersion));
  Checkpoint ckpt;
  const auto cfg_len = get<uint64_t>(is, "config length");
  ckpt.config_json.resize(cfg_len);
  is.read(ckpt.config_json.data(), static_cast<std::streamsize>(cfg_len));
  if (!is) raise(errc::corrupt_file, "truncated config blob in " + path.string());
  const auto count = get<uint64_t>(is, "tensor count");
  for (uint64_t i = 0; i < count; ++i) {
    const auto name_len = get<uint32_t>(is, "tensor name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) raise(errc::corrupt_file, "truncated tensor name in " + path.string());
    const auto rank = get<uint32_t>(is, "tensor rank");
    std::vector<int64_t> shape;
    shape.reserve(rank);
    for (uint32_t r = 0; r < rank; ++r) shape.push_back(get<int64_t>(is, "tensor dim"));
    const int64_t n = shape_product(shape);
    std::vector<double> data(static_cast<size_t>(n));
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(n * static_cast<int64_t>(sizeof(double))));
    if (!is) raise(errc::corrupt_file, "truncated tensor data in " + path.string());
    ckpt.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  return ckpt;
}

}  // namespace tsfm
