#include "las/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "las/errors.hpp"

namespace las {

namespace {

constexpr char kMagic[4] = {'L', 'A', 'S', 'F'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t x) {
  unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                        static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::invalid_argument("parameter store: missing tensor " + name);
  return it->second;
}

Tensor& ParameterStore::get_mut(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw std::invalid_argument("parameter store: missing tensor " + name);
  return it->second;
}

std::int64_t ParameterStore::total_values() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : tensors_) n += t.numel();
  return n;
}

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store, CheckpointDtype dtype) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open for writing: " + path.string());
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, t] : store) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(dtype));
    write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::int64_t d : t.shape) write_u32(os, static_cast<std::uint32_t>(d));
    if (dtype == CheckpointDtype::f32) {
      std::vector<float> buf(t.v.begin(), t.v.end());
      os.write(reinterpret_cast<const char*>(buf.data()),
               static_cast<std::streamsize>(buf.size() * sizeof(float)));
    } else {
      os.write(reinterpret_cast<const char*>(t.v.data()),
               static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    }
  }
  if (!os) throw IoError("checkpoint: write failed: " + path.string());
}

ParameterStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open: " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic in " + path.string());
  }
  const std::uint32_t version = read_u32(is);
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t count = read_u32(is);
  ParameterStore store;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw FormatError("checkpoint: truncated name");
    const std::uint32_t dtype = read_u32(is);
    if (dtype > 1) throw FormatError("checkpoint: bad dtype tag for " + name);
    const std::uint32_t rank = read_u32(is);
    std::vector<std::int64_t> shape;
    std::int64_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape.push_back(static_cast<std::int64_t>(read_u32(is)));
      n *= shape.back();
    }
    Tensor t(shape);
    if (dtype == 0) {
      std::vector<float> buf(static_cast<std::size_t>(n));
      if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)))) {
        throw FormatError("checkpoint: truncated values for " + name);
      }
      for (std::size_t i = 0; i < buf.size(); ++i) t.v[i] = static_cast<double>(buf[i]);
    } else {
      if (!is.read(reinterpret_cast<char*>(t.v.data()), static_cast<std::streamsize>(t.v.size() * sizeof(double)))) {
        throw FormatError("checkpoint: truncated values for " + name);
      }
    }
    store.put(name, std::move(t));
  }
  return store;
}

}  // namespace las
