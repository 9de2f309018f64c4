#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "las/tensor.hpp"

namespace las {

// Named-tensor store backing model parameters and checkpoints. std::map
// keeps iteration order sorted by name, so update loops and serialization
// are deterministic.
class ParameterStore {
 public:
  void put(const std::string& name, Tensor t) { tensors_[name] = std::move(t); }
  const Tensor& get(const std::string& name) const;
  Tensor& get_mut(const std::string& name);
  bool has(const std::string& name) const { return tensors_.count(name) != 0; }
  std::size_t size() const { return tensors_.size(); }
  std::int64_t total_values() const;

  auto begin() const { return tensors_.begin(); }
  auto end() const { return tensors_.end(); }
  auto begin() { return tensors_.begin(); }
  auto end() { return tensors_.end(); }

 private:
  std::map<std::string, Tensor> tensors_;
};

enum class CheckpointDtype : std::uint32_t { f32 = 0, f64 = 1 };

// "LASF" container: magic, version u32, entry count u32, then per entry
// {name length u32, name bytes, dtype u32 (0=f32, 1=f64), rank u32,
// dims u32..., raw little-endian values}. Round trips byte-exactly.
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     CheckpointDtype dtype = CheckpointDtype::f32);
ParameterStore load_checkpoint(const std::filesystem::path& path);

}  // namespace las
