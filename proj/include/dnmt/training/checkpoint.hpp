#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dnmt/numerics/optim.hpp"
#include "dnmt/util/keyvalue.hpp"

namespace dnmt::training {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class DType : std::uint8_t { kFloat32 = 0, kFloat64 = 1 };

struct StoredTensor {
  std::string name;
  numerics::Shape shape;
  std::variant<std::vector<float>, std::vector<double>> values;

  DType dtype() const { return values.index() == 0 ? DType::kFloat32 : DType::kFloat64; }
};

// On-disk layout (little endian):
//   "DNMT" | u32 version | u64 length + config text | u32 tensor count |
//   per tensor: u32 length + name, u8 dtype, u8 rank, u64 dims[rank], data |
//   u32 CRC32 of every preceding byte.
struct CheckpointFile {
  util::KeyValues config;
  std::vector<StoredTensor> tensors;

  const StoredTensor* find(const std::string& name) const;
};

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
// Throws Error on bad magic, unsupported version, truncation or checksum
// mismatch.
CheckpointFile read_checkpoint(const std::filesystem::path& path);

template <typename T>
StoredTensor store_tensor(const std::string& name, const numerics::Shape& shape,
                          std::span<const T> data);

// Copies stored values into every parameter of `params`. Throws ShapeError
// naming the parameter when a tensor is missing, has another shape or
// another dtype.
template <typename T>
void restore_parameters(numerics::ParamStore<T>& params, const CheckpointFile& file);

}  // namespace dnmt::training
