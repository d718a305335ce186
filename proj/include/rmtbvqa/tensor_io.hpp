#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>

#include "rmtbvqa/tensor.hpp"

namespace rmtbvqa {

// RMTT binary layout:
//   "RMTT" | u8 version (1) | u8 dtype | u8 ndim |
//   ndim x u64 LE dims | raw little-endian data
// dtype 0 is f32 (patches, embeddings); dtype 1 is f64, used for checkpoints
// so that a resumed run continues bit-for-bit.
inline constexpr std::uint8_t kRmttVersion = 1;

enum class RmttDtype : std::uint8_t { f32 = 0, f64 = 1 };

void write_tensor(std::ostream& out, const Tensor& t, RmttDtype dtype = RmttDtype::f32);
Tensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t,
                 RmttDtype dtype = RmttDtype::f32);
Tensor load_tensor(const std::filesystem::path& path);

/// Writes values under the given shape without building a Tensor.
void save_raw(const std::filesystem::path& path, const Shape& shape, std::span<const float> data);
void save_raw(const std::filesystem::path& path, const Shape& shape, std::span<const double> data,
              RmttDtype dtype = RmttDtype::f32);

struct RawArray {
  Shape shape;
  std::vector<Real> data;
};
/// Reads any RMTT file into host values.
RawArray load_raw(const std::filesystem::path& path);

}  // namespace rmtbvqa
