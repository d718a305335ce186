#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rmtbvqa/patches.hpp"
#include "rmtbvqa/tensor.hpp"
#include "rmtbvqa/video.hpp"

namespace rmtbvqa {

enum class EncoderKind { seeded_projection, tiny_conv, precomputed };
std::string to_string(EncoderKind k);
EncoderKind encoder_kind_from_string(const std::string& s);

struct EncoderSpec {
  EncoderKind kind = EncoderKind::seeded_projection;
  std::size_t D = 64;
  std::uint64_t seed = 0;
  std::string precomputed_index;  // index CSV for the precomputed kind
};

/// Embeddings keyed by (item id, frame index).
class PrecomputedTable {
 public:
  /// Index CSV columns: patch_id, frame_idx, tensor_path, row. Each
  /// tensor_path (relative to the index) is an RMTT [rows x D] matrix.
  /// Throws FormatError when a tensor's width differs from D.
  static PrecomputedTable load(const std::filesystem::path& index, std::size_t D);

  void insert(const std::string& id, std::size_t frame, std::vector<Real> v);
  /// Throws InvalidArgument for a missing key.
  const std::vector<Real>& lookup(const std::string& id, std::size_t frame) const;
  std::size_t size() const { return table_.size(); }
  std::size_t dim() const { return D_; }

 private:
  std::size_t D_ = 0;
  std::map<std::pair<std::string, std::size_t>, std::vector<Real>> table_;
};

/// Frozen per-frame encoder. Holds no trainable tensors; outputs never carry
/// gradient.
class FrameEncoder {
 public:
  explicit FrameEncoder(EncoderSpec spec);

  const EncoderSpec& spec() const { return spec_; }
  std::size_t dim() const { return spec_.D; }

  /// Frame given planar [3][H][W] in 0..255 units.
  std::vector<Real> encode_planar(std::span<const Real> chw, std::size_t H, std::size_t W) const;
  /// Frame given interleaved H x W x 3 in 0..255 units.
  std::vector<Real> encode_frame(std::span<const Real> hwc, std::size_t H, std::size_t W) const;
  /// Precomputed lookup by item id and frame index.
  std::vector<Real> encode_frame(const std::string& id, std::size_t frame) const;

  /// [frames x D], order preserved.
  Tensor encode_patch(const Patch& p) const;
  Tensor encode_video(const RawVideo& v, const std::string& video_id) const;

  /// Hash of the frozen weights, for before/after checks.
  std::uint64_t fingerprint() const;

 private:
  struct Conv {
    std::size_t in, out, k;
    std::vector<Real> w, b;  // w: [out][in][k][k]
  };
  std::vector<Real> conv_features(std::span<const Real> chw, std::size_t H, std::size_t W) const;

  EncoderSpec spec_;
  std::vector<Real> projection_;  // seeded_projection: [D x 3072]; tiny_conv: [D x 32]
  std::vector<Conv> convs_;
  std::shared_ptr<const PrecomputedTable> table_;
};

inline constexpr std::size_t kPoolGrid = 32;

}  // namespace rmtbvqa
