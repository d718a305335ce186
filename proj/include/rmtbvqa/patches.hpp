#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rmtbvqa/video.hpp"

namespace rmtbvqa {

inline constexpr std::size_t kPatchFrames = 72;
inline constexpr std::size_t kFullSize = 256;
inline constexpr std::size_t kDownSize = 128;

enum class Resolution { full, down };
std::string to_string(Resolution r);
Resolution resolution_from_string(const std::string& s);

/// Square spatio-temporal block, pixels stored planar as [frames][3][size][size].
struct Patch {
  std::string patch_id;
  std::string source_id;
  std::string enhancement_tag;
  Resolution resolution = Resolution::full;
  std::size_t size = kFullSize;
  std::size_t frames = kPatchFrames;
  std::string reference_link;  // empty when none
  std::optional<double> proxy_score;
  // Window origin in the source video.
  std::size_t x0 = 0, y0 = 0, t0 = 0;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[((t * 3 + c) * size + y) * size + x];
  }
  std::uint8_t& at(std::size_t t, std::size_t c, std::size_t y, std::size_t x) {
    return pixels[((t * 3 + c) * size + y) * size + x];
  }
};

struct GridOffset {
  std::size_t x = 0, y = 0;
};

/// Random offset of the window grid, drawn from [0, W mod 256] x [0, H mod 256].
/// Keyed on (seed, source_id) so every variant of one source shares windows
/// with its reference.
GridOffset grid_offset(std::size_t width, std::size_t height, std::uint64_t seed,
                       const std::string& source_id);

struct ExtractNames {
  std::string video_id;
  std::string enhancement_tag;
  std::string ref_video_id;  // used when a reference is given
};

struct PatchPair {
  Patch enhanced;
  std::optional<Patch> reference;
};

/// Non-overlapping 256x256x72 windows on a grid starting at `offset`; full
/// 72-frame strides from frame 0. Reference patches are co-located with the
/// enhanced ones. Throws InvalidArgument when the video (or the offset grid)
/// cannot hold one window or when ref dimensions differ.
std::vector<PatchPair> extract_patches_at(const RawVideo& v, const RawVideo* ref, GridOffset offset,
                                          const ExtractNames& names);
std::vector<PatchPair> extract_patches(const RawVideo& v, const RawVideo* ref, std::uint64_t seed,
                                       const ExtractNames& names);

/// 2x2 box average per frame with round-half-up; links back to the input.
Patch downsample_patch(const Patch& p);

/// Rotates every frame by 90k degrees counterclockwise. In (x, y) image
/// coordinates a pixel at (0, 0) lands at (0, H-1) for k = 1.
Patch augment_rotate(const Patch& p, int k);

/// Patch file: RMTT f32 tensor [frames, 3, size, size] with values 0..255.
void save_patch(const std::filesystem::path& path, const Patch& p);
/// Loads pixels only; metadata comes from the manifest.
std::vector<std::uint8_t> load_patch_pixels(const std::filesystem::path& path, std::size_t& size,
                                            std::size_t& frames);

}  // namespace rmtbvqa
