#include "rmtbvqa/patches.hpp"

#include <cmath>

#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/random.hpp"
#include "rmtbvqa/tensor_io.hpp"

namespace rmtbvqa {

std::string to_string(Resolution r) { return r == Resolution::full ? "full" : "down"; }

Resolution resolution_from_string(const std::string& s) {
  if (s == "full") return Resolution::full;
  if (s == "down") return Resolution::down;
  throw FormatError("unknown resolution tag '" + s + "'");
}

GridOffset grid_offset(std::size_t width, std::size_t height, std::uint64_t seed,
                       const std::string& source_id) {
  Rng rng(derive_seed(seed, "grid:" + source_id));
  GridOffset off;
  if (width >= kFullSize) off.x = uniform_index(rng, width % kFullSize + 1);
  if (height >= kFullSize) off.y = uniform_index(rng, height % kFullSize + 1);
  return off;
}

namespace {

std::string window_id(const std::string& video_id, std::size_t x, std::size_t y, std::size_t t) {
  return video_id + "_x" + std::to_string(x) + "_y" + std::to_string(y) + "_t" + std::to_string(t);
}

Patch cut(const RawVideo& v, std::size_t x0, std::size_t y0, std::size_t t0) {
  Patch p;
  p.size = kFullSize;
  p.frames = kPatchFrames;
  p.x0 = x0;
  p.y0 = y0;
  p.t0 = t0;
  p.source_id = v.source_id;
  p.pixels.resize(kPatchFrames * 3 * kFullSize * kFullSize);
  for (std::size_t t = 0; t < kPatchFrames; ++t)
    for (std::size_t y = 0; y < kFullSize; ++y)
      for (std::size_t x = 0; x < kFullSize; ++x)
        for (std::size_t c = 0; c < 3; ++c) p.at(t, c, y, x) = v.at(t0 + t, y0 + y, x0 + x, c);
  return p;
}

}  // namespace

std::vector<PatchPair> extract_patches_at(const RawVideo& v, const RawVideo* ref, GridOffset offset,
                                          const ExtractNames& names) {
  v.validate();
  if (v.width < kFullSize || v.height < kFullSize || v.frame_count < kPatchFrames) {
    throw InvalidArgument("video " + names.video_id + " (" + std::to_string(v.width) + "x" +
                          std::to_string(v.height) + "x" + std::to_string(v.frame_count) +
                          ") is smaller than one 256x256x72 window");
  }
  if (ref != nullptr) {
    ref->validate();
    if (ref->width != v.width || ref->height != v.height || ref->frame_count != v.frame_count) {
      throw InvalidArgument("reference for " + names.video_id + " has different dimensions");
    }
  }
  if (offset.x + kFullSize > v.width || offset.y + kFullSize > v.height) {
    throw InvalidArgument("grid offset leaves no room for a window");
  }
  std::vector<PatchPair> out;
  for (std::size_t t0 = 0; t0 + kPatchFrames <= v.frame_count; t0 += kPatchFrames) {
    for (std::size_t y0 = offset.y; y0 + kFullSize <= v.height; y0 += kFullSize) {
      for (std::size_t x0 = offset.x; x0 + kFullSize <= v.width; x0 += kFullSize) {
        PatchPair pair;
        pair.enhanced = cut(v, x0, y0, t0);
        pair.enhanced.patch_id = window_id(names.video_id, x0, y0, t0);
        pair.enhanced.enhancement_tag = names.enhancement_tag;
        if (ref != nullptr) {
          Patch r = cut(*ref, x0, y0, t0);
          r.patch_id = window_id(names.ref_video_id, x0, y0, t0);
          r.source_id = v.source_id;
          r.enhancement_tag = "reference";
          pair.enhanced.reference_link = r.patch_id;
          pair.reference = std::move(r);
        }
        out.push_back(std::move(pair));
      }
    }
  }
  return out;
}

std::vector<PatchPair> extract_patches(const RawVideo& v, const RawVideo* ref, std::uint64_t seed,
                                       const ExtractNames& names) {
  if (v.width < kFullSize || v.height < kFullSize) {
    return extract_patches_at(v, ref, {}, names);  // raises the size error
  }
  return extract_patches_at(v, ref, grid_offset(v.width, v.height, seed, v.source_id), names);
}

Patch downsample_patch(const Patch& p) {
  if (p.resolution != Resolution::full || p.size != kFullSize) {
    throw InvalidArgument("downsample_patch: " + p.patch_id + " is not a full-resolution patch");
  }
  Patch d = p;
  d.resolution = Resolution::down;
  d.size = kDownSize;
  d.patch_id = p.patch_id + "_down";
  d.reference_link = p.patch_id;
  d.pixels.assign(p.frames * 3 * kDownSize * kDownSize, 0);
  for (std::size_t t = 0; t < p.frames; ++t)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < kDownSize; ++y)
        for (std::size_t x = 0; x < kDownSize; ++x) {
          const unsigned s = p.at(t, c, 2 * y, 2 * x) + p.at(t, c, 2 * y, 2 * x + 1) +
                             p.at(t, c, 2 * y + 1, 2 * x) + p.at(t, c, 2 * y + 1, 2 * x + 1);
          d.at(t, c, y, x) = static_cast<std::uint8_t>((s + 2) / 4);
        }
  return d;
}

Patch augment_rotate(const Patch& p, int k) {
  k = ((k % 4) + 4) % 4;
  if (k == 0) return p;
  Patch r = p;
  r.patch_id = p.patch_id + "_rot" + std::to_string(90 * k);
  r.reference_link = p.patch_id;
  const std::size_t n = p.size;
  for (std::size_t t = 0; t < p.frames; ++t)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < n; ++y)
        for (std::size_t x = 0; x < n; ++x) {
          // Counterclockwise quarter turn: new(x, y) = old(n-1-y, x).
          std::size_t sx = x, sy = y;
          for (int i = 0; i < k; ++i) {
            const std::size_t px = n - 1 - sy, py = sx;
            sx = px;
            sy = py;
          }
          r.at(t, c, y, x) = p.at(t, c, sy, sx);
        }
  return r;
}

void save_patch(const std::filesystem::path& path, const Patch& p) {
  std::vector<float> values(p.pixels.begin(), p.pixels.end());
  save_raw(path, {p.frames, 3, p.size, p.size}, std::span<const float>(values));
}

std::vector<std::uint8_t> load_patch_pixels(const std::filesystem::path& path, std::size_t& size,
                                            std::size_t& frames) {
  RawArray a = load_raw(path);
  if (a.shape.size() != 4 || a.shape[1] != 3 || a.shape[2] != a.shape[3]) {
    throw FormatError(path.string() + ": patch tensor must be [frames, 3, S, S], got " +
                      shape_str(a.shape));
  }
  frames = a.shape[0];
  size = a.shape[2];
  std::vector<std::uint8_t> px(a.data.size());
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double v = a.data[i];
    if (!(v >= 0.0 && v <= 255.0) || v != std::floor(v)) {
      throw FormatError(path.string() + ": patch value " + std::to_string(v) + " is not an 8-bit level");
    }
    px[i] = static_cast<std::uint8_t>(v);
  }
  return px;
}

}  // namespace rmtbvqa
