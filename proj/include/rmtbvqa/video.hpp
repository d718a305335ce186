#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rmtbvqa {

/// 8-bit RGB video, frame-major, each frame row-major with interleaved RGB.
struct RawVideo {
  std::size_t width = 0, height = 0, frame_count = 0;
  std::string source_id;
  std::vector<std::uint8_t> pixels;

  static RawVideo blank(std::size_t width, std::size_t height, std::size_t frames,
                        std::string source_id = {});
  std::size_t frame_bytes() const { return width * height * 3; }
  std::uint8_t* frame(std::size_t t) { return pixels.data() + t * frame_bytes(); }
  const std::uint8_t* frame(std::size_t t) const { return pixels.data() + t * frame_bytes(); }
  std::uint8_t& at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) {
    return pixels[((t * height + y) * width + x) * 3 + c];
  }
  std::uint8_t at(std::size_t t, std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[((t * height + y) * width + x) * 3 + c];
  }
  /// Throws FormatError unless sizes are positive and the buffer length matches.
  void validate() const;
};

// RMTV file: ASCII header line "RMTV <width> <height> <frames>\n" followed by
// raw RGB24 bytes. The source id is not stored in the file.
void write_video(const std::filesystem::path& path, const RawVideo& v);
RawVideo read_video(const std::filesystem::path& path, std::string source_id = {});

}  // namespace rmtbvqa
