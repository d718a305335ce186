#include "rmtbvqa/video.hpp"

#include <fstream>
#include <sstream>

#include "rmtbvqa/errors.hpp"

namespace rmtbvqa {

RawVideo RawVideo::blank(std::size_t width, std::size_t height, std::size_t frames,
                         std::string source_id) {
  RawVideo v;
  v.width = width;
  v.height = height;
  v.frame_count = frames;
  v.source_id = std::move(source_id);
  v.pixels.assign(width * height * 3 * frames, 0);
  v.validate();
  return v;
}

void RawVideo::validate() const {
  if (width == 0 || height == 0 || frame_count == 0) {
    throw FormatError("video dimensions must be positive");
  }
  if (pixels.size() != width * height * 3 * frame_count) {
    throw FormatError("video buffer holds " + std::to_string(pixels.size()) + " bytes, expected " +
                      std::to_string(width * height * 3 * frame_count));
  }
}

void write_video(const std::filesystem::path& path, const RawVideo& v) {
  v.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "RMTV " << v.width << ' ' << v.height << ' ' << v.frame_count << '\n';
  out.write(reinterpret_cast<const char*>(v.pixels.data()),
            static_cast<std::streamsize>(v.pixels.size()));
  if (!out) throw Error("write failed for " + path.string());
}

RawVideo read_video(const std::filesystem::path& path, std::string source_id) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open video " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw FormatError(path.string() + ": missing RMTV header");
  std::istringstream hs(header);
  std::string magic;
  long long w = 0, h = 0, f = 0;
  if (!(hs >> magic >> w >> h >> f) || magic != "RMTV" || w <= 0 || h <= 0 || f <= 0) {
    throw FormatError(path.string() + ": malformed RMTV header '" + header + "'");
  }
  RawVideo v;
  v.width = static_cast<std::size_t>(w);
  v.height = static_cast<std::size_t>(h);
  v.frame_count = static_cast<std::size_t>(f);
  v.source_id = std::move(source_id);
  v.pixels.resize(v.width * v.height * 3 * v.frame_count);
  in.read(reinterpret_cast<char*>(v.pixels.data()), static_cast<std::streamsize>(v.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(v.pixels.size())) {
    throw FormatError(path.string() + ": truncated pixel data");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": trailing bytes after pixel data");
  }
  return v;
}

}  // namespace rmtbvqa
