#include "rmtbvqa/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rmtbvqa/csv.hpp"
#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/random.hpp"

namespace rmtbvqa {

std::string to_string(Degradation d) {
  switch (d) {
    case Degradation::noise: return "noise";
    case Degradation::blur: return "blur";
    case Degradation::contrast: return "contrast";
    case Degradation::jitter: return "jitter";
  }
  return "?";
}

Degradation degradation_from_string(const std::string& s) {
  if (s == "noise") return Degradation::noise;
  if (s == "blur") return Degradation::blur;
  if (s == "contrast") return Degradation::contrast;
  if (s == "jitter") return Degradation::jitter;
  throw InvalidArgument("unknown degradation '" + s + "'");
}

std::string subset_tag(Degradation d) {
  switch (d) {
    case Degradation::contrast: return "A";
    case Degradation::jitter: return "B";
    case Degradation::blur: return "C";
    case Degradation::noise: return "synthetic";
  }
  return "synthetic";
}

void SynthConfig::validate() const {
  if (sources == 0 || width == 0 || height == 0 || frames == 0) {
    throw InvalidArgument("synth: sizes must be positive");
  }
  if (kinds.empty() || levels.empty()) throw InvalidArgument("synth: need at least one kind and level");
  for (int l : levels)
    if (l < 0 || l > 5) throw InvalidArgument("synth: levels must lie in 0..5");
}

double synth_mos(int level) { return 100.0 - 20.0 * level; }

namespace {

std::uint8_t clamp8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

RawVideo synth_reference(std::size_t source_index, const SynthConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, "source:" + std::to_string(source_index)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  // Two separable waves (coarse and fine) plus a colour gradient, drifting over time.
  struct Wave {
    double fx, fy, vx, vy, px, py;
    double amp[3];
  };
  Wave waves[2];
  for (int w = 0; w < 2; ++w) {
    const double scale = w == 0 ? 1.0 : 6.0;
    auto& wv = waves[w];
    wv.fx = two_pi * scale * (0.5 + 1.5 * u(rng)) / double(cfg.width);
    wv.fy = two_pi * scale * (0.5 + 1.5 * u(rng)) / double(cfg.height);
    wv.vx = 3.0 * (u(rng) - 0.5);
    wv.vy = 3.0 * (u(rng) - 0.5);
    wv.px = two_pi * u(rng);
    wv.py = two_pi * u(rng);
    for (double& a : wv.amp) a = (w == 0 ? 70.0 : 30.0) * (0.4 + 0.6 * u(rng));
  }
  double grad[3], base[3];
  for (int c = 0; c < 3; ++c) {
    grad[c] = 60.0 * (u(rng) - 0.5);
    base[c] = 100.0 + 56.0 * u(rng);
  }
  RawVideo v = RawVideo::blank(cfg.width, cfg.height, cfg.frames, "src" + std::to_string(source_index));
  std::vector<double> sx[2], cy[2];
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    for (int w = 0; w < 2; ++w) {
      sx[w].resize(cfg.width);
      cy[w].resize(cfg.height);
      for (std::size_t x = 0; x < cfg.width; ++x)
        sx[w][x] = std::sin(waves[w].fx * (double(x) - waves[w].vx * double(t)) + waves[w].px);
      for (std::size_t y = 0; y < cfg.height; ++y)
        cy[w][y] = std::cos(waves[w].fy * (double(y) - waves[w].vy * double(t)) + waves[w].py);
    }
    for (std::size_t y = 0; y < cfg.height; ++y)
      for (std::size_t x = 0; x < cfg.width; ++x) {
        const double gx = double(x) / double(cfg.width) - 0.5;
        for (int c = 0; c < 3; ++c) {
          const double val = base[c] + grad[c] * gx + waves[0].amp[c] * sx[0][x] * cy[0][y] +
                             waves[1].amp[c] * sx[1][x] * cy[1][y];
          v.at(t, y, x, c) = clamp8(val);
        }
      }
  }
  return v;
}

namespace {

RawVideo add_noise(const RawVideo& ref, double sigma, Rng& rng) {
  RawVideo out = ref;
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& p : out.pixels) p = clamp8(double(p) + n(rng));
  return out;
}

RawVideo blur(const RawVideo& ref, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double ks = 0.0;
  for (int i = -radius; i <= radius; ++i) ks += (k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma)));
  for (auto& e : k) e /= ks;
  RawVideo out = ref;
  const long W = long(ref.width), H = long(ref.height);
  std::vector<double> tmp(ref.width * ref.height);
  for (std::size_t t = 0; t < ref.frame_count; ++t)
    for (int c = 0; c < 3; ++c) {
      for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
          double s = 0.0;
          for (int i = -radius; i <= radius; ++i)
            s += k[i + radius] * ref.at(t, std::size_t(y), std::size_t(std::clamp(x + i, 0L, W - 1)), c);
          tmp[y * W + x] = s;
        }
      for (long y = 0; y < H; ++y)
        for (long x = 0; x < W; ++x) {
          double s = 0.0;
          for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp[std::clamp(y + i, 0L, H - 1) * W + x];
          out.at(t, std::size_t(y), std::size_t(x), c) = clamp8(s);
        }
    }
  return out;
}

RawVideo contrast(const RawVideo& ref, double gain, double shift) {
  RawVideo out = ref;
  for (auto& p : out.pixels) p = clamp8(128.0 + (double(p) - 128.0) * gain + shift);
  return out;
}

RawVideo jitter(const RawVideo& ref, int max_shift, Rng& rng) {
  RawVideo out = ref;
  const long W = long(ref.width), H = long(ref.height);
  for (std::size_t t = 0; t < ref.frame_count; ++t) {
    const long dx = long(uniform_index(rng, 2 * max_shift + 1)) - max_shift;
    const long dy = long(uniform_index(rng, 2 * max_shift + 1)) - max_shift;
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x)
        for (int c = 0; c < 3; ++c)
          out.at(t, std::size_t(y), std::size_t(x), c) =
              ref.at(t, std::size_t(std::clamp(y + dy, 0L, H - 1)), std::size_t(std::clamp(x + dx, 0L, W - 1)), c);
  }
  return out;
}

}  // namespace

RawVideo degrade(const RawVideo& ref, Degradation kind, int level, std::uint64_t seed) {
  if (level < 0) throw InvalidArgument("degrade: negative level");
  if (level == 0) return ref;
  Rng rng(seed);
  switch (kind) {
    case Degradation::noise: return add_noise(ref, 4.0 * std::pow(2.0, level - 1), rng);
    case Degradation::blur: return blur(ref, 0.75 * level);
    case Degradation::contrast: return contrast(ref, 1.0 - 0.18 * level, 6.0 * level);
    case Degradation::jitter: return jitter(ref, 2 * level, rng);
  }
  return ref;
}

void write_synth_corpus(const std::filesystem::path& dir, const SynthConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(dir / "videos");
  std::vector<VideoEntry> videos;
  std::vector<LabelEntry> labels;
  for (std::size_t s = 0; s < cfg.sources; ++s) {
    RawVideo ref = synth_reference(s, cfg);
    const std::string ref_id = ref.source_id + "_ref";
    write_video(dir / "videos" / (ref_id + ".rmtv"), ref);
    videos.push_back({ref_id, ref.source_id, "reference", "videos/" + ref_id + ".rmtv", ""});
    for (Degradation kind : cfg.kinds) {
      for (int level : cfg.levels) {
        const std::string tag = to_string(kind) + std::to_string(level);
        const std::string id = ref.source_id + "_" + tag;
        RawVideo v = degrade(ref, kind, level, derive_seed(cfg.seed, "degrade:" + id));
        write_video(dir / "videos" / (id + ".rmtv"), v);
        videos.push_back({id, ref.source_id, tag, "videos/" + id + ".rmtv", ref_id});
        labels.push_back({id, subset_tag(kind), ref.source_id, synth_mos(level)});
      }
    }
  }
  write_video_list(dir / "videos.csv", videos);
  write_labels(dir / "labels.csv", labels);
}

std::vector<VideoEntry> read_video_list(const std::filesystem::path& path) {
  auto t = csv::read(path, {"video_id", "source_id", "enhancement_tag", "path", "reference_video_id"});
  const std::size_t id = t.column("video_id"), src = t.column("source_id"),
                    tag = t.column("enhancement_tag"), p = t.column("path"),
                    ref = t.column("reference_video_id");
  std::vector<VideoEntry> out;
  for (const auto& r : t.rows) out.push_back({r[id], r[src], r[tag], r[p], r[ref]});
  return out;
}

void write_video_list(const std::filesystem::path& path, const std::vector<VideoEntry>& v) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : v) rows.push_back({e.video_id, e.source_id, e.enhancement_tag, e.path, e.reference_video_id});
  csv::write(path, {"video_id", "source_id", "enhancement_tag", "path", "reference_video_id"}, rows);
}

std::vector<LabelEntry> read_labels(const std::filesystem::path& path) {
  auto t = csv::read(path, {"video_id", "subset_tag", "source_id", "mos"});
  const std::size_t id = t.column("video_id"), sub = t.column("subset_tag"),
                    src = t.column("source_id"), mos = t.column("mos");
  std::vector<LabelEntry> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    out.push_back({r[id], r[sub], r[src],
                   csv::parse_real(r[mos], path.string() + ":" + std::to_string(t.line_numbers[i]))});
  }
  return out;
}

void write_labels(const std::filesystem::path& path, const std::vector<LabelEntry>& v) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : v) rows.push_back({e.video_id, e.subset_tag, e.source_id, csv::format_real(e.mos)});
  csv::write(path, {"video_id", "subset_tag", "source_id", "mos"}, rows);
}

}  // namespace rmtbvqa
