#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rmtbvqa/video.hpp"

namespace rmtbvqa {

enum class Degradation { noise, blur, contrast, jitter };
std::string to_string(Degradation d);
Degradation degradation_from_string(const std::string& s);
/// Evaluation subset a degradation stands in for: contrast -> A, jitter -> B,
/// blur -> C, noise -> synthetic.
std::string subset_tag(Degradation d);

struct SynthConfig {
  std::size_t sources = 6;
  std::size_t width = 256, height = 256, frames = 72;
  std::vector<Degradation> kinds{Degradation::noise};
  std::vector<int> levels{1, 2, 3, 4};  // level 0 is the identity
  std::uint64_t seed = 0;

  void validate() const;
};

/// Smooth moving sinusoid and gradient content, distinct per source index.
RawVideo synth_reference(std::size_t source_index, const SynthConfig& cfg);

/// Severity grades per level l >= 1: noise sigma 4*2^(l-1); Gaussian blur
/// sigma 0.75*l; contrast scaled by 1-0.18*l around mid-grey with a +6*l
/// brightness shift; per-frame translation jitter up to 2*l pixels.
/// Level 0 returns the input unchanged.
RawVideo degrade(const RawVideo& ref, Degradation kind, int level, std::uint64_t seed);

/// Quality known by construction: 100 - 20 * level.
double synth_mos(int level);

struct VideoEntry {
  std::string video_id, source_id, enhancement_tag, path, reference_video_id;
};
struct LabelEntry {
  std::string video_id, subset_tag, source_id;
  double mos = 0.0;
};

/// Writes videos/<id>.rmtv, videos.csv and labels.csv under `dir`.
void write_synth_corpus(const std::filesystem::path& dir, const SynthConfig& cfg);

std::vector<VideoEntry> read_video_list(const std::filesystem::path& path);
void write_video_list(const std::filesystem::path& path, const std::vector<VideoEntry>& v);
std::vector<LabelEntry> read_labels(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, const std::vector<LabelEntry>& v);

}  // namespace rmtbvqa
