#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "rmtbvqa/encoder.hpp"
#include "rmtbvqa/eval.hpp"
#include "rmtbvqa/proxy.hpp"
#include "rmtbvqa/rmvit.hpp"
#include "rmtbvqa/synth.hpp"
#include "rmtbvqa/trainer.hpp"

namespace rmtbvqa {

inline constexpr const char* kVersion = "0.1.0";

/// Every tunable of the pipeline, serialized as one flat JSON object.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  SynthConfig synth;
  std::vector<int> rotations{1, 2, 3};

  std::string metric = "psnr";
  std::string metric_command;  // external tool; empty selects PSNR
  std::string metric_pattern;
  double metric_timeout_s = 120.0;
  bool metric_repeat_check = false;
  double TH = 3.0;

  EncoderKind encoder = EncoderKind::tiny_conv;
  std::string precomputed_index;

  RmvitConfig model;
  std::size_t proj_dim = kProjectionDim;
  TrainConfig train;
  CvConfig eval;

  std::vector<std::size_t> sweep_M{2, 4};
  std::vector<std::size_t> sweep_S{2, 4};

  RunConfig();
  void validate() const;
  nlohmann::json to_json() const;
  /// Applies the keys of `j` over the current values. Unknown keys and
  /// wrongly typed values throw InvalidArgument.
  void merge(const nlohmann::json& j);
  static RunConfig from_file(const std::filesystem::path& path);

  EncoderSpec encoder_spec() const;
  FitConfig fit_config() const;
  PairingConfig pairing() const;
  LabelConfig label_config() const;
};

/// Writes dir/run_manifest.json: command, version, resolved config and inputs.
void write_run_manifest(const std::filesystem::path& dir, const std::string& command, const RunConfig& cfg,
                        const nlohmann::json& inputs);

void run_synth(const RunConfig& cfg, const std::filesystem::path& out);

struct ExtractSummary {
  std::size_t videos = 0;
  std::size_t windows = 0;
  std::size_t rows = 0;
};
/// Windows, downsamples and rotations for every video with a reference.
/// Writes out/patches/*.rmtt and out/manifest.csv.
ExtractSummary run_extract(const std::filesystem::path& videos_csv, const RunConfig& cfg,
                           const std::filesystem::path& out);

/// Labels `manifest` (patch paths relative to its directory) and writes the
/// result to `out_manifest`, which may be the same file.
LabelReport run_label(const std::filesystem::path& manifest, const RunConfig& cfg,
                      const std::filesystem::path& out_manifest);

FitResult run_train(const std::filesystem::path& manifest, const RunConfig& cfg, const std::filesystem::path& out,
                    bool resume = false, std::size_t stop_after_epoch = 0);

struct EmbeddingTable {
  std::vector<std::string> video_ids;
  std::vector<std::vector<double>> h_v;
};
/// h_v for every video in the list, using the checkpoint's encoder. Frames
/// past `max_frames` (when nonzero) are ignored.
EmbeddingTable run_embed(const std::filesystem::path& checkpoint, const std::filesystem::path& videos_csv,
                         const std::filesystem::path& out, std::size_t max_frames = 0);
/// out/embeddings.rmtt [n x D] (f64) and out/embeddings.csv (video_id, row).
void write_embeddings(const std::filesystem::path& out, const EmbeddingTable& t);
EmbeddingTable read_embeddings(const std::filesystem::path& dir);

/// Joins embeddings with the labels CSV and cross-validates. Writes
/// out/report.csv and out/summary.txt.
CrossValReport run_evaluate(const std::filesystem::path& embeddings_dir, const std::filesystem::path& labels_csv,
                            const RunConfig& cfg, const std::filesystem::path& out);

struct SweepCell {
  std::size_t M = 0, S = 0;
  double final_loss = 0.0;  // mean loss over the last epoch
  double last_step_loss = 0.0;
};
/// Short training per (M, S) cell with S as the segment length. Writes
/// out/sweep.csv.
std::vector<SweepCell> run_sweep(const std::filesystem::path& manifest, const RunConfig& cfg,
                                 const std::filesystem::path& out);
std::vector<SweepCell> run_sweep(const TrainingSet& set, const FrameEncoder& encoder, const RunConfig& cfg,
                                 const std::filesystem::path& out);

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};
/// Gradient checks, loss closed forms and rank-statistic oracles.
std::vector<CheckResult> run_selfcheck();

struct ProfileRow {
  std::string stage;
  double seconds = 0.0;
  std::size_t repeats = 0;
};
/// Times the encoder, one forward pass and one training step at the
/// configured sizes on random data.
std::vector<ProfileRow> run_profile(const RunConfig& cfg, std::size_t frames);

}  // namespace rmtbvqa
