#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "rmtbvqa/encoder.hpp"
#include "rmtbvqa/manifest.hpp"
#include "rmtbvqa/model.hpp"
#include "rmtbvqa/random.hpp"

namespace rmtbvqa {

struct TrainConfig {
  std::size_t B = 8;
  std::size_t epochs = 30;
  double base_lr = 0.01;
  double warmup_epochs = 3.0;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  double lambda1 = 1.0;
  double tau = 0.1;

  void validate() const;
  /// B=256, 150 epochs, lr 0.00025, 10 warmup epochs.
  static TrainConfig full_scale();
};

/// Linear warmup from 0 to base_lr over warmup_epochs, then cosine decay to 0
/// at `epochs`. `t` is in epochs and may be fractional.
double lr_at(double t, const TrainConfig& cfg);

/// SGD with momentum: v = mu*v + g + wd*p; p -= lr*v. `velocity` is sized on
/// first use.
void sgd_step(const NamedTensors& params, std::vector<std::vector<Real>>& velocity, double lr, double momentum,
              double weight_decay);

/// A full patch with its down counterpart, both pre-encoded to [T x D].
struct TrainingItem {
  std::string patch_id;
  std::string down_id;
  std::string source_id;
  double score = 0.0;
  std::string metric;
  Tensor full_frames;
  Tensor down_frames;
};

struct TrainingSet {
  std::vector<TrainingItem> items;
};

/// Encodes every scored, non-reference full row and its down counterpart.
/// Throws InvalidArgument when a full row is unscored or has no down row.
TrainingSet build_training_set(const Manifest& m, const std::filesystem::path& base_dir,
                               const FrameEncoder& encoder, std::size_t workers = 1);

struct Batch {
  BatchAnnotations annotations;
  std::vector<Tensor> frames;  // 2B entries, full items first
  std::vector<std::size_t> picks;
};

Batch make_batch(const TrainingSet& set, const std::vector<std::size_t>& picks);
/// B distinct items drawn with `rng`. Throws InvalidArgument when fewer than
/// B items exist.
Batch build_batch(const TrainingSet& set, std::size_t B, Rng& rng);

struct LossRecord {
  std::size_t step = 0;  // 1-based
  std::size_t epoch = 0; // 1-based
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainState {
  std::size_t epoch = 0;  // completed epochs
  std::size_t step = 0;   // completed steps
  std::vector<std::vector<Real>> velocity;
  double best_loss = std::numeric_limits<double>::infinity();
  Rng rng;
  std::vector<LossRecord> curve;
};

/// Forward, backward and one SGD update at `lr`. Returns the loss. A
/// non-finite loss or gradient throws NumericError naming the batch.
double train_step(Model& model, TrainState& state, const Batch& batch, const TrainConfig& cfg,
                  const PairingConfig& pairing, double lr);

struct FitConfig {
  TrainConfig train;
  RmvitConfig rmvit;
  std::size_t proj_dim = kProjectionDim;
  PairingConfig pairing;
  EncoderSpec encoder;
};

struct FitOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  std::size_t stop_after_epoch = 0;  // nonzero: return after this many epochs
  std::function<void(const LossRecord&)> on_step;
};

struct FitResult {
  std::filesystem::path checkpoint;
  std::filesystem::path loss_curve;
  std::vector<LossRecord> curve;
  Model model;
};

std::size_t steps_per_epoch(const TrainingSet& set, std::size_t B);

/// Trains from scratch or resumes from out_dir/train_state. Writes
/// out_dir/checkpoint and out_dir/loss_curve.csv at every epoch end. On a
/// non-finite loss writes out_dir/diagnostic.json and rethrows.
FitResult fit(const TrainingSet& set, const FrameEncoder& encoder, const FitConfig& cfg, const FitOptions& opts);

void write_loss_curve(const std::filesystem::path& path, const std::vector<LossRecord>& curve);
std::vector<LossRecord> read_loss_curve(const std::filesystem::path& path);

}  // namespace rmtbvqa
