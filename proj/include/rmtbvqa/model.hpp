#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rmtbvqa/encoder.hpp"
#include "rmtbvqa/heads.hpp"
#include "rmtbvqa/patches.hpp"
#include "rmtbvqa/proxy.hpp"
#include "rmtbvqa/rmvit.hpp"

namespace rmtbvqa {

/// Trainable parts: the recurrent transformer plus projector g and predictor f.
struct Model {
  RmvitConfig config;
  std::size_t proj_dim = kProjectionDim;
  RmvitParams rmvit;
  HeadParams heads;

  static Model init(const RmvitConfig& cfg, std::size_t proj_dim, std::uint64_t seed);
  /// "rmvit.<name>" and "heads.<name>", in a fixed order.
  NamedTensors named() const;
};

/// One item of a 2B batch: rows [0, B) are full patches, row B+i is the
/// down counterpart of row i.
struct BatchItem {
  std::string patch_id;
  std::string source_id;
  Resolution resolution = Resolution::full;
  double score = 0.0;
  std::string metric;
};

struct BatchAnnotations {
  std::size_t B = 0;
  std::vector<BatchItem> items;  // size 2B

  void validate() const;
  /// [2B x 2B]: counterparts and pairs within TH of each other.
  std::vector<std::uint8_t> quality_positives(const PairingConfig& pairing) const;
  /// [B x B] over full items: same source, j != i.
  std::vector<std::uint8_t> same_source() const;
};

struct BatchLoss {
  Tensor total;
  InfoNceResult quality;
  InfoNceResult content;
};

/// Runs every item's frame embeddings [T x D] through the model and builds
/// the weighted contrastive objective. Full items are the anchors.
BatchLoss batch_loss(const Model& model, const std::vector<Tensor>& frames, const BatchAnnotations& batch,
                     const PairingConfig& pairing, const LossWeights& weights);

/// Pooled video embedding h_v [1 x D] without recording gradients.
std::vector<Real> embed_video(const Model& model, const Tensor& frames);

struct CheckpointInfo {
  EncoderSpec encoder;
  std::uint64_t encoder_fingerprint = 0;
  std::size_t epoch = 0;
  std::size_t step = 0;
};

/// Directory with meta.json and params/<name>.rmtt (f64).
void save_checkpoint(const std::filesystem::path& dir, const Model& model, const CheckpointInfo& info);
Model load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

}  // namespace rmtbvqa
