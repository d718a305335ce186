#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmtbvqa/random.hpp"
#include "rmtbvqa/rmvit.hpp"

namespace rmtbvqa {

inline constexpr std::size_t kProjectionDim = 128;

/// Two-layer MLP: Linear(in -> hidden) + ReLU + Linear(hidden -> out).
struct MlpParams {
  Tensor w1, b1, w2, b2;

  static MlpParams init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
  Tensor forward(const Tensor& x) const;
  NamedTensors named(const std::string& prefix) const;
};

struct HeadParams {
  MlpParams projector;  // g: D -> D -> proj_dim
  MlpParams predictor;  // f: D -> D -> D

  static HeadParams init(std::size_t D, std::size_t proj_dim, std::uint64_t seed);
  NamedTensors named() const;
};

/// Projector g applied to each row of h [n x D] -> [n x proj_dim].
Tensor project(const Tensor& h, const HeadParams& heads);
/// Predictor f: mean-pool memory tokens [M x D] then MLP -> [1 x D].
Tensor predict_content(const Tensor& mem_prev, const HeadParams& heads);
/// Mean over the processed frames of the last segment [N x D] -> [1 x D].
Tensor content_embedding(const Tensor& last_frames_out);

/// Normalized dot product. Throws InvalidArgument on a zero vector.
double cosine(std::span<const Real> a, std::span<const Real> b);

struct LossWeights {
  double tau = 0.1;
  double lambda1 = 1.0;
  void validate() const;
};

/// Per-anchor InfoNCE terms. `per_anchor[i]` is empty when anchor i was
/// skipped for lack of positives (or is not an anchor).
struct InfoNceResult {
  Tensor loss;  // scalar mean over evaluated anchors
  std::vector<std::optional<double>> per_anchor;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;
};

/// Quality-aware loss over all n = 2B representations z [n x P].
/// positives[i*n + j] != 0 marks j as a positive of anchor i; anchors lists
/// the rows that act as anchors. Denominators run over every k != i.
/// Throws InvalidArgument when every anchor lacks positives.
InfoNceResult quality_loss(const Tensor& z, const std::vector<std::uint8_t>& positives,
                           const std::vector<std::size_t>& anchors, double tau);

/// Content-aware loss over B full-resolution items: c and c_hat are [B x P];
/// same_source[i*B + j] != 0 marks j (j != i) as sharing content with i.
InfoNceResult content_loss(const Tensor& c, const Tensor& c_hat,
                           const std::vector<std::uint8_t>& same_source, double tau);

/// Weighted sum of the two components: mean quality term over evaluated
/// anchors plus lambda1 times the mean content term. When every anchor was
/// evaluated this equals (1/B) * sum_i (Lq_i + lambda1 * Lc_i). A content
/// term with no evaluated anchors contributes nothing.
Tensor total_loss(const InfoNceResult& quality, const InfoNceResult* content, double lambda1);
/// Plain-number version over per-anchor arrays.
double total_loss(std::span<const std::optional<double>> quality,
                  std::span<const std::optional<double>> content, double lambda1);

}  // namespace rmtbvqa
