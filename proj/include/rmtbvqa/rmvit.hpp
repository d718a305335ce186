#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rmtbvqa/ops.hpp"
#include "rmtbvqa/tensor.hpp"

namespace rmtbvqa {

enum class PoolingMode {
  all_frames,         // memory of last iteration + every processed frame
  last_two_segments,  // memory of last iteration + last two segments only
};

std::string to_string(PoolingMode mode);
PoolingMode pooling_from_string(const std::string& s);

struct RmvitConfig {
  std::size_t D = 64;        // embedding dim
  std::size_t M = 4;         // memory tokens
  std::size_t N = 4;         // segment length in frames
  std::size_t depth = 2;     // ViT blocks
  std::size_t heads = 4;
  std::size_t ffn_mult = 2;  // FFN hidden = ffn_mult * D
  PoolingMode pooling = PoolingMode::all_frames;

  void validate() const;
  /// D=2048, M=N=12, depth 8, 64 heads.
  static RmvitConfig full_scale();
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct VitBlockParams {
  Tensor ln1_gain, ln1_bias;
  AttentionParams attn;
  Tensor ln2_gain, ln2_bias;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct RmvitParams {
  Tensor memory_init;  // [M x D], trainable, zeros at init
  Tensor positions;    // [(M+N) x D], learned, shared by every segment
  std::vector<VitBlockParams> blocks;

  static RmvitParams init(const RmvitConfig& cfg, std::uint64_t seed);
  NamedTensors named() const;
};

/// Output of the recurrence over one video.
struct VideoEmbedding {
  Tensor h_v;              // [1 x D] pooled video embedding
  Tensor mem_prev;         // [M x D] memory produced by the second-last iteration
  Tensor mem_last;         // [M x D] memory produced by the last iteration
  Tensor last_frames_out;  // [N x D] processed frames of the last segment
  std::size_t segments = 0;
  std::size_t frames_used = 0;
  std::size_t pooled_tokens = 0;
};

/// Returns the trainable initial memory.
Tensor init_memory(const RmvitParams& params);

/// One pre-norm ViT block on a token matrix [L x D].
Tensor vit_block(const Tensor& tokens, const VitBlockParams& p, std::size_t heads);

/// Concatenates memory and frames, adds positions, runs the ViT stack and
/// splits the result back into (memory', frames').
std::pair<Tensor, Tensor> process_segment(const Tensor& memory, const Tensor& frames,
                                          const RmvitParams& params, const RmvitConfig& cfg);

/// Recurrent pass over frames [T x D]. Trailing frames that do not fill a
/// segment are discarded. Throws InvalidArgument when T < N.
VideoEmbedding forward_video(const Tensor& frames, const RmvitParams& params,
                             const RmvitConfig& cfg);

std::size_t parameter_count(const NamedTensors& params);

}  // namespace rmtbvqa
