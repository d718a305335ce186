#include "rmtbvqa/rmvit.hpp"

#include <cmath>

#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/random.hpp"

namespace rmtbvqa {

std::string to_string(PoolingMode mode) {
  return mode == PoolingMode::all_frames ? "all_frames" : "last_two_segments";
}

PoolingMode pooling_from_string(const std::string& s) {
  if (s == "all_frames" || s == "all") return PoolingMode::all_frames;
  if (s == "last_two_segments" || s == "last_two") return PoolingMode::last_two_segments;
  throw InvalidArgument("unknown pooling mode '" + s + "'");
}

void RmvitConfig::validate() const {
  if (D == 0 || M == 0 || N == 0 || depth == 0 || heads == 0 || ffn_mult == 0) {
    throw InvalidArgument("rmvit config: all sizes must be positive");
  }
  if (D % heads != 0) {
    throw InvalidArgument("rmvit config: D=" + std::to_string(D) +
                          " not divisible by heads=" + std::to_string(heads));
  }
}

RmvitConfig RmvitConfig::full_scale() {
  RmvitConfig cfg;
  cfg.D = 2048;
  cfg.M = 12;
  cfg.N = 12;
  cfg.depth = 8;
  cfg.heads = 64;
  cfg.ffn_mult = 1;
  return cfg;
}

namespace {

Tensor weight(std::size_t in, std::size_t out, Rng& rng) {
  return Tensor::matrix(in, out, normal_vector(in * out, 1.0 / std::sqrt(double(in)), rng), true);
}

Tensor zeros_row(std::size_t n) { return Tensor::zeros({1, n}, true); }
Tensor ones_row(std::size_t n) { return Tensor::full({1, n}, 1.0f, true); }

}  // namespace

RmvitParams RmvitParams::init(const RmvitConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(derive_seed(seed, "rmvit"));
  RmvitParams p;
  const std::size_t D = cfg.D, F = cfg.ffn_mult * cfg.D;
  p.memory_init = Tensor::zeros({cfg.M, D}, true);
  // Std 1/sqrt(D): 0.022 at D=2048, and at small D it keeps the zero-initialised
  // memory rows from entering layer_norm with near-zero variance.
  p.positions = Tensor::matrix(cfg.M + cfg.N, D,
                               normal_vector((cfg.M + cfg.N) * D, 1.0 / std::sqrt(double(D)), rng), true);
  for (std::size_t b = 0; b < cfg.depth; ++b) {
    VitBlockParams blk;
    blk.ln1_gain = ones_row(D);
    blk.ln1_bias = zeros_row(D);
    blk.attn.wq = weight(D, D, rng);
    blk.attn.bq = zeros_row(D);
    blk.attn.wk = weight(D, D, rng);
    blk.attn.bk = zeros_row(D);
    blk.attn.wv = weight(D, D, rng);
    blk.attn.bv = zeros_row(D);
    blk.attn.wo = weight(D, D, rng);
    blk.attn.bo = zeros_row(D);
    blk.ln2_gain = ones_row(D);
    blk.ln2_bias = zeros_row(D);
    blk.ffn_w1 = weight(D, F, rng);
    blk.ffn_b1 = zeros_row(F);
    blk.ffn_w2 = weight(F, D, rng);
    blk.ffn_b2 = zeros_row(D);
    p.blocks.push_back(std::move(blk));
  }
  return p;
}

NamedTensors RmvitParams::named() const {
  NamedTensors out{{"memory_init", memory_init}, {"positions", positions}};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& k = blocks[b];
    const std::string pre = "block" + std::to_string(b) + ".";
    out.insert(out.end(), {{pre + "ln1_gain", k.ln1_gain},
                           {pre + "ln1_bias", k.ln1_bias},
                           {pre + "attn.wq", k.attn.wq},
                           {pre + "attn.bq", k.attn.bq},
                           {pre + "attn.wk", k.attn.wk},
                           {pre + "attn.bk", k.attn.bk},
                           {pre + "attn.wv", k.attn.wv},
                           {pre + "attn.bv", k.attn.bv},
                           {pre + "attn.wo", k.attn.wo},
                           {pre + "attn.bo", k.attn.bo},
                           {pre + "ln2_gain", k.ln2_gain},
                           {pre + "ln2_bias", k.ln2_bias},
                           {pre + "ffn_w1", k.ffn_w1},
                           {pre + "ffn_b1", k.ffn_b1},
                           {pre + "ffn_w2", k.ffn_w2},
                           {pre + "ffn_b2", k.ffn_b2}});
  }
  return out;
}

Tensor init_memory(const RmvitParams& params) { return params.memory_init; }

Tensor vit_block(const Tensor& tokens, const VitBlockParams& p, std::size_t heads) {
  Tensor x = add(tokens, multi_head_attention(layer_norm(tokens, p.ln1_gain, p.ln1_bias), p.attn, heads));
  Tensor hidden = gelu(linear(layer_norm(x, p.ln2_gain, p.ln2_bias), p.ffn_w1, p.ffn_b1));
  return add(x, linear(hidden, p.ffn_w2, p.ffn_b2));
}

std::pair<Tensor, Tensor> process_segment(const Tensor& memory, const Tensor& frames,
                                          const RmvitParams& params, const RmvitConfig& cfg) {
  if (memory.ndim() != 2 || memory.rows() != cfg.M || memory.cols() != cfg.D) {
    throw ShapeError("process_segment: memory must be [M x D], got " + shape_str(memory.shape()));
  }
  if (frames.ndim() != 2 || frames.rows() != cfg.N || frames.cols() != cfg.D) {
    throw InvalidArgument("process_segment: expected exactly N=" + std::to_string(cfg.N) +
                          " frame embeddings of dim " + std::to_string(cfg.D) + ", got " +
                          shape_str(frames.shape()));
  }
  Tensor x = add(concat_rows({memory, frames}), params.positions);
  for (const auto& blk : params.blocks) x = vit_block(x, blk, cfg.heads);
  return {slice_rows(x, 0, cfg.M), slice_rows(x, cfg.M, cfg.M + cfg.N)};
}

VideoEmbedding forward_video(const Tensor& frames, const RmvitParams& params,
                             const RmvitConfig& cfg) {
  if (frames.ndim() != 2 || frames.cols() != cfg.D) {
    throw ShapeError("forward_video: frames must be [T x D], got " + shape_str(frames.shape()));
  }
  const std::size_t T = frames.rows();
  if (T < cfg.N) {
    throw InvalidArgument("forward_video: " + std::to_string(T) +
                          " frames is shorter than one segment (N=" + std::to_string(cfg.N) + ")");
  }
  const std::size_t S = T / cfg.N;
  Tensor memory = init_memory(params);
  Tensor mem_prev = memory;
  std::vector<Tensor> processed;
  processed.reserve(S);
  for (std::size_t s = 0; s < S; ++s) {
    mem_prev = memory;
    auto [next_memory, out] = process_segment(memory, slice_rows(frames, s * cfg.N, (s + 1) * cfg.N),
                                              params, cfg);
    memory = next_memory;
    processed.push_back(out);
  }
  VideoEmbedding v;
  v.segments = S;
  v.frames_used = S * cfg.N;
  v.mem_prev = mem_prev;
  v.mem_last = memory;
  v.last_frames_out = processed.back();
  std::vector<Tensor> pooled{memory};
  const std::size_t first =
      cfg.pooling == PoolingMode::last_two_segments && S > 2 ? S - 2 : 0;
  pooled.insert(pooled.end(), processed.begin() + static_cast<std::ptrdiff_t>(first), processed.end());
  Tensor all = concat_rows(pooled);
  v.pooled_tokens = all.rows();
  v.h_v = mean_rows(all);
  return v;
}

std::size_t parameter_count(const NamedTensors& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

}  // namespace rmtbvqa
