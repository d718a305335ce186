#include <cmath>
#include <random>

#include "doctest.h"
#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/rmvit.hpp"

using namespace rmtbvqa;

namespace {

std::vector<Real> uniform(std::size_t n, std::mt19937& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<Real> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

Tensor frames(std::size_t T, std::size_t D, unsigned seed) {
  std::mt19937 rng(seed);
  return Tensor::matrix(T, D, uniform(T * D, rng));
}

RmvitConfig tiny() {
  RmvitConfig cfg;
  cfg.D = 8;
  cfg.M = 2;
  cfg.N = 4;
  cfg.depth = 2;
  cfg.heads = 2;
  return cfg;
}

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m[i][j] = t.at(i, j);
  return m;
}

Mat mm(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

Mat plus_row(Mat a, const Tensor& bias) {
  for (auto& row : a)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias.data()[j];
  return a;
}

Mat ln(const Mat& x, const Tensor& g, const Tensor& b) {
  Mat y = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mu = 0.0, var = 0.0;
    for (double v : x[i]) mu += v;
    mu /= double(x[i].size());
    for (double v : x[i]) var += (v - mu) * (v - mu);
    var /= double(x[i].size());
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      y[i][j] = (x[i][j] - mu) / std::sqrt(var + 1e-5) * g.data()[j] + b.data()[j];
    }
  }
  return y;
}

// Straight-line pre-norm block: x + MHA(LN x); x + W2 gelu(W1 LN x).
Mat block_oracle(const Mat& x, const VitBlockParams& p, std::size_t heads) {
  const std::size_t L = x.size(), D = x[0].size(), dh = D / heads;
  Mat h = ln(x, p.ln1_gain, p.ln1_bias);
  Mat q = plus_row(mm(h, to_mat(p.attn.wq)), p.attn.bq);
  Mat k = plus_row(mm(h, to_mat(p.attn.wk)), p.attn.bk);
  Mat v = plus_row(mm(h, to_mat(p.attn.wv)), p.attn.bv);
  Mat ctx(L, std::vector<double>(D, 0.0));
  for (std::size_t hd = 0; hd < heads; ++hd) {
    for (std::size_t i = 0; i < L; ++i) {
      std::vector<double> s(L);
      double mx = -1e300, z = 0.0;
      for (std::size_t j = 0; j < L; ++j) {
        double dot = 0.0;
        for (std::size_t c = hd * dh; c < (hd + 1) * dh; ++c) dot += q[i][c] * k[j][c];
        s[j] = dot / std::sqrt(double(dh));
        mx = std::max(mx, s[j]);
      }
      for (auto& e : s) z += (e = std::exp(e - mx));
      for (std::size_t j = 0; j < L; ++j)
        for (std::size_t c = hd * dh; c < (hd + 1) * dh; ++c) ctx[i][c] += s[j] / z * v[j][c];
    }
  }
  Mat a = plus_row(mm(ctx, to_mat(p.attn.wo)), p.attn.bo);
  Mat y = x;
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < D; ++j) y[i][j] += a[i][j];
  Mat f = plus_row(mm(ln(y, p.ln2_gain, p.ln2_bias), to_mat(p.ffn_w1)), p.ffn_b1);
  for (auto& row : f)
    for (auto& e : row) e = 0.5 * e * (1.0 + std::erf(e / std::sqrt(2.0)));
  Mat o = plus_row(mm(f, to_mat(p.ffn_w2)), p.ffn_b2);
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t j = 0; j < D; ++j) y[i][j] += o[i][j];
  return y;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && a.to_vector() == b.to_vector();
}

}  // namespace

TEST_CASE("config validation") {
  RmvitConfig cfg = tiny();
  cfg.heads = 3;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = tiny();
  cfg.M = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  const auto full = RmvitConfig::full_scale();
  CHECK(full.D == 2048);
  CHECK(full.M == 12);
  CHECK(full.N == 12);
  CHECK(full.depth == 8);
  CHECK(full.heads == 64);
  CHECK_NOTHROW(full.validate());
  CHECK(pooling_from_string(to_string(PoolingMode::last_two_segments)) ==
        PoolingMode::last_two_segments);
  CHECK_THROWS_AS(pooling_from_string("median"), InvalidArgument);
}

TEST_CASE("initial memory is a zero trainable leaf") {
  const auto cfg = tiny();
  auto p = RmvitParams::init(cfg, 3);
  Tensor mem = init_memory(p);
  CHECK(mem.shape() == Shape{cfg.M, cfg.D});
  for (Real v : mem.data()) CHECK(v == 0.0);
  CHECK(mem.requires_grad());
  CHECK(mem.is_leaf());
}

TEST_CASE("parameter count matches layer arithmetic") {
  const auto cfg = tiny();
  auto p = RmvitParams::init(cfg, 3);
  const std::size_t D = cfg.D, F = cfg.ffn_mult * D;
  const std::size_t per_block = 4 * D + 4 * (D * D + D) + (D * F + F) + (F * D + D);
  CHECK(parameter_count(p.named()) == cfg.M * D + (cfg.M + cfg.N) * D + cfg.depth * per_block);
}

TEST_CASE("vit block matches straight-line oracle") {
  const auto cfg = tiny();
  auto p = RmvitParams::init(cfg, 11);
  // Non-trivial gains and biases so every parameter shapes the output.
  std::mt19937 rng(5);
  for (auto& [name, t] : p.named()) {
    if (t.rows() == 1) {
      auto d = t.mutable_data();
      auto r = uniform(d.size(), rng, -0.5, 0.5);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += r[i];
    }
  }
  Tensor x = frames(cfg.M + cfg.N, cfg.D, 2);
  Tensor y = vit_block(x, p.blocks[0], cfg.heads);
  Mat want = block_oracle(to_mat(x), p.blocks[0], cfg.heads);
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) CHECK(y.at(i, j) == doctest::Approx(want[i][j]).epsilon(1e-5));
}

TEST_CASE("zero residual branches make a segment pass-through") {
  const auto cfg = tiny();
  auto p = RmvitParams::init(cfg, 1);
  for (auto& blk : p.blocks) {
    for (Tensor t : {blk.attn.wo, blk.attn.bo, blk.ffn_w2, blk.ffn_b2})
      for (auto& v : t.mutable_data()) v = 0.0;
  }
  for (auto& v : p.positions.mutable_data()) v = 0.0;
  Tensor mem = frames(cfg.M, cfg.D, 4);
  Tensor f = frames(cfg.N, cfg.D, 5);
  auto [mem_out, f_out] = process_segment(mem, f, p, cfg);
  CHECK(bit_equal(mem_out, mem));
  CHECK(bit_equal(f_out, f));
}

TEST_CASE("process_segment keeps M+N tokens and rejects wrong counts") {
  const auto cfg = tiny();
  auto p = RmvitParams::init(cfg, 1);
  auto [m, f] = process_segment(init_memory(p), frames(cfg.N, cfg.D, 1), p, cfg);
  CHECK(m.shape() == Shape{cfg.M, cfg.D});
  CHECK(f.shape() == Shape{cfg.N, cfg.D});
  CHECK_THROWS_AS(process_segment(init_memory(p), frames(cfg.N - 1, cfg.D, 1), p, cfg), InvalidArgument);
  CHECK_THROWS_AS(process_segment(frames(cfg.M + 1, cfg.D, 1), frames(cfg.N, cfg.D, 1), p, cfg), ShapeError);
}

TEST_CASE("single segment uses the initial memory as mem_prev") {
  const auto cfg = tiny();
  auto p = RmvitParams::init(cfg, 2);
  auto e = forward_video(frames(cfg.N, cfg.D, 3), p, cfg);
  CHECK(e.segments == 1);
  CHECK(e.frames_used == cfg.N);
  CHECK(e.pooled_tokens == cfg.M + cfg.N);
  CHECK(bit_equal(e.mem_prev, init_memory(p)));
  // h_v is the mean over the last memory and every processed frame.
  for (std::size_t j = 0; j < cfg.D; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < cfg.M; ++i) s += e.mem_last.at(i, j);
    for (std::size_t i = 0; i < cfg.N; ++i) s += e.last_frames_out.at(i, j);
    CHECK(e.h_v.at(0, j) == doctest::Approx(s / double(cfg.M + cfg.N)).epsilon(1e-12));
  }
}

TEST_CASE("trailing partial segment is discarded bit-exactly") {
  const auto cfg = tiny();
  auto p = RmvitParams::init(cfg, 7);
  for (std::size_t S : {1u, 2u, 3u}) {
    Tensor prefix = frames(S * cfg.N, cfg.D, 9);
    auto base = forward_video(prefix, p, cfg);
    for (std::size_t r = 1; r < cfg.N; ++r) {
      Tensor extra = frames(r, cfg.D, 100 + unsigned(r));
      auto e = forward_video(concat_rows({prefix, extra}), p, cfg);
      CHECK(e.segments == S);
      CHECK(bit_equal(e.h_v, base.h_v));
      CHECK(bit_equal(e.mem_prev, base.mem_prev));
      CHECK(bit_equal(e.last_frames_out, base.last_frames_out));
    }
  }
}

TEST_CASE("variable length input and pooled token count") {
  const auto cfg = tiny();
  auto p = RmvitParams::init(cfg, 7);
  for (std::size_t S : {1u, 3u, 10u}) {
    auto e = forward_video(frames(S * cfg.N, cfg.D, 1), p, cfg);
    CHECK(e.h_v.shape() == Shape{1, cfg.D});
    CHECK(e.pooled_tokens == cfg.M + S * cfg.N);
    CHECK(e.frames_used == S * cfg.N);
  }
  CHECK_THROWS_AS(forward_video(frames(cfg.N - 1, cfg.D, 1), p, cfg), InvalidArgument);

  RmvitConfig large;
  large.D = 16;
  large.heads = 4;
  large.M = 12;
  large.N = 12;
  large.depth = 1;
  auto pp = RmvitParams::init(large, 1);
  CHECK(forward_video(frames(24, large.D, 2), pp, large).pooled_tokens == 36);
}

TEST_CASE("last-two-segments pooling") {
  auto cfg = tiny();
  cfg.pooling = PoolingMode::last_two_segments;
  auto p = RmvitParams::init(cfg, 7);
  CHECK(forward_video(frames(5 * cfg.N, cfg.D, 1), p, cfg).pooled_tokens == cfg.M + 2 * cfg.N);
  CHECK(forward_video(frames(cfg.N, cfg.D, 1), p, cfg).pooled_tokens == cfg.M + cfg.N);
}

TEST_CASE("memory carries information across segments") {
  const auto cfg = tiny();
  auto p = RmvitParams::init(cfg, 7);
  Tensor f = frames(2 * cfg.N, cfg.D, 1);
  auto base = forward_video(f, p, cfg);
  auto v = f.to_vector();
  v[1] += 0.1;  // frame 0 belongs to segment 1 only
  auto moved = forward_video(Tensor::matrix(2 * cfg.N, cfg.D, v), p, cfg);
  CHECK_FALSE(bit_equal(base.mem_prev, moved.mem_prev));
  CHECK_FALSE(bit_equal(base.last_frames_out, moved.last_frames_out));

  // Gradient route: segment-2 outputs depend on segment-1 frames only via memory.
  Tensor leaf = Tensor::matrix(2 * cfg.N, cfg.D, f.to_vector(), true);
  auto e = forward_video(leaf, p, cfg);
  sum_all(e.last_frames_out).backward();
  double g = 0.0;
  for (std::size_t i = 0; i < cfg.N * cfg.D; ++i) g += std::abs(leaf.grad()[i]);
  CHECK(g > 0.0);
}

TEST_CASE("forward is deterministic for a fixed seed") {
  const auto cfg = tiny();
  auto a = forward_video(frames(9, cfg.D, 1), RmvitParams::init(cfg, 5), cfg);
  auto b = forward_video(frames(9, cfg.D, 1), RmvitParams::init(cfg, 5), cfg);
  CHECK(bit_equal(a.h_v, b.h_v));
  auto c = forward_video(frames(9, cfg.D, 1), RmvitParams::init(cfg, 6), cfg);
  CHECK_FALSE(bit_equal(a.h_v, c.h_v));
}
