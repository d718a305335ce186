#include <cmath>
#include <random>

#include "doctest.h"
#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/gradcheck.hpp"
#include "rmtbvqa/heads.hpp"

using namespace rmtbvqa;

namespace {

std::vector<Real> uniform(std::size_t n, std::mt19937& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<Real> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

using Rows = std::vector<std::vector<double>>;

Rows rows_of(const Tensor& t) {
  Rows r(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) r[i][j] = t.at(i, j);
  return r;
}

double phi(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  return ab / std::sqrt(aa * bb);
}

// Direct sums of the quality loss: for each anchor with positives,
// -(1/|P|) sum_j log(exp(phi_ij/t) / sum_{k!=i} exp(phi_ik/t)), then the mean.
double quality_oracle(const Rows& z, const std::vector<std::uint8_t>& pos,
                      const std::vector<std::size_t>& anchors, double t) {
  const std::size_t n = z.size();
  double total = 0;
  int used = 0;
  for (std::size_t i : anchors) {
    double denom = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) denom += std::exp(phi(z[i], z[k]) / t);
    double acc = 0;
    int cnt = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !pos[i * n + j]) continue;
      acc += std::log(std::exp(phi(z[i], z[j]) / t) / denom);
      ++cnt;
    }
    if (cnt == 0) continue;
    total += -acc / cnt;
    ++used;
  }
  return total / used;
}

double content_oracle(const Rows& c, const Rows& ch, const std::vector<std::uint8_t>& same, double t) {
  const std::size_t n = c.size();
  double total = 0;
  int used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double denom = 0;
    for (std::size_t k = 0; k < n; ++k)
      if (k != i) denom += std::exp(phi(c[i], c[k]) / t) + std::exp(phi(c[i], ch[k]) / t);
    double acc = 0;
    int cnt = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || !same[i * n + j]) continue;
      acc += std::log((std::exp(phi(c[i], c[j]) / t) + std::exp(phi(c[i], ch[j]) / t)) / denom);
      ++cnt;
    }
    if (cnt == 0) continue;
    total += -acc / cnt;
    ++used;
  }
  return total / used;
}

std::vector<std::uint8_t> all_pairs(std::size_t n) { return std::vector<std::uint8_t>(n * n, 1); }

}  // namespace

TEST_CASE("cosine examples") {
  std::vector<Real> v{1, -2, 3}, neg{-1, 2, -3}, big{5, -10, 15};
  CHECK(cosine(v, v) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(cosine(v, neg) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(cosine(v, big) == doctest::Approx(1.0).epsilon(1e-15));
  std::vector<Real> zero{0, 0, 0};
  CHECK_THROWS_AS(cosine(v, zero), InvalidArgument);
  std::vector<Real> a{0.3, 0.4}, b{0.6, 0.8}, c{2.1, 0.2};
  CHECK(cosine(a, c) == cosine(b, c));
}

TEST_CASE("head shapes and zero cases") {
  const std::size_t D = 8;
  auto h = HeadParams::init(D, kProjectionDim, 1);
  std::mt19937 rng(1);
  Tensor x = Tensor::matrix(3, D, uniform(3 * D, rng));
  CHECK(project(x, h).shape() == Shape{3, kProjectionDim});
  CHECK_THROWS_AS(project(Tensor::matrix(1, D + 1, uniform(D + 1, rng)), h), ShapeError);

  for (auto& [name, t] : h.named())
    for (auto& v : t.mutable_data()) v = 0.0;
  const Tensor zp = project(x, h);
  for (Real v : zp.data()) CHECK(v == 0.0);
  const Tensor zc = predict_content(Tensor::zeros({4, D}), h);
  for (Real v : zc.data()) CHECK(v == 0.0);

  auto fresh = HeadParams::init(D, kProjectionDim, 1);
  Tensor mem = Tensor::matrix(4, D, uniform(4 * D, rng));
  CHECK(predict_content(mem, fresh).shape() == Shape{1, D});
  CHECK(predict_content(mem, fresh).to_vector() == predict_content(mem, fresh).to_vector());
}

TEST_CASE("content embedding is the frame mean") {
  std::vector<Real> v{1, 2, 3};
  Tensor same = Tensor::matrix(2, 3, {1, 2, 3, 1, 2, 3});
  CHECK(content_embedding(same).to_vector() == v);
  Tensor opposite = Tensor::matrix(2, 3, {1, 2, 3, -1, -2, -3});
  const Tensor mean = content_embedding(opposite);
  for (Real x : mean.data()) CHECK(x == 0.0);
}

TEST_CASE("quality loss closed form for identical representations") {
  for (std::size_t B : {2u, 3u, 5u}) {
    Tensor z = Tensor::matrix(2 * B, 4, std::vector<Real>(2 * B * 4, 0.7));
    std::vector<std::size_t> anchors(B);
    for (std::size_t i = 0; i < B; ++i) anchors[i] = i;
    auto r = quality_loss(z, all_pairs(2 * B), anchors, 0.1);
    CHECK(r.loss.item() == doctest::Approx(std::log(2.0 * B - 1)).epsilon(1e-12));
    CHECK(r.evaluated == B);
  }
  Tensor z = Tensor::matrix(4, 3, std::vector<Real>(12, -1.5));
  CHECK(std::abs(quality_loss(z, all_pairs(4), {0, 1}, 0.1).loss.item() - 1.098612) < 1e-5);
}

TEST_CASE("content loss closed form for identical representations") {
  for (std::size_t B : {3u, 4u, 6u}) {
    Tensor c = Tensor::matrix(B, 4, std::vector<Real>(B * 4, 0.3));
    auto r = content_loss(c, c, all_pairs(B), 0.1);
    CHECK(r.loss.item() == doctest::Approx(std::log(double(B) - 1)).epsilon(1e-12));
  }
  Tensor c = Tensor::matrix(3, 2, std::vector<Real>(6, 2.0));
  CHECK(std::abs(content_loss(c, c, all_pairs(3), 0.1).loss.item() - 0.693147) < 1e-5);
}

TEST_CASE("degenerate batches") {
  // B=2 from distinct sources: no content positives anywhere.
  Tensor c = Tensor::matrix(2, 2, {1, 0, 0, 1});
  CHECK_THROWS_AS(content_loss(c, c, {0, 0, 0, 0}, 0.1), InvalidArgument);
  Tensor z = Tensor::matrix(4, 2, {1, 0, 0, 1, 1, 1, -1, 0});
  CHECK_THROWS_AS(quality_loss(z, std::vector<std::uint8_t>(16, 0), {0, 1}, 0.1), InvalidArgument);
  CHECK_THROWS_AS(quality_loss(z, all_pairs(4), {0, 1}, 1.0), InvalidArgument);
  CHECK_THROWS_AS(quality_loss(z, all_pairs(3), {0, 1}, 0.1), ShapeError);
  // One anchor without positives is skipped and counted.
  std::vector<std::uint8_t> pos(16, 0);
  pos[0 * 4 + 2] = 1;
  auto r = quality_loss(z, pos, {0, 1}, 0.1);
  CHECK(r.evaluated == 1);
  CHECK(r.skipped == 1);
  CHECK(r.per_anchor[0].has_value());
  CHECK_FALSE(r.per_anchor[1].has_value());
}

TEST_CASE("separated positive matches direct sum and sharpens with smaller tau") {
  // Anchor 0 and its counterpart 2 coincide; the others point the other way.
  Tensor z = Tensor::matrix(4, 2, {1, 0, -1, 0, 1, 0, -1, 0});
  std::vector<std::uint8_t> pos(16, 0);
  pos[0 * 4 + 2] = 1;
  const auto rows = rows_of(z);
  const double sharp = quality_loss(z, pos, {0}, 0.1).loss.item();
  CHECK(std::abs(sharp - quality_oracle(rows, pos, {0}, 0.1)) < 1e-6);
  // exp(10) / (exp(10) + 2 exp(-10)) -> loss = log(1 + 2 exp(-20))
  CHECK(sharp == doctest::Approx(std::log1p(2 * std::exp(-20.0))).epsilon(1e-9));
  CHECK(sharp <= quality_oracle(rows, pos, {0}, 1.0));
}

TEST_CASE("losses match enumeration oracles on random batches") {
  std::mt19937 rng(42);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t B = 2 + trial % 3, n = 2 * B, P = 5;
    Tensor z = Tensor::matrix(n, P, uniform(n * P, rng));
    std::vector<std::uint8_t> pos(n * n, 0);
    std::bernoulli_distribution coin(0.35);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pos[i * n + j] = pos[j * n + i] = coin(rng) ? 1 : 0;
    for (std::size_t i = 0; i < B; ++i) pos[i * n + i + B] = pos[(i + B) * n + i] = 1;
    std::vector<std::size_t> anchors(B);
    for (std::size_t i = 0; i < B; ++i) anchors[i] = i;
    const double q = quality_loss(z, pos, anchors, 0.1).loss.item();
    CHECK(std::abs(q - quality_oracle(rows_of(z), pos, anchors, 0.1)) < 1e-6);
    CHECK(q > 0.0);

    const std::size_t Bc = 3 + trial % 2;
    Tensor c = Tensor::matrix(Bc, P, uniform(Bc * P, rng));
    Tensor ch = Tensor::matrix(Bc, P, uniform(Bc * P, rng));
    std::vector<std::uint8_t> same(Bc * Bc, 0);
    for (std::size_t i = 0; i < Bc; ++i)
      for (std::size_t j = 0; j < Bc; ++j) same[i * Bc + j] = (i % 2) == (j % 2);
    const double cl = content_loss(c, ch, same, 0.1).loss.item();
    CHECK(std::abs(cl - content_oracle(rows_of(c), rows_of(ch), same, 0.1)) < 1e-6);
    CHECK(cl > 0.0);
  }
}

TEST_CASE("quality loss ignores relabeling of identical items") {
  Tensor z = Tensor::matrix(4, 2, {1, 0, 0.2, 1, 1, 0, 0.2, 1});
  std::vector<std::uint8_t> pos(16, 0);
  pos[0 * 4 + 2] = pos[2 * 4 + 0] = pos[1 * 4 + 3] = pos[3 * 4 + 1] = 1;
  const double a = quality_loss(z, pos, {0, 1}, 0.1).loss.item();
  const double b = quality_loss(z, pos, {2, 3}, 0.1).loss.item();
  CHECK(a == doctest::Approx(b).epsilon(1e-14));
}

TEST_CASE("total loss combination") {
  std::vector<std::optional<double>> q{1.0, 3.0}, c{0.5, 1.5};
  CHECK(total_loss(q, c, 0.0) == doctest::Approx(2.0));
  std::vector<std::optional<double>> qa{0.4, 0.4}, cb{0.9, 0.9};
  CHECK(total_loss(qa, cb, 1.0) == doctest::Approx(1.3));
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> d(0, 2);
  for (int t = 0; t < 10; ++t) {
    std::vector<std::optional<double>> a(4), b(4);
    double s = 0;
    for (int i = 0; i < 4; ++i) {
      a[i] = d(rng);
      b[i] = d(rng);
      s += *a[i] + 0.7 * *b[i];
    }
    CHECK(total_loss(a, b, 0.7) == doctest::Approx(s / 4).epsilon(1e-14));
  }
  std::vector<std::optional<double>> none{std::nullopt};
  CHECK_THROWS_AS(total_loss(none, c, 1.0), InvalidArgument);

  Tensor z = Tensor::matrix(4, 2, {1, 0, 0.2, 1, 1, 0.1, 0.3, 1});
  auto rq = quality_loss(z, all_pairs(4), {0, 1}, 0.1);
  Tensor cc = Tensor::matrix(3, 2, {1, 0.5, 0.2, 1, 0.7, 0.7});
  auto rc = content_loss(cc, cc, all_pairs(3), 0.1);
  CHECK(total_loss(rq, &rc, 0.5).item() ==
        doctest::Approx(rq.loss.item() + 0.5 * rc.loss.item()).epsilon(1e-14));
  CHECK(total_loss(rq, nullptr, 0.5).item() == rq.loss.item());
}

TEST_CASE("fused losses pass the finite-difference check") {
  std::mt19937 rng(8);
  Tensor z = Tensor::matrix(6, 4, uniform(24, rng), true);
  Tensor c = Tensor::matrix(3, 4, uniform(12, rng), true);
  Tensor ch = Tensor::matrix(3, 4, uniform(12, rng), true);
  std::vector<std::uint8_t> pos(36, 0);
  pos[0 * 6 + 3] = pos[1 * 6 + 4] = pos[2 * 6 + 5] = pos[0 * 6 + 5] = 1;
  std::vector<std::uint8_t> same{0, 1, 0, 1, 0, 1, 0, 1, 0};
  auto fn = [&] {
    auto q = quality_loss(z, pos, {0, 1, 2}, 0.1);
    auto cl = content_loss(c, ch, same, 0.1);
    return total_loss(q, &cl, 0.8);
  };
  auto rep = gradcheck(fn, {{"z", z}, {"c", c}, {"c_hat", ch}});
  CHECK(rep.checked == 48);
  CHECK(rep.ok());
  for (const auto& f : rep.failures) MESSAGE(f);
}

TEST_CASE("every model parameter receives gradient on a mixed batch") {
  RmvitConfig cfg;
  cfg.D = 8;
  cfg.M = 2;
  cfg.N = 2;
  cfg.depth = 1;
  cfg.heads = 2;
  auto rp = RmvitParams::init(cfg, 4);
  auto hp = HeadParams::init(cfg.D, 16, 4);
  std::mt19937 rng(2);
  const std::size_t B = 4, T = 4;
  std::vector<Tensor> frames;
  for (std::size_t i = 0; i < 2 * B; ++i) frames.push_back(Tensor::matrix(T, cfg.D, uniform(T * cfg.D, rng)));
  std::vector<std::uint8_t> pos(4 * B * B, 0), same(B * B, 0);
  for (std::size_t i = 0; i < B; ++i) pos[i * 2 * B + i + B] = pos[(i + B) * 2 * B + i] = 1;
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) same[i * B + j] = (i < 2) == (j < 2);
  std::vector<Tensor> hv, hc, hch;
  for (std::size_t i = 0; i < 2 * B; ++i) {
    auto e = forward_video(frames[i], rp, cfg);
    hv.push_back(e.h_v);
    if (i < B) {
      hc.push_back(content_embedding(e.last_frames_out));
      hch.push_back(predict_content(e.mem_prev, hp));
    }
  }
  auto q = quality_loss(project(concat_rows(hv), hp), pos, {0, 1, 2, 3}, 0.1);
  auto c = content_loss(project(concat_rows(hc), hp), project(concat_rows(hch), hp), same, 0.1);
  total_loss(q, &c, 1.0).backward();
  NamedTensors all = rp.named();
  auto h = hp.named();
  all.insert(all.end(), h.begin(), h.end());
  for (const auto& [name, t] : all) {
    double g = 0.0;
    for (Real v : t.grad()) g += std::abs(v);
    INFO(name);
    CHECK(g > 0.0);
  }
}
