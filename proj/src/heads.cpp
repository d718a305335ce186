#include "rmtbvqa/heads.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "rmtbvqa/errors.hpp"

namespace rmtbvqa {

MlpParams MlpParams::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
  MlpParams p;
  p.w1 = Tensor::matrix(in, hidden, normal_vector(in * hidden, 1.0 / std::sqrt(double(in)), rng), true);
  p.b1 = Tensor::zeros({1, hidden}, true);
  p.w2 = Tensor::matrix(hidden, out, normal_vector(hidden * out, 1.0 / std::sqrt(double(hidden)), rng), true);
  p.b2 = Tensor::zeros({1, out}, true);
  return p;
}

Tensor MlpParams::forward(const Tensor& x) const {
  return linear(relu(linear(x, w1, b1)), w2, b2);
}

NamedTensors MlpParams::named(const std::string& prefix) const {
  return {{prefix + "w1", w1}, {prefix + "b1", b1}, {prefix + "w2", w2}, {prefix + "b2", b2}};
}

HeadParams HeadParams::init(std::size_t D, std::size_t proj_dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "heads"));
  HeadParams h;
  h.projector = MlpParams::init(D, D, proj_dim, rng);
  h.predictor = MlpParams::init(D, D, D, rng);
  return h;
}

NamedTensors HeadParams::named() const {
  auto out = projector.named("projector.");
  auto pred = predictor.named("predictor.");
  out.insert(out.end(), pred.begin(), pred.end());
  return out;
}

Tensor project(const Tensor& h, const HeadParams& heads) {
  if (h.ndim() != 2 || h.cols() != heads.projector.w1.rows()) {
    throw ShapeError("project: input " + shape_str(h.shape()) + " does not match D=" +
                     std::to_string(heads.projector.w1.rows()));
  }
  return heads.projector.forward(h);
}

Tensor predict_content(const Tensor& mem_prev, const HeadParams& heads) {
  return heads.predictor.forward(mean_rows(mem_prev));
}

Tensor content_embedding(const Tensor& last_frames_out) { return mean_rows(last_frames_out); }

double cosine(std::span<const Real> a, std::span<const Real> b) {
  if (a.size() != b.size()) throw ShapeError("cosine: length mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += double(a[i]) * b[i];
    aa += double(a[i]) * a[i];
    bb += double(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw InvalidArgument("cosine: zero vector");
  const double c = ab / (std::sqrt(aa) * std::sqrt(bb));
  return std::clamp(c, -1.0, 1.0);
}

void LossWeights::validate() const {
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("tau must lie in (0, 1)");
  if (!(lambda1 >= 0.0)) throw InvalidArgument("lambda1 must be >= 0");
}

namespace {

using Mat = std::vector<double>;

struct UnitRows {
  Mat u;  // normalized rows
  std::vector<double> norm;
};

UnitRows unit_rows(const Tensor& t, const char* what) {
  const std::size_t m = t.rows(), p = t.cols();
  const auto x = t.data();
  UnitRows r{Mat(m * p), std::vector<double>(m)};
  for (std::size_t i = 0; i < m; ++i) {
    double ss = 0.0;
    for (std::size_t k = 0; k < p; ++k) ss += double(x[i * p + k]) * x[i * p + k];
    if (ss == 0.0) throw NumericError(std::string(what) + ": zero representation row " + std::to_string(i));
    r.norm[i] = std::sqrt(ss);
    for (std::size_t k = 0; k < p; ++k) r.u[i * p + k] = x[i * p + k] / r.norm[i];
  }
  return r;
}

double dot_rows(const Mat& a, std::size_t i, const Mat& b, std::size_t j, std::size_t p) {
  double s = 0.0;
  for (std::size_t k = 0; k < p; ++k) s += a[i * p + k] * b[j * p + k];
  return s;
}

// Backprop of row normalization: gz_i = (gu_i - u_i (u_i . gu_i)) / |z_i|.
void normalize_backward(detail::Node& parent, const UnitRows& r, const Mat& gu, std::size_t p) {
  if (!parent.requires_grad) return;
  auto& g = parent.grad_buffer();
  for (std::size_t i = 0; i < r.norm.size(); ++i) {
    const double ug = dot_rows(r.u, i, gu, i, p);
    for (std::size_t k = 0; k < p; ++k) {
      g[i * p + k] += static_cast<Real>((gu[i * p + k] - r.u[i * p + k] * ug) / r.norm[i]);
    }
  }
}

// Anchor bookkeeping shared by both losses: which rows are evaluated and
// how many positives each has.
std::vector<std::size_t> count_positives(const std::vector<std::uint8_t>& positives, std::size_t n,
                                         const std::vector<std::size_t>& anchors, InfoNceResult& r) {
  std::vector<std::size_t> count(n, 0);
  r.per_anchor.assign(n, std::nullopt);
  for (std::size_t i : anchors) {
    if (i >= n) throw InvalidArgument("anchor index out of range");
    for (std::size_t j = 0; j < n; ++j) count[i] += (j != i && positives[i * n + j]) ? 1 : 0;
    if (count[i] == 0) {
      ++r.skipped;
    } else {
      ++r.evaluated;
    }
  }
  if (r.evaluated == 0) {
    throw InvalidArgument("InfoNCE: every anchor lacks positives (" + std::to_string(r.skipped) +
                          " skipped)");
  }
  return count;
}

// Per-anchor term over log-numerators F [n x n]:
//   L_i = log sum_{k != i} exp(F_ik) - mean_{j in P_i} F_ij.
// Returns L_i and writes dL_i/dF_i. into coef (row i).
double anchor_term(const Mat& F, std::size_t i, std::size_t n, const std::vector<std::uint8_t>& positives,
                   std::size_t count, Mat& coef) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k)
    if (k != i) mx = std::max(mx, F[i * n + k]);
  double s = 0.0, pos = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (k == i) continue;
    s += std::exp(F[i * n + k] - mx);
    if (positives[i * n + k]) pos += F[i * n + k];
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (k == i) continue;
    coef[i * n + k] = std::exp(F[i * n + k] - mx) / s - (positives[i * n + k] ? 1.0 / double(count) : 0.0);
  }
  return mx + std::log(s) - pos / double(count);
}

}  // namespace

// Both losses run as single fused nodes evaluated in double: the similarity
// logits are scaled by 1/tau, so rounding them to Real would put ~10 ulps of
// noise on the loss.
InfoNceResult quality_loss(const Tensor& z, const std::vector<std::uint8_t>& positives,
                           const std::vector<std::size_t>& anchors, double tau) {
  if (z.ndim() != 2) throw ShapeError("quality_loss: z must be a matrix");
  const std::size_t n = z.rows(), p = z.cols();
  if (positives.size() != n * n) throw ShapeError("quality_loss: positive mask must be n x n");
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("quality_loss: tau must lie in (0, 1)");
  InfoNceResult r;
  const auto count = count_positives(positives, n, anchors, r);
  auto zs = std::make_shared<UnitRows>(unit_rows(z, "quality_loss"));
  Mat F(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) F[i * n + j] = dot_rows(zs->u, i, zs->u, j, p) / tau;
  auto coef = std::make_shared<Mat>(n * n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] == 0) continue;
    const double li = anchor_term(F, i, n, positives, count[i], *coef);
    r.per_anchor[i] = li;
    total += li;
  }
  const double inv = 1.0 / double(r.evaluated);
  r.loss = detail::make_result(
      "quality_loss", {1, 1}, {static_cast<Real>(total * inv)}, {z},
      [zs, coef, n, p, tau, inv](detail::Node& node) {
        const double w = node.grad[0] * inv / tau;
        Mat gu(n * p, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < n; ++k) {
            const double a = (*coef)[i * n + k] * w;
            if (a == 0.0) continue;
            for (std::size_t d = 0; d < p; ++d) {
              gu[i * p + d] += a * zs->u[k * p + d];
              gu[k * p + d] += a * zs->u[i * p + d];
            }
          }
        normalize_backward(*node.parents[0], *zs, gu, p);
      });
  return r;
}

InfoNceResult content_loss(const Tensor& c, const Tensor& c_hat,
                           const std::vector<std::uint8_t>& same_source, double tau) {
  if (c.ndim() != 2 || c.shape() != c_hat.shape()) {
    throw ShapeError("content_loss: c and c_hat must be matrices of equal shape");
  }
  const std::size_t n = c.rows(), p = c.cols();
  if (same_source.size() != n * n) throw ShapeError("content_loss: mask must be B x B");
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidArgument("content_loss: tau must lie in (0, 1)");
  InfoNceResult r;
  std::vector<std::size_t> anchors(n);
  for (std::size_t i = 0; i < n; ++i) anchors[i] = i;
  const auto count = count_positives(same_source, n, anchors, r);
  auto cs = std::make_shared<UnitRows>(unit_rows(c, "content_loss"));
  auto hs = std::make_shared<UnitRows>(unit_rows(c_hat, "content_loss"));
  // F_ij = log(exp(a_ij) + exp(b_ij)), a = cos(c_i, c_j)/tau, b = cos(c_i, c_hat_j)/tau.
  Mat F(n * n);
  auto share_a = std::make_shared<Mat>(n * n);  // dF/da
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double a = dot_rows(cs->u, i, cs->u, j, p) / tau;
      const double b = dot_rows(cs->u, i, hs->u, j, p) / tau;
      const double mx = std::max(a, b);
      F[i * n + j] = mx + std::log(std::exp(a - mx) + std::exp(b - mx));
      (*share_a)[i * n + j] = std::exp(a - F[i * n + j]);
    }
  auto coef = std::make_shared<Mat>(n * n, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (count[i] == 0) continue;
    const double li = anchor_term(F, i, n, same_source, count[i], *coef);
    r.per_anchor[i] = li;
    total += li;
  }
  const double inv = 1.0 / double(r.evaluated);
  r.loss = detail::make_result(
      "content_loss", {1, 1}, {static_cast<Real>(total * inv)}, {c, c_hat},
      [cs, hs, coef, share_a, n, p, tau, inv](detail::Node& node) {
        const double w = node.grad[0] * inv / tau;
        Mat gu(n * p, 0.0), gv(n * p, 0.0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < n; ++k) {
            const double a = (*coef)[i * n + k] * w;
            if (a == 0.0) continue;
            const double sa = (*share_a)[i * n + k], sb = 1.0 - sa;
            for (std::size_t d = 0; d < p; ++d) {
              gu[i * p + d] += a * (sa * cs->u[k * p + d] + sb * hs->u[k * p + d]);
              gu[k * p + d] += a * sa * cs->u[i * p + d];
              gv[k * p + d] += a * sb * cs->u[i * p + d];
            }
          }
        normalize_backward(*node.parents[0], *cs, gu, p);
        normalize_backward(*node.parents[1], *hs, gv, p);
      });
  return r;
}

Tensor total_loss(const InfoNceResult& quality, const InfoNceResult* content, double lambda1) {
  if (content == nullptr || content->evaluated == 0 || lambda1 == 0.0) return quality.loss;
  const double value = double(quality.loss.item()) + lambda1 * double(content->loss.item());
  return detail::make_result("total_loss", {1, 1}, {static_cast<Real>(value)},
                             {quality.loss, content->loss}, [lambda1](detail::Node& node) {
                               const Real g = node.grad[0];
                               if (node.parents[0]->requires_grad) node.parents[0]->accumulate(0, g);
                               if (node.parents[1]->requires_grad) {
                                 node.parents[1]->accumulate(0, static_cast<Real>(g * lambda1));
                               }
                             });
}

double total_loss(std::span<const std::optional<double>> quality,
                  std::span<const std::optional<double>> content, double lambda1) {
  double q = 0.0, c = 0.0;
  std::size_t nq = 0, nc = 0;
  for (const auto& v : quality) {
    if (v) {
      q += *v;
      ++nq;
    }
  }
  for (const auto& v : content) {
    if (v) {
      c += *v;
      ++nc;
    }
  }
  if (nq == 0) throw InvalidArgument("total_loss: no evaluated quality anchors");
  double total = q / double(nq);
  if (nc > 0) total += lambda1 * c / double(nc);
  return total;
}

}  // namespace rmtbvqa
