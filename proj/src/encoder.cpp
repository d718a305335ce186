#include "rmtbvqa/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "rmtbvqa/csv.hpp"
#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/random.hpp"
#include "rmtbvqa/tensor_io.hpp"

namespace rmtbvqa {

std::string to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::seeded_projection: return "seeded_projection";
    case EncoderKind::tiny_conv: return "tiny_conv";
    case EncoderKind::precomputed: return "precomputed";
  }
  return "?";
}

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "seeded_projection") return EncoderKind::seeded_projection;
  if (s == "tiny_conv") return EncoderKind::tiny_conv;
  if (s == "precomputed") return EncoderKind::precomputed;
  throw InvalidArgument("unknown encoder kind '" + s + "'");
}

PrecomputedTable PrecomputedTable::load(const std::filesystem::path& index, std::size_t D) {
  auto t = csv::read(index, {"patch_id", "frame_idx", "tensor_path", "row"});
  const std::size_t ci = t.column("patch_id"), cf = t.column("frame_idx"),
                    cp = t.column("tensor_path"), cr = t.column("row");
  PrecomputedTable table;
  table.D_ = D;
  std::map<std::string, RawArray> cache;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    const std::string where = index.string() + ":" + std::to_string(t.line_numbers[i]);
    auto it = cache.find(r[cp]);
    if (it == cache.end()) {
      RawArray a = load_raw(index.parent_path() / r[cp]);
      if (a.shape.size() != 2 || a.shape[1] != D) {
        throw FormatError(where + ": " + r[cp] + " has shape " + shape_str(a.shape) +
                          ", expected [rows x " + std::to_string(D) + "]");
      }
      it = cache.emplace(r[cp], std::move(a)).first;
    }
    const auto row = static_cast<std::size_t>(csv::parse_real(r[cr], where));
    const auto frame = static_cast<std::size_t>(csv::parse_real(r[cf], where));
    if (row >= it->second.shape[0]) throw FormatError(where + ": row out of range");
    const Real* src = it->second.data.data() + row * D;
    table.insert(r[ci], frame, std::vector<Real>(src, src + D));
  }
  return table;
}

void PrecomputedTable::insert(const std::string& id, std::size_t frame, std::vector<Real> v) {
  if (D_ == 0) D_ = v.size();
  if (v.size() != D_) throw ShapeError("precomputed embedding has wrong dimension");
  table_[{id, frame}] = std::move(v);
}

const std::vector<Real>& PrecomputedTable::lookup(const std::string& id, std::size_t frame) const {
  auto it = table_.find({id, frame});
  if (it == table_.end()) {
    throw InvalidArgument("no precomputed embedding for (" + id + ", " + std::to_string(frame) + ")");
  }
  return it->second;
}

FrameEncoder::FrameEncoder(EncoderSpec spec) : spec_(std::move(spec)) {
  if (spec_.D == 0) throw InvalidArgument("encoder dimension must be positive");
  Rng rng(derive_seed(spec_.seed, "encoder:" + to_string(spec_.kind)));
  switch (spec_.kind) {
    case EncoderKind::seeded_projection: {
      const std::size_t in = kPoolGrid * kPoolGrid * 3;
      projection_ = normal_vector(spec_.D * in, 1.0 / std::sqrt(double(in)), rng);
      break;
    }
    case EncoderKind::tiny_conv: {
      // 3->8 (4x4/4), 8->16 (2x2/2), 16->32 (2x2/2), global average pool, 32->D.
      const std::size_t shapes[3][3] = {{3, 8, 4}, {8, 16, 2}, {16, 32, 2}};
      for (const auto& s : shapes) {
        Conv c{s[0], s[1], s[2], {}, {}};
        const std::size_t fan_in = c.in * c.k * c.k;
        c.w = normal_vector(c.out * fan_in, std::sqrt(2.0 / double(fan_in)), rng);
        c.b.assign(c.out, 0.0);
        convs_.push_back(std::move(c));
      }
      projection_ = normal_vector(spec_.D * 32, 1.0 / std::sqrt(32.0), rng);
      break;
    }
    case EncoderKind::precomputed:
      if (!spec_.precomputed_index.empty()) {
        table_ = std::make_shared<PrecomputedTable>(PrecomputedTable::load(spec_.precomputed_index, spec_.D));
      }
      break;
  }
}

std::vector<Real> FrameEncoder::conv_features(std::span<const Real> chw, std::size_t H, std::size_t W) const {
  std::vector<Real> x(chw.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = chw[i] / 255.0 - 0.5;
  std::size_t h = H, w = W;
  for (const auto& c : convs_) {
    const std::size_t oh = h / c.k, ow = w / c.k;
    if (oh == 0 || ow == 0) throw InvalidArgument("tiny_conv: frame too small (needs at least 16x16)");
    std::vector<Real> y(c.out * oh * ow);
    for (std::size_t o = 0; o < c.out; ++o)
      for (std::size_t yy = 0; yy < oh; ++yy)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double s = c.b[o];
          for (std::size_t i = 0; i < c.in; ++i)
            for (std::size_t ky = 0; ky < c.k; ++ky) {
              const Real* row = &x[(i * h + yy * c.k + ky) * w + xx * c.k];
              const Real* wk = &c.w[((o * c.in + i) * c.k + ky) * c.k];
              for (std::size_t kx = 0; kx < c.k; ++kx) s += row[kx] * wk[kx];
            }
          y[(o * oh + yy) * ow + xx] = s > 0.0 ? s : 0.0;
        }
    x = std::move(y);
    h = oh;
    w = ow;
  }
  const std::size_t C = convs_.back().out;
  std::vector<Real> pooled(C, 0.0);
  for (std::size_t o = 0; o < C; ++o) {
    double s = 0.0;
    for (std::size_t i = 0; i < h * w; ++i) s += x[o * h * w + i];
    pooled[o] = s / double(h * w);
  }
  return pooled;
}

std::vector<Real> FrameEncoder::encode_planar(std::span<const Real> chw, std::size_t H, std::size_t W) const {
  if (chw.size() != 3 * H * W) throw ShapeError("encode_frame: buffer does not match 3 x H x W");
  std::vector<Real> features;
  switch (spec_.kind) {
    case EncoderKind::precomputed:
      throw InvalidArgument("precomputed encoder needs an item id, not pixels");
    case EncoderKind::seeded_projection: {
      if (H < kPoolGrid || W < kPoolGrid) throw InvalidArgument("seeded_projection: frame smaller than 32x32");
      features.assign(3 * kPoolGrid * kPoolGrid, 0.0);
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t by = 0; by < kPoolGrid; ++by) {
          const std::size_t y0 = by * H / kPoolGrid, y1 = (by + 1) * H / kPoolGrid;
          for (std::size_t bx = 0; bx < kPoolGrid; ++bx) {
            const std::size_t x0 = bx * W / kPoolGrid, x1 = (bx + 1) * W / kPoolGrid;
            double s = 0.0;
            for (std::size_t y = y0; y < y1; ++y)
              for (std::size_t x = x0; x < x1; ++x) s += chw[(c * H + y) * W + x];
            features[(c * kPoolGrid + by) * kPoolGrid + bx] = s / double((y1 - y0) * (x1 - x0)) / 255.0;
          }
        }
      break;
    }
    case EncoderKind::tiny_conv:
      features = conv_features(chw, H, W);
      break;
  }
  const std::size_t in = features.size();
  std::vector<Real> out(spec_.D, 0.0);
  for (std::size_t d = 0; d < spec_.D; ++d) {
    double s = 0.0;
    const Real* row = &projection_[d * in];
    for (std::size_t i = 0; i < in; ++i) s += row[i] * features[i];
    out[d] = s;
  }
  return out;
}

std::vector<Real> FrameEncoder::encode_frame(std::span<const Real> hwc, std::size_t H, std::size_t W) const {
  if (hwc.size() != 3 * H * W) throw ShapeError("encode_frame: buffer does not match H x W x 3");
  std::vector<Real> chw(hwc.size());
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) chw[(c * H + y) * W + x] = hwc[(y * W + x) * 3 + c];
  return encode_planar(chw, H, W);
}

std::vector<Real> FrameEncoder::encode_frame(const std::string& id, std::size_t frame) const {
  if (spec_.kind != EncoderKind::precomputed) throw InvalidArgument("id lookup needs the precomputed encoder");
  if (!table_) throw InvalidArgument("precomputed encoder has no loaded table");
  return table_->lookup(id, frame);
}

Tensor FrameEncoder::encode_patch(const Patch& p) const {
  std::vector<Real> out;
  out.reserve(p.frames * spec_.D);
  const std::size_t plane = 3 * p.size * p.size;
  if (p.pixels.size() != p.frames * plane && spec_.kind != EncoderKind::precomputed) {
    throw ShapeError("encode_patch: pixel buffer does not match patch dimensions");
  }
  std::vector<Real> chw(plane);
  for (std::size_t t = 0; t < p.frames; ++t) {
    std::vector<Real> e;
    if (spec_.kind == EncoderKind::precomputed) {
      e = encode_frame(p.patch_id, t);
    } else {
      std::copy_n(p.pixels.begin() + static_cast<std::ptrdiff_t>(t * plane), plane, chw.begin());
      e = encode_planar(chw, p.size, p.size);
    }
    out.insert(out.end(), e.begin(), e.end());
  }
  return Tensor::matrix(p.frames, spec_.D, std::move(out));
}

Tensor FrameEncoder::encode_video(const RawVideo& v, const std::string& video_id) const {
  v.validate();
  std::vector<Real> out;
  out.reserve(v.frame_count * spec_.D);
  std::vector<Real> hwc(v.frame_bytes());
  for (std::size_t t = 0; t < v.frame_count; ++t) {
    std::vector<Real> e;
    if (spec_.kind == EncoderKind::precomputed) {
      e = encode_frame(video_id, t);
    } else {
      std::copy_n(v.frame(t), v.frame_bytes(), hwc.begin());
      e = encode_frame(hwc, v.height, v.width);
    }
    out.insert(out.end(), e.begin(), e.end());
  }
  return Tensor::matrix(v.frame_count, spec_.D, std::move(out));
}

std::uint64_t FrameEncoder::fingerprint() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::vector<Real>& v) {
    for (Real x : v) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, sizeof bits);
      h = (h ^ bits) * 1099511628211ull;
    }
  };
  mix(projection_);
  for (const auto& c : convs_) {
    mix(c.w);
    mix(c.b);
  }
  return h;
}

}  // namespace rmtbvqa
