#include "rmtbvqa/model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/ops.hpp"
#include "rmtbvqa/tensor_io.hpp"

namespace rmtbvqa {

namespace fs = std::filesystem;
using nlohmann::json;

Model Model::init(const RmvitConfig& cfg, std::size_t proj_dim, std::uint64_t seed) {
  cfg.validate();
  if (proj_dim == 0) throw InvalidArgument("projection dimension must be positive");
  Model m;
  m.config = cfg;
  m.proj_dim = proj_dim;
  m.rmvit = RmvitParams::init(cfg, seed);
  m.heads = HeadParams::init(cfg.D, proj_dim, seed);
  return m;
}

NamedTensors Model::named() const {
  NamedTensors out;
  for (auto& [n, t] : rmvit.named()) out.emplace_back("rmvit." + n, t);
  for (auto& [n, t] : heads.named()) out.emplace_back("heads." + n, t);
  return out;
}

void BatchAnnotations::validate() const {
  if (B < 2) throw InvalidArgument("batch needs B >= 2");
  if (items.size() != 2 * B) throw InvalidArgument("batch annotations must hold 2B items");
  for (std::size_t i = 0; i < B; ++i) {
    if (items[i].resolution != Resolution::full || items[B + i].resolution != Resolution::down) {
      throw InvalidArgument("batch item " + std::to_string(i) + " is not a full/down pair");
    }
  }
}

std::vector<std::uint8_t> BatchAnnotations::quality_positives(const PairingConfig& pairing) const {
  const std::size_t n = items.size();
  std::vector<std::uint8_t> pos(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const bool counterpart = (i + B == j) || (j + B == i);
      pos[i * n + j] = counterpart || is_positive_pair({items[i].score, items[i].metric},
                                                       {items[j].score, items[j].metric}, pairing);
    }
  }
  return pos;
}

std::vector<std::uint8_t> BatchAnnotations::same_source() const {
  std::vector<std::uint8_t> same(B * B, 0);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < B; ++j) same[i * B + j] = i != j && items[i].source_id == items[j].source_id;
  return same;
}

BatchLoss batch_loss(const Model& model, const std::vector<Tensor>& frames, const BatchAnnotations& batch,
                     const PairingConfig& pairing, const LossWeights& weights) {
  batch.validate();
  weights.validate();
  if (frames.size() != batch.items.size()) throw InvalidArgument("frames and annotations differ in count");
  const std::size_t B = batch.B;
  std::vector<Tensor> hv, c, c_hat;
  for (std::size_t i = 0; i < 2 * B; ++i) {
    auto e = forward_video(frames[i], model.rmvit, model.config);
    hv.push_back(e.h_v);
    if (i < B) {
      c.push_back(content_embedding(e.last_frames_out));
      c_hat.push_back(predict_content(e.mem_prev, model.heads));
    }
  }
  std::vector<std::size_t> anchors(B);
  for (std::size_t i = 0; i < B; ++i) anchors[i] = i;

  BatchLoss out;
  out.quality = quality_loss(project(concat_rows(hv), model.heads), batch.quality_positives(pairing), anchors,
                             weights.tau);
  const auto same = batch.same_source();
  const bool any_same = std::any_of(same.begin(), same.end(), [](auto v) { return v != 0; });
  if (any_same) {
    out.content = content_loss(project(concat_rows(c), model.heads), project(concat_rows(c_hat), model.heads), same,
                               weights.tau);
    out.total = total_loss(out.quality, &out.content, weights.lambda1);
  } else {
    out.content.per_anchor.assign(B, std::nullopt);
    out.content.skipped = B;
    out.total = total_loss(out.quality, nullptr, weights.lambda1);
  }
  return out;
}

std::vector<Real> embed_video(const Model& model, const Tensor& frames) {
  NoGradGuard guard;
  return forward_video(frames, model.rmvit, model.config).h_v.to_vector();
}

namespace {

json rmvit_to_json(const RmvitConfig& c) {
  return {{"D", c.D},         {"M", c.M},           {"N", c.N}, {"depth", c.depth}, {"heads", c.heads},
          {"ffn_mult", c.ffn_mult}, {"pooling", to_string(c.pooling)}};
}

RmvitConfig rmvit_from_json(const json& j) {
  RmvitConfig c;
  c.D = j.at("D");
  c.M = j.at("M");
  c.N = j.at("N");
  c.depth = j.at("depth");
  c.heads = j.at("heads");
  c.ffn_mult = j.at("ffn_mult");
  c.pooling = pooling_from_string(j.at("pooling"));
  c.validate();
  return c;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Model& model, const CheckpointInfo& info) {
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp / "params");
  json names = json::array();
  for (const auto& [name, t] : model.named()) {
    save_tensor(tmp / "params" / (name + ".rmtt"), t, RmttDtype::f64);
    names.push_back(name);
  }
  json meta = {{"format", "rmtbvqa-checkpoint"},
               {"version", 1},
               {"rmvit", rmvit_to_json(model.config)},
               {"proj_dim", model.proj_dim},
               {"encoder",
                {{"kind", to_string(info.encoder.kind)},
                 {"D", info.encoder.D},
                 {"seed", info.encoder.seed},
                 {"precomputed_index", info.encoder.precomputed_index}}},
               {"encoder_fingerprint", hex64(info.encoder_fingerprint)},
               {"epoch", info.epoch},
               {"step", info.step},
               {"tensors", names}};
  std::ofstream(tmp / "meta.json") << meta.dump(2) << "\n";
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

Model load_checkpoint(const fs::path& dir, CheckpointInfo* info) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw FormatError("checkpoint: cannot open " + (dir / "meta.json").string());
  json meta;
  try {
    meta = json::parse(in);
    if (meta.at("format") != "rmtbvqa-checkpoint") throw FormatError("not a checkpoint: " + dir.string());
    Model m;
    m.config = rmvit_from_json(meta.at("rmvit"));
    m.proj_dim = meta.at("proj_dim");
    m.rmvit = RmvitParams::init(m.config, 0);
    m.heads = HeadParams::init(m.config.D, m.proj_dim, 0);
    const auto named = m.named();
    if (meta.at("tensors").size() != named.size()) throw FormatError("checkpoint: tensor count mismatch");
    for (const auto& [name, t] : named) {
      Tensor loaded = load_tensor(dir / "params" / (name + ".rmtt"));
      if (loaded.shape() != t.shape()) {
        throw FormatError("checkpoint: " + name + " has shape " + shape_str(loaded.shape()) + ", expected " +
                          shape_str(t.shape()));
      }
      Tensor handle = t;
      auto dst = handle.mutable_data();
      std::copy(loaded.data().begin(), loaded.data().end(), dst.begin());
    }
    if (info) {
      const auto& e = meta.at("encoder");
      info->encoder.kind = encoder_kind_from_string(e.at("kind"));
      info->encoder.D = e.at("D");
      info->encoder.seed = e.at("seed");
      info->encoder.precomputed_index = e.at("precomputed_index");
      info->encoder_fingerprint = std::stoull(meta.at("encoder_fingerprint").get<std::string>(), nullptr, 16);
      info->epoch = meta.at("epoch");
      info->step = meta.at("step");
    }
    return m;
  } catch (const json::exception& e) {
    throw FormatError("checkpoint " + dir.string() + ": " + e.what());
  }
}

}  // namespace rmtbvqa
