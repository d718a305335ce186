#include "rmtbvqa/trainer.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "rmtbvqa/csv.hpp"
#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/tensor_io.hpp"

namespace rmtbvqa {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
  if (B < 2) throw InvalidArgument("B must be >= 2");
  if (epochs == 0) throw InvalidArgument("epochs must be positive");
  if (!(warmup_epochs >= 0.0) || !(warmup_epochs < double(epochs))) {
    throw InvalidArgument("warmup_epochs must lie in [0, epochs)");
  }
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) throw InvalidArgument("base_lr must be finite and >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight_decay must be >= 0");
  LossWeights{tau, lambda1}.validate();
}

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.B = 256;
  c.epochs = 150;
  c.base_lr = 0.00025;
  c.warmup_epochs = 10.0;
  return c;
}

double lr_at(double t, const TrainConfig& cfg) {
  const double E = double(cfg.epochs), w = cfg.warmup_epochs;
  t = std::clamp(t, 0.0, E);
  if (t < w) return cfg.base_lr * t / w;
  return cfg.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * (t - w) / (E - w)));
}

void sgd_step(const NamedTensors& params, std::vector<std::vector<Real>>& velocity, double lr, double momentum,
              double weight_decay) {
  if (velocity.empty()) {
    for (const auto& [name, t] : params) velocity.emplace_back(t.numel(), 0.0);
  }
  if (velocity.size() != params.size()) throw InvalidArgument("optimizer state does not match parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k].second;
    auto& v = velocity[k];
    auto g = p.grad();
    auto w = p.mutable_data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum * v[i] + g[i] + weight_decay * w[i];
      w[i] -= lr * v[i];
    }
  }
}

TrainingSet build_training_set(const Manifest& m, const fs::path& base_dir, const FrameEncoder& encoder,
                               std::size_t workers) {
  std::unordered_map<std::string, std::size_t> down_of;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& r = m.rows[i];
    if (r.resolution == Resolution::down) down_of.emplace(r.reference_link, i);
  }
  struct Job {
    std::size_t full, down;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& r = m.rows[i];
    if (r.is_reference() || r.resolution != Resolution::full) continue;
    if (!r.proxy_score) throw InvalidArgument("patch " + r.patch_id + " has no proxy score; run label first");
    auto it = down_of.find(r.patch_id);
    if (it == down_of.end()) throw InvalidArgument("patch " + r.patch_id + " has no down-sampled counterpart");
    jobs.push_back({i, it->second});
  }

  TrainingSet set;
  set.items.resize(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto load = [&](std::size_t row) {
    const auto& r = m.rows[row];
    Patch p;
    p.patch_id = r.patch_id;
    p.resolution = r.resolution;
    p.pixels = load_patch_pixels(base_dir / r.path, p.size, p.frames);
    return encoder.encode_patch(p);
  };
  auto worker = [&] {
    for (std::size_t k; (k = next++) < jobs.size();) {
      try {
        const auto& r = m.rows[jobs[k].full];
        TrainingItem& item = set.items[k];
        item.patch_id = r.patch_id;
        item.down_id = m.rows[jobs[k].down].patch_id;
        item.source_id = r.source_id;
        item.score = *r.proxy_score;
        item.metric = r.metric;
        item.full_frames = load(jobs[k].full);
        item.down_frames = load(jobs[k].down);
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < std::min(std::max<std::size_t>(workers, 1), jobs.size()); ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (!e.empty()) throw Error("encoding training patches: " + e);
  }
  return set;
}

Batch make_batch(const TrainingSet& set, const std::vector<std::size_t>& picks) {
  Batch b;
  b.picks = picks;
  b.annotations.B = picks.size();
  b.annotations.items.resize(2 * picks.size());
  b.frames.resize(2 * picks.size());
  for (std::size_t i = 0; i < picks.size(); ++i) {
    const auto& item = set.items.at(picks[i]);
    b.annotations.items[i] = {item.patch_id, item.source_id, Resolution::full, item.score, item.metric};
    b.annotations.items[picks.size() + i] = {item.down_id, item.source_id, Resolution::down, item.score, item.metric};
    b.frames[i] = item.full_frames;
    b.frames[picks.size() + i] = item.down_frames;
  }
  return b;
}

Batch build_batch(const TrainingSet& set, std::size_t B, Rng& rng) {
  if (set.items.size() < B) {
    throw InvalidArgument("batch of " + std::to_string(B) + " needs at least that many full patches, have " +
                          std::to_string(set.items.size()));
  }
  std::vector<std::size_t> order(set.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_in_place(order, rng);
  order.resize(B);
  return make_batch(set, order);
}

double train_step(Model& model, TrainState& state, const Batch& batch, const TrainConfig& cfg,
                  const PairingConfig& pairing, double lr) {
  const auto params = model.named();
  for (auto [name, t] : params) t.zero_grad();
  auto describe = [&] {
    std::string ids;
    for (const auto& it : batch.annotations.items) ids += (ids.empty() ? "" : ",") + it.patch_id;
    return "step " + std::to_string(state.step + 1) + " (lr " + csv::format_real(lr) + ", batch " + ids + ")";
  };
  double loss = 0.0;
  try {
    BatchLoss bl = batch_loss(model, batch.frames, batch.annotations, pairing, LossWeights{cfg.tau, cfg.lambda1});
    loss = bl.total.item();
    if (!std::isfinite(loss)) throw NumericError("non-finite loss");
    bl.total.backward();
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " at " + describe());
  }
  for (const auto& [name, t] : params) {
    for (Real g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + name + " at " + describe());
    }
  }
  sgd_step(params, state.velocity, lr, cfg.momentum, cfg.weight_decay);
  return loss;
}

std::size_t steps_per_epoch(const TrainingSet& set, std::size_t B) {
  if (set.items.size() < B) {
    throw InvalidArgument("training set has " + std::to_string(set.items.size()) + " full patches, fewer than B=" +
                          std::to_string(B));
  }
  return set.items.size() / B;
}

void write_loss_curve(const fs::path& path, const std::vector<LossRecord>& curve) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : curve) {
    rows.push_back({std::to_string(r.step), std::to_string(r.epoch), csv::format_real(r.lr), csv::format_real(r.loss)});
  }
  csv::write(path, {"step", "epoch", "lr", "loss"}, rows);
}

std::vector<LossRecord> read_loss_curve(const fs::path& path) {
  const auto t = csv::read(path, {"step", "epoch", "lr", "loss"});
  std::vector<LossRecord> out;
  for (const auto& row : t.rows) {
    out.push_back({std::stoull(row[t.column("step")]), std::stoull(row[t.column("epoch")]),
                   csv::parse_real(row[t.column("lr")], "lr"), csv::parse_real(row[t.column("loss")], "loss")});
  }
  return out;
}

namespace {

json train_config_json(const FitConfig& c) {
  const auto& t = c.train;
  return {{"B", t.B},
          {"epochs", t.epochs},
          {"base_lr", t.base_lr},
          {"warmup_epochs", t.warmup_epochs},
          {"momentum", t.momentum},
          {"weight_decay", t.weight_decay},
          {"seed", t.seed},
          {"lambda1", t.lambda1},
          {"tau", t.tau},
          {"TH", c.pairing.TH},
          {"D", c.rmvit.D},
          {"M", c.rmvit.M},
          {"N", c.rmvit.N},
          {"depth", c.rmvit.depth},
          {"heads", c.rmvit.heads},
          {"ffn_mult", c.rmvit.ffn_mult},
          {"pooling", to_string(c.rmvit.pooling)},
          {"proj_dim", c.proj_dim}};
}

void save_state(const fs::path& dir, const TrainState& s, const Model& model, const FitConfig& cfg) {
  const fs::path tmp = dir.string() + ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp / "velocity");
  const auto named = model.named();
  for (std::size_t k = 0; k < s.velocity.size(); ++k) {
    save_tensor(tmp / "velocity" / (named[k].first + ".rmtt"),
                Tensor::from(named[k].second.shape(), s.velocity[k]), RmttDtype::f64);
  }
  std::ostringstream rng;
  rng << s.rng;
  json curve = json::array();
  for (const auto& r : s.curve) curve.push_back({r.step, r.epoch, r.lr, r.loss});
  json j = {{"epoch", s.epoch},
            {"step", s.step},
            {"best_loss", std::isfinite(s.best_loss) ? json(s.best_loss) : json(nullptr)},
            {"rng", rng.str()},
            {"config", train_config_json(cfg)},
            {"curve", curve}};
  std::ofstream(tmp / "state.json") << j.dump(1) << "\n";
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

TrainState load_state(const fs::path& dir, const Model& model, const FitConfig& cfg) {
  std::ifstream in(dir / "state.json");
  if (!in) throw FormatError("cannot resume: missing " + (dir / "state.json").string());
  TrainState s;
  try {
    json j = json::parse(in);
    if (j.at("config") != train_config_json(cfg)) {
      throw InvalidArgument("cannot resume: training configuration differs from the interrupted run");
    }
    s.epoch = j.at("epoch");
    s.step = j.at("step");
    s.best_loss = j.at("best_loss").is_null() ? std::numeric_limits<double>::infinity() : j.at("best_loss").get<double>();
    std::istringstream rng(j.at("rng").get<std::string>());
    rng >> s.rng;
    if (!rng) throw FormatError("cannot resume: bad RNG state");
    for (const auto& r : j.at("curve")) s.curve.push_back({r.at(0), r.at(1), r.at(2), r.at(3)});
  } catch (const json::exception& e) {
    throw FormatError("train state " + dir.string() + ": " + e.what());
  }
  if (s.step > 0) {
    for (const auto& [name, t] : model.named()) {
      Tensor v = load_tensor(dir / "velocity" / (name + ".rmtt"));
      if (v.shape() != t.shape()) throw FormatError("cannot resume: velocity shape mismatch for " + name);
      s.velocity.push_back(v.to_vector());
    }
  }
  return s;
}

}  // namespace

FitResult fit(const TrainingSet& set, const FrameEncoder& encoder, const FitConfig& cfg, const FitOptions& opts) {
  cfg.train.validate();
  cfg.pairing.validate();
  cfg.rmvit.validate();
  if (encoder.dim() != cfg.rmvit.D) {
    throw InvalidArgument("encoder dimension " + std::to_string(encoder.dim()) + " differs from model D=" +
                          std::to_string(cfg.rmvit.D));
  }
  const std::uint64_t fingerprint = encoder.fingerprint();
  const std::size_t spe = steps_per_epoch(set, cfg.train.B);
  fs::create_directories(opts.out_dir);
  const fs::path ckpt = opts.out_dir / "checkpoint";
  const fs::path state_dir = opts.out_dir / "train_state";
  const fs::path curve_path = opts.out_dir / "loss_curve.csv";

  FitResult result;
  TrainState state;
  if (opts.resume) {
    CheckpointInfo info;
    result.model = load_checkpoint(ckpt, &info);
    if (info.encoder_fingerprint != fingerprint) throw InvalidArgument("cannot resume: encoder weights differ");
    state = load_state(state_dir, result.model, cfg);
  } else {
    result.model = Model::init(cfg.rmvit, cfg.proj_dim, derive_seed(cfg.train.seed, "model"));
    state.rng.seed(derive_seed(cfg.train.seed, "batches"));
  }

  CheckpointInfo info{cfg.encoder, fingerprint, state.epoch, state.step};
  while (state.epoch < cfg.train.epochs && (opts.stop_after_epoch == 0 || state.epoch < opts.stop_after_epoch)) {
    std::vector<std::size_t> order(set.items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_in_place(order, state.rng);
    for (std::size_t b = 0; b < spe; ++b) {
      const std::vector<std::size_t> picks(order.begin() + b * cfg.train.B, order.begin() + (b + 1) * cfg.train.B);
      const Batch batch = make_batch(set, picks);
      const double lr = lr_at(double(state.step) / double(spe), cfg.train);
      double loss = 0.0;
      try {
        loss = train_step(result.model, state, batch, cfg.train, cfg.pairing, lr);
      } catch (const NumericError& e) {
        json diag = {{"error", e.what()}, {"step", state.step + 1}, {"epoch", state.epoch + 1}, {"lr", lr}};
        json norms = json::object();
        for (const auto& [name, t] : result.model.named()) {
          double s = 0.0;
          for (Real v : t.data()) s += double(v) * double(v);
          norms[name] = std::sqrt(s);
        }
        diag["parameter_norms"] = norms;
        std::ofstream(opts.out_dir / "diagnostic.json") << diag.dump(2) << "\n";
        throw;
      }
      ++state.step;
      LossRecord rec{state.step, state.epoch + 1, lr, loss};
      state.curve.push_back(rec);
      state.best_loss = std::min(state.best_loss, loss);
      if (opts.on_step) opts.on_step(rec);
    }
    ++state.epoch;
    info.epoch = state.epoch;
    info.step = state.step;
    save_checkpoint(ckpt, result.model, info);
    save_state(state_dir, state, result.model, cfg);
    write_loss_curve(curve_path, state.curve);
  }
  if (encoder.fingerprint() != fingerprint) throw Error("frozen encoder weights changed during training");
  if (state.epoch == 0 && !fs::exists(ckpt)) {
    save_checkpoint(ckpt, result.model, info);
    write_loss_curve(curve_path, state.curve);
  }
  result.checkpoint = ckpt;
  result.loss_curve = curve_path;
  result.curve = state.curve;
  return result;
}

}  // namespace rmtbvqa
