#include "rmtbvqa/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "rmtbvqa/csv.hpp"
#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/gradcheck.hpp"
#include "rmtbvqa/heads.hpp"
#include "rmtbvqa/manifest.hpp"
#include "rmtbvqa/model.hpp"
#include "rmtbvqa/ops.hpp"
#include "rmtbvqa/patches.hpp"
#include "rmtbvqa/tensor_io.hpp"
#include "rmtbvqa/video.hpp"

namespace rmtbvqa {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig::RunConfig() {
  model.D = 32;
  model.M = 4;
  model.N = 4;
  model.depth = 2;
  model.heads = 4;
  eval.repeats = 100;
}

void RunConfig::validate() const {
  synth.validate();
  for (int k : rotations) {
    if (k < 1 || k > 3) throw InvalidArgument("rotations must be quarter turns in 1..3");
  }
  if (workers == 0) throw InvalidArgument("workers must be >= 1");
  if (!(metric_timeout_s > 0.0)) throw InvalidArgument("metric_timeout_s must be > 0");
  if (metric.empty()) throw InvalidArgument("metric name is empty");
  if (metric_command.empty() && metric != "psnr") {
    throw InvalidArgument("metric '" + metric + "' needs metric_command; only psnr is built in");
  }
  if (!metric_command.empty() && metric == "psnr") {
    throw InvalidArgument("metric_command given but metric is 'psnr'; name the external metric");
  }
  if (encoder == EncoderKind::precomputed && precomputed_index.empty()) {
    throw InvalidArgument("precomputed encoder needs precomputed_index");
  }
  pairing().validate();
  model.validate();
  if (proj_dim == 0) throw InvalidArgument("proj_dim must be positive");
  train.validate();
  eval.validate();
  if (sweep_M.empty() || sweep_S.empty()) throw InvalidArgument("sweep lists must not be empty");
}

json RunConfig::to_json() const {
  std::vector<std::string> kinds;
  for (auto k : synth.kinds) kinds.push_back(to_string(k));
  return {{"seed", seed},
          {"workers", workers},
          {"synth_sources", synth.sources},
          {"synth_width", synth.width},
          {"synth_height", synth.height},
          {"synth_frames", synth.frames},
          {"synth_kinds", kinds},
          {"synth_levels", synth.levels},
          {"rotations", rotations},
          {"metric", metric},
          {"metric_command", metric_command},
          {"metric_pattern", metric_pattern},
          {"metric_timeout_s", metric_timeout_s},
          {"metric_repeat_check", metric_repeat_check},
          {"TH", TH},
          {"encoder", to_string(encoder)},
          {"precomputed_index", precomputed_index},
          {"D", model.D},
          {"M", model.M},
          {"N", model.N},
          {"depth", model.depth},
          {"heads", model.heads},
          {"ffn_mult", model.ffn_mult},
          {"pooling", to_string(model.pooling)},
          {"proj_dim", proj_dim},
          {"B", train.B},
          {"epochs", train.epochs},
          {"base_lr", train.base_lr},
          {"warmup_epochs", train.warmup_epochs},
          {"momentum", train.momentum},
          {"weight_decay", train.weight_decay},
          {"lambda1", train.lambda1},
          {"tau", train.tau},
          {"folds", eval.folds},
          {"repeats", eval.repeats},
          {"inner_folds", eval.inner_folds},
          {"alpha_grid", eval.alpha_grid},
          {"fit_intercept", eval.fit_intercept},
          {"sweep_M", sweep_M},
          {"sweep_S", sweep_S}};
}

void RunConfig::merge(const json& j) {
  if (!j.is_object()) throw InvalidArgument("config must be a JSON object");
  const json known = to_json();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) throw InvalidArgument("unknown config key '" + it.key() + "'");
  }
  auto get = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    try {
      dst = j.at(key).get<std::decay_t<decltype(dst)>>();
    } catch (const json::exception&) {
      throw InvalidArgument("config key '" + std::string(key) + "' has the wrong type: " + j.at(key).dump());
    }
  };
  get("seed", seed);
  get("workers", workers);
  get("synth_sources", synth.sources);
  get("synth_width", synth.width);
  get("synth_height", synth.height);
  get("synth_frames", synth.frames);
  if (j.contains("synth_kinds")) {
    std::vector<std::string> kinds;
    get("synth_kinds", kinds);
    synth.kinds.clear();
    for (const auto& k : kinds) synth.kinds.push_back(degradation_from_string(k));
  }
  get("synth_levels", synth.levels);
  get("rotations", rotations);
  get("metric", metric);
  get("metric_command", metric_command);
  get("metric_pattern", metric_pattern);
  get("metric_timeout_s", metric_timeout_s);
  get("metric_repeat_check", metric_repeat_check);
  get("TH", TH);
  if (j.contains("encoder")) {
    std::string e;
    get("encoder", e);
    encoder = encoder_kind_from_string(e);
  }
  get("precomputed_index", precomputed_index);
  get("D", model.D);
  get("M", model.M);
  get("N", model.N);
  get("depth", model.depth);
  get("heads", model.heads);
  get("ffn_mult", model.ffn_mult);
  if (j.contains("pooling")) {
    std::string p;
    get("pooling", p);
    model.pooling = pooling_from_string(p);
  }
  get("proj_dim", proj_dim);
  get("B", train.B);
  get("epochs", train.epochs);
  get("base_lr", train.base_lr);
  get("warmup_epochs", train.warmup_epochs);
  get("momentum", train.momentum);
  get("weight_decay", train.weight_decay);
  get("lambda1", train.lambda1);
  get("tau", train.tau);
  get("folds", eval.folds);
  get("repeats", eval.repeats);
  get("inner_folds", eval.inner_folds);
  get("alpha_grid", eval.alpha_grid);
  get("fit_intercept", eval.fit_intercept);
  get("sweep_M", sweep_M);
  get("sweep_S", sweep_S);
}

RunConfig RunConfig::from_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config " + path.string());
  RunConfig cfg;
  try {
    cfg.merge(json::parse(in, nullptr, true, true));
  } catch (const json::parse_error& e) {
    throw FormatError("config " + path.string() + ": " + e.what());
  }
  return cfg;
}

EncoderSpec RunConfig::encoder_spec() const {
  return {encoder, model.D, derive_seed(seed, "encoder"), precomputed_index};
}

FitConfig RunConfig::fit_config() const {
  FitConfig f;
  f.train = train;
  f.train.seed = seed;
  f.rmvit = model;
  f.proj_dim = proj_dim;
  f.pairing = pairing();
  f.encoder = encoder_spec();
  return f;
}

PairingConfig RunConfig::pairing() const { return {TH, metric}; }

LabelConfig RunConfig::label_config() const {
  LabelConfig l;
  l.metric = metric;
  l.workers = workers;
  if (!metric_command.empty()) {
    l.external = ExternalMetric{metric_command, metric, metric_pattern,
                                std::chrono::milliseconds(std::llround(metric_timeout_s * 1000.0)),
                                metric_repeat_check};
  }
  return l;
}

void write_run_manifest(const fs::path& dir, const std::string& command, const RunConfig& cfg, const json& inputs) {
  fs::create_directories(dir);
  json j = {{"command", command}, {"version", kVersion}, {"seed", cfg.seed}, {"config", cfg.to_json()},
            {"inputs", inputs}};
  const fs::path tmp = dir / "run_manifest.json.tmp";
  std::ofstream(tmp) << j.dump(2) << "\n";
  fs::rename(tmp, dir / "run_manifest.json");
}

void run_synth(const RunConfig& cfg, const fs::path& out) {
  SynthConfig s = cfg.synth;
  s.seed = cfg.seed;
  write_synth_corpus(out, s);
}

ExtractSummary run_extract(const fs::path& videos_csv, const RunConfig& cfg, const fs::path& out) {
  const auto list = read_video_list(videos_csv);
  const fs::path base = videos_csv.parent_path();
  std::map<std::string, const VideoEntry*> by_id;
  for (const auto& v : list) by_id[v.video_id] = &v;
  fs::create_directories(out / "patches");

  Manifest m;
  m.seed = cfg.seed;
  std::set<std::string> written;
  ExtractSummary summary;
  auto emit = [&](const Patch& p) {
    const std::string rel = "patches/" + p.patch_id + ".rmtt";
    if (!written.insert(p.patch_id).second) return;
    save_patch(out / rel, p);
    m.rows.push_back(row_for(p, rel));
  };
  for (const auto& v : list) {
    if (v.reference_video_id.empty()) continue;
    auto ref_it = by_id.find(v.reference_video_id);
    if (ref_it == by_id.end()) {
      throw InvalidArgument("video " + v.video_id + " names unknown reference " + v.reference_video_id);
    }
    const RawVideo enh = read_video(base / v.path, v.source_id);
    const RawVideo ref = read_video(base / ref_it->second->path, v.source_id);
    const auto pairs = extract_patches(enh, &ref, cfg.seed, {v.video_id, v.enhancement_tag, v.reference_video_id});
    ++summary.videos;
    summary.windows += pairs.size();
    for (const auto& pair : pairs) {
      emit(*pair.reference);
      emit(pair.enhanced);
      emit(downsample_patch(pair.enhanced));
      for (int k : cfg.rotations) {
        const Patch rot = augment_rotate(pair.enhanced, k);
        emit(rot);
        emit(downsample_patch(rot));
      }
    }
  }
  const auto problems = validate_manifest(m, out, true);
  if (!problems.empty()) throw FormatError("extracted manifest is invalid: " + problems.front());
  write_manifest(out / "manifest.csv", m);
  summary.rows = m.rows.size();
  return summary;
}

LabelReport run_label(const fs::path& manifest, const RunConfig& cfg, const fs::path& out_manifest) {
  Manifest m = read_manifest(manifest);
  const fs::path base = manifest.parent_path();
  LabelReport report;
  Manifest labeled = label_manifest(m, base, cfg.label_config(), &report);
  const fs::path out_dir = out_manifest.parent_path();
  if (fs::weakly_canonical(fs::absolute(out_dir)) != fs::weakly_canonical(fs::absolute(base))) {
    fs::create_directories(out_dir);
    for (auto& r : labeled.rows) {
      r.path = fs::relative(fs::absolute(base / r.path), fs::absolute(out_dir)).generic_string();
    }
  }
  write_manifest(out_manifest, labeled);
  return report;
}

FitResult run_train(const fs::path& manifest, const RunConfig& cfg, const fs::path& out, bool resume,
                    std::size_t stop_after_epoch) {
  cfg.validate();
  const Manifest m = read_manifest(manifest);
  const FrameEncoder encoder(cfg.encoder_spec());
  const TrainingSet set = build_training_set(m, manifest.parent_path(), encoder, cfg.workers);
  FitOptions opts{out};
  opts.resume = resume;
  opts.stop_after_epoch = stop_after_epoch;
  return fit(set, encoder, cfg.fit_config(), opts);
}

EmbeddingTable run_embed(const fs::path& checkpoint, const fs::path& videos_csv, const fs::path& out,
                         std::size_t max_frames) {
  CheckpointInfo info;
  const Model model = load_checkpoint(checkpoint, &info);
  const FrameEncoder encoder(info.encoder);
  if (encoder.fingerprint() != info.encoder_fingerprint) {
    throw InvalidArgument("encoder rebuilt from the checkpoint does not match the one used in training");
  }
  const auto list = read_video_list(videos_csv);
  EmbeddingTable table;
  for (const auto& v : list) {
    RawVideo video = read_video(videos_csv.parent_path() / v.path, v.source_id);
    if (max_frames != 0 && video.frame_count > max_frames) {
      video.frame_count = max_frames;
      video.pixels.resize(video.frame_bytes() * max_frames);
    }
    const Tensor frames = encoder.encode_video(video, v.video_id);
    auto h = embed_video(model, frames);
    table.video_ids.push_back(v.video_id);
    table.h_v.emplace_back(h.begin(), h.end());
  }
  if (!out.empty()) write_embeddings(out, table);
  return table;
}

void write_embeddings(const fs::path& out, const EmbeddingTable& t) {
  if (t.h_v.empty()) throw InvalidArgument("no embeddings to write");
  fs::create_directories(out);
  const std::size_t D = t.h_v[0].size();
  std::vector<double> flat;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t i = 0; i < t.h_v.size(); ++i) {
    flat.insert(flat.end(), t.h_v[i].begin(), t.h_v[i].end());
    rows.push_back({t.video_ids[i], std::to_string(i)});
  }
  save_raw(out / "embeddings.rmtt", {t.h_v.size(), D}, std::span<const double>(flat), RmttDtype::f64);
  csv::write(out / "embeddings.csv", {"video_id", "row"}, rows);
}

EmbeddingTable read_embeddings(const fs::path& dir) {
  const RawArray arr = load_raw(dir / "embeddings.rmtt");
  if (arr.shape.size() != 2) throw FormatError("embeddings.rmtt must be a matrix");
  const auto idx = csv::read(dir / "embeddings.csv", {"video_id", "row"});
  EmbeddingTable t;
  const std::size_t D = arr.shape[1];
  for (const auto& row : idx.rows) {
    const std::size_t r = std::stoull(row[idx.column("row")]);
    if (r >= arr.shape[0]) throw FormatError("embeddings.csv: row " + std::to_string(r) + " out of range");
    t.video_ids.push_back(row[idx.column("video_id")]);
    t.h_v.emplace_back(arr.data.begin() + r * D, arr.data.begin() + (r + 1) * D);
  }
  return t;
}

CrossValReport run_evaluate(const fs::path& embeddings_dir, const fs::path& labels_csv, const RunConfig& cfg,
                            const fs::path& out) {
  const auto emb = read_embeddings(embeddings_dir);
  std::map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < emb.video_ids.size(); ++i) row_of[emb.video_ids[i]] = i;
  std::vector<LabeledVideo> videos;
  for (const auto& l : read_labels(labels_csv)) {
    auto it = row_of.find(l.video_id);
    if (it == row_of.end()) throw InvalidArgument("labels name video " + l.video_id + " with no embedding");
    videos.push_back({l.video_id, l.source_id, l.subset_tag, emb.h_v[it->second], l.mos});
  }
  CvConfig cv = cfg.eval;
  cv.seed = cfg.seed;
  CrossValReport report = cross_validate(videos, cv);
  if (!out.empty()) {
    fs::create_directories(out);
    write_report(out / "report.csv", report);
    std::ofstream(out / "summary.txt") << format_summary(report);
  }
  return report;
}

std::vector<SweepCell> run_sweep(const TrainingSet& set, const FrameEncoder& encoder, const RunConfig& cfg,
                                 const fs::path& out) {
  std::vector<SweepCell> cells;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t M : cfg.sweep_M) {
    for (std::size_t S : cfg.sweep_S) {
      RunConfig c = cfg;
      c.model.M = M;
      c.model.N = S;
      c.validate();
      const auto res = fit(set, encoder, c.fit_config(),
                           {out / ("cell_M" + std::to_string(M) + "_S" + std::to_string(S))});
      SweepCell cell{M, S, 0.0, res.curve.back().loss};
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto& r : res.curve) {
        if (r.epoch == res.curve.back().epoch) {
          sum += r.loss;
          ++n;
        }
      }
      cell.final_loss = sum / double(n);
      cells.push_back(cell);
      rows.push_back({std::to_string(M), std::to_string(S), std::to_string(c.train.epochs),
                      csv::format_real(cell.final_loss), csv::format_real(cell.last_step_loss)});
    }
  }
  csv::write(out / "sweep.csv", {"M", "S", "epochs", "final_loss", "last_step_loss"}, rows);
  return cells;
}

std::vector<SweepCell> run_sweep(const fs::path& manifest, const RunConfig& cfg, const fs::path& out) {
  cfg.validate();
  const Manifest m = read_manifest(manifest);
  const FrameEncoder encoder(cfg.encoder_spec());
  const TrainingSet set = build_training_set(m, manifest.parent_path(), encoder, cfg.workers);
  return run_sweep(set, encoder, cfg, out);
}

namespace {

std::vector<Real> random_values(std::size_t n, Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<Real> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

Tensor random_param(std::size_t r, std::size_t c, Rng& rng) { return Tensor::matrix(r, c, random_values(r * c, rng), true); }

CheckResult gradient_check(const std::string& name, const std::function<Tensor()>& loss, const NamedTensors& params) {
  const auto rep = gradcheck(loss, params);
  return {name, rep.ok(),
          std::to_string(rep.checked) + " entries, " + std::to_string(rep.failed) + " failed, max abs error " +
              csv::format_real(rep.max_abs_error)};
}

}  // namespace

std::vector<CheckResult> run_selfcheck() {
  std::vector<CheckResult> out;
  Rng rng(derive_seed(0, "selfcheck"));

  {
    Tensor a = random_param(3, 4, rng), b = random_param(4, 5, rng);
    out.push_back(gradient_check("matmul gradient", [&] { return sum_all(mul(matmul(a, b), matmul(a, b))); },
                                 {{"a", a}, {"b", b}}));
  }
  {
    Tensor x = random_param(4, 6, rng), g = random_param(1, 6, rng), b = random_param(1, 6, rng);
    Tensor w = Tensor::matrix(4, 6, random_values(24, rng));
    out.push_back(gradient_check("layer_norm and softmax gradients",
                                 [&] { return sum_all(mul(softmax_rows(layer_norm(x, g, b)), w)); },
                                 {{"x", x}, {"gain", g}, {"bias", b}}));
  }
  {
    RmvitConfig cfg;
    cfg.D = 8;
    cfg.M = 2;
    cfg.N = 2;
    cfg.depth = 1;
    cfg.heads = 2;
    Model m = Model::init(cfg, 6, 3);
    BatchAnnotations ann;
    ann.B = 3;
    for (std::size_t i = 0; i < 3; ++i) ann.items.push_back({"f" + std::to_string(i), i < 2 ? "a" : "b", Resolution::full, 30.0 + 5.0 * i, "psnr"});
    for (std::size_t i = 0; i < 3; ++i) ann.items.push_back({"d" + std::to_string(i), i < 2 ? "a" : "b", Resolution::down, 30.0 + 5.0 * i, "psnr"});
    std::vector<Tensor> frames;
    for (std::size_t i = 0; i < 6; ++i) frames.push_back(Tensor::matrix(5, cfg.D, random_values(5 * cfg.D, rng)));
    out.push_back(gradient_check(
        "model and contrastive loss gradient",
        [&] { return batch_loss(m, frames, ann, {3.0, "psnr"}, {0.1, 1.0}).total; }, m.named()));
  }
  {
    const std::size_t B = 2;
    Tensor z = Tensor::matrix(2 * B, 4, std::vector<Real>(2 * B * 4, 0.5));
    std::vector<std::uint8_t> pos(4 * B * B, 1);
    for (std::size_t i = 0; i < 2 * B; ++i) pos[i * 2 * B + i] = 0;
    const double q = quality_loss(z, pos, {0, 1}, 0.1).loss.item();
    Tensor c = Tensor::matrix(3, 4, std::vector<Real>(12, 0.5));
    std::vector<std::uint8_t> same(9, 1);
    for (std::size_t i = 0; i < 3; ++i) same[i * 3 + i] = 0;
    const double cl = content_loss(c, c, same, 0.1).loss.item();
    const bool ok = std::abs(q - std::log(3.0)) < 1e-5 && std::abs(cl - std::log(2.0)) < 1e-5;
    out.push_back({"loss closed forms", ok,
                   "quality " + csv::format_real(q) + " (log 3), content " + csv::format_real(cl) + " (log 2)"});
  }
  {
    std::uniform_int_distribution<int> small(0, 4);
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<double> a(12), b(12);
      for (auto& x : a) x = small(rng);
      for (auto& x : b) x = small(rng);
      a[0] = 10;
      b[0] = -10;
      std::vector<double> ra(12), rb(12);
      for (std::size_t i = 0; i < 12; ++i) {
        double la = 0, ea = 0, lb = 0, eb = 0;
        for (std::size_t k = 0; k < 12; ++k) {
          la += a[k] < a[i];
          ea += a[k] == a[i];
          lb += b[k] < b[i];
          eb += b[k] == b[i];
        }
        ra[i] = la + (ea + 1) / 2;
        rb[i] = lb + (eb + 1) / 2;
      }
      const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / 12, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / 12;
      double sab = 0, saa = 0, sbb = 0;
      for (std::size_t i = 0; i < 12; ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
      }
      worst = std::max(worst, std::abs(srcc(a, b) - sab / std::sqrt(saa * sbb)));
    }
    out.push_back({"rank statistic oracle", worst < 1e-12, "max deviation " + csv::format_real(worst)});
  }
  {
    const auto m = ridge_fit({{1, 0}, {0, 1}}, std::vector<double>{1, 2}, 1.0, false);
    const bool ok = std::abs(m.weights[0] - 0.5) < 1e-12 && std::abs(m.weights[1] - 1.0) < 1e-12;
    out.push_back({"ridge closed form", ok,
                   "w = [" + csv::format_real(m.weights[0]) + ", " + csv::format_real(m.weights[1]) + "]"});
  }
  {
    const auto p = TrainConfig::full_scale();
    const bool ok = lr_at(0, p) == 0.0 && lr_at(p.warmup_epochs, p) == p.base_lr &&
                    lr_at(double(p.epochs), p) < 1e-9 * p.base_lr;
    out.push_back({"learning-rate schedule", ok, "warmup end " + csv::format_real(lr_at(p.warmup_epochs, p))});
  }
  return out;
}

std::vector<ProfileRow> run_profile(const RunConfig& cfg, std::size_t frames) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  auto seconds = [](clock::time_point a) { return std::chrono::duration<double>(clock::now() - a).count(); };
  std::vector<ProfileRow> rows;
  Rng rng(derive_seed(cfg.seed, "profile"));

  const FrameEncoder encoder(cfg.encoder_spec());
  if (cfg.encoder != EncoderKind::precomputed) {
    std::vector<Real> frame(kFullSize * kFullSize * 3);
    std::uniform_real_distribution<double> u(0, 255);
    for (auto& x : frame) x = u(rng);
    const std::size_t reps = 20;
    auto t0 = clock::now();
    for (std::size_t i = 0; i < reps; ++i) encoder.encode_frame(frame, kFullSize, kFullSize);
    rows.push_back({"encode_frame 256x256", seconds(t0) / reps, reps});
  }

  const Model model = Model::init(cfg.model, cfg.proj_dim, cfg.seed);
  const Tensor video = Tensor::matrix(frames, cfg.model.D, random_values(frames * cfg.model.D, rng));
  {
    const std::size_t reps = 5;
    auto t0 = clock::now();
    for (std::size_t i = 0; i < reps; ++i) embed_video(model, video);
    rows.push_back({"forward " + std::to_string(frames) + " frames (no grad)", seconds(t0) / reps, reps});
  }
  {
    TrainingSet set;
    for (std::size_t i = 0; i < cfg.train.B; ++i) {
      TrainingItem it;
      it.patch_id = "p" + std::to_string(i);
      it.down_id = it.patch_id + "_down";
      it.source_id = "s" + std::to_string(i % 2);
      it.score = 20.0 + double(i);
      it.metric = cfg.metric;
      it.full_frames = Tensor::matrix(frames, cfg.model.D, random_values(frames * cfg.model.D, rng));
      it.down_frames = Tensor::matrix(frames, cfg.model.D, random_values(frames * cfg.model.D, rng));
      set.items.push_back(std::move(it));
    }
    Model m = Model::init(cfg.model, cfg.proj_dim, cfg.seed);
    TrainState state;
    std::vector<std::size_t> picks(cfg.train.B);
    std::iota(picks.begin(), picks.end(), 0);
    const Batch batch = make_batch(set, picks);
    const std::size_t reps = 3;
    auto t0 = clock::now();
    for (std::size_t i = 0; i < reps; ++i) train_step(m, state, batch, cfg.train, cfg.pairing(), 1e-4);
    rows.push_back({"train_step B=" + std::to_string(cfg.train.B), seconds(t0) / reps, reps});
  }
  return rows;
}

}  // namespace rmtbvqa
