// Command-line front end for the pipeline.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "json.hpp"
#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/ops.hpp"
#include "rmtbvqa/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rmtbvqa;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
  std::optional<std::size_t> workers;
};

void add_common(CLI::App* cmd, Common& c, bool needs_out) {
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Run seed");
  auto* out = cmd->add_option("--out", c.out, "Output directory");
  if (needs_out) out->required();
  cmd->add_option("--set", c.sets, "Config override KEY=JSON_VALUE (repeatable)");
  cmd->add_option("--workers", c.workers, "Worker threads for labeling and encoding");
}

// Flag overrides collected per subcommand; a key set twice is a conflict.
class Overrides {
 public:
  void put(const std::string& key, json value, const std::string& origin) {
    auto [it, fresh] = origins_.emplace(key, origin);
    if (!fresh) throw InvalidArgument("conflicting settings for '" + key + "': " + it->second + " and " + origin);
    values_[key] = std::move(value);
  }
  const json& values() const { return values_; }

 private:
  json values_ = json::object();
  std::map<std::string, std::string> origins_;
};

RunConfig resolve(const Common& c, Overrides& o) {
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw InvalidArgument("--set expects KEY=VALUE, got '" + s + "'");
    const std::string key = s.substr(0, eq), raw = s.substr(eq + 1);
    json v = json::parse(raw, nullptr, false);
    if (v.is_discarded()) v = raw;
    o.put(key, v, "--set " + key);
  }
  if (c.seed) o.put("seed", *c.seed, "--seed");
  if (c.workers) o.put("workers", *c.workers, "--workers");
  RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::from_file(c.config);
  cfg.merge(o.values());
  if (cfg.metric_command.empty() && cfg.metric != "psnr") {
    if (const char* env = std::getenv("RMTBVQA_METRIC_CMD"); env && *env) cfg.metric_command = env;
  }
  cfg.validate();
  return cfg;
}

json path_json(const std::string& p) { return fs::absolute(p).lexically_normal().string(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive recurrent-memory video quality pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  Common c;
  Overrides o;
  std::string videos, manifest, checkpoint, embeddings, labels;
  bool resume = false, inject_fault = false;
  std::size_t stop_after = 0, max_frames = 0, frames = 72;
  std::optional<std::string> metric, metric_command;
  std::optional<std::size_t> epochs, repeats;
  std::vector<std::size_t> sweep_m, sweep_s;

  auto* synth = app.add_subcommand("synth-data", "Generate synthetic degraded videos, references and labels");
  add_common(synth, c, true);

  auto* extract = app.add_subcommand("extract", "Cut patches, downsamples and rotations into a manifest");
  add_common(extract, c, true);
  extract->add_option("--videos", videos, "Video list CSV")->required()->check(CLI::ExistingFile);

  auto* label = app.add_subcommand("label", "Score patches with the proxy metric");
  add_common(label, c, true);
  label->add_option("--manifest", manifest, "Manifest CSV")->required()->check(CLI::ExistingFile);
  label->add_option("--metric", metric, "Metric name (psnr or the external metric's name)");
  label->add_option("--metric-command", metric_command,
                    "External metric command template with {enh} and {ref}; also read from RMTBVQA_METRIC_CMD");

  auto* train = app.add_subcommand("train", "Contrastive training of the recurrent model");
  add_common(train, c, true);
  train->add_option("--manifest", manifest, "Labeled manifest CSV")->required()->check(CLI::ExistingFile);
  train->add_option("--epochs", epochs, "Training epochs");
  train->add_flag("--resume", resume, "Continue from OUT/train_state");
  train->add_option("--stop-after-epoch", stop_after, "Stop once this many epochs are complete");

  auto* embed = app.add_subcommand("embed", "Pooled video embeddings from a checkpoint");
  add_common(embed, c, true);
  embed->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
  embed->add_option("--videos", videos, "Video list CSV")->required()->check(CLI::ExistingFile);
  embed->add_option("--max-frames", max_frames, "Use at most this many frames per video");

  auto* evaluate = app.add_subcommand("evaluate", "Repeated source-split cross-validation of ridge regression");
  add_common(evaluate, c, true);
  evaluate->add_option("--embeddings", embeddings, "Directory written by embed")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--labels", labels, "Labels CSV")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--repeats", repeats, "Cross-validation repeats");

  auto* sweep = app.add_subcommand("sweep", "Final training loss over a grid of memory sizes and segment lengths");
  add_common(sweep, c, true);
  sweep->add_option("--manifest", manifest, "Labeled manifest CSV")->required()->check(CLI::ExistingFile);
  sweep->add_option("--M", sweep_m, "Memory token counts");
  sweep->add_option("--S", sweep_s, "Segment lengths");
  sweep->add_option("--epochs", epochs, "Training epochs per cell");

  auto* selfcheck = app.add_subcommand("selfcheck", "Gradient, closed-form and oracle checks");
  selfcheck->add_flag("--inject-fault", inject_fault, "Corrupt the matmul gradient to confirm the checks fail");

  auto* profile = app.add_subcommand("profile", "Time the encoder, forward pass and training step");
  add_common(profile, c, false);
  profile->add_option("--frames", frames, "Frames per video");

  CLI11_PARSE(app, argc, argv);

  try {
    if (selfcheck->parsed()) {
      testing_hooks::set_matmul_grad_fault(inject_fault);
      bool ok = true;
      for (const auto& r : run_selfcheck()) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
        ok = ok && r.passed;
      }
      std::cout << (ok ? "selfcheck passed" : "selfcheck FAILED") << std::endl;
      return ok ? 0 : 1;
    }

    if (metric) o.put("metric", *metric, "--metric");
    if (metric_command) o.put("metric_command", *metric_command, "--metric-command");
    if (epochs) o.put("epochs", *epochs, "--epochs");
    if (repeats) o.put("repeats", *repeats, "--repeats");
    if (!sweep_m.empty()) o.put("sweep_M", sweep_m, "--M");
    if (!sweep_s.empty()) o.put("sweep_S", sweep_s, "--S");
    const RunConfig cfg = resolve(c, o);
    const fs::path out = c.out;

    if (synth->parsed()) {
      write_run_manifest(out, "synth-data", cfg, json::object());
      run_synth(cfg, out);
      std::cout << "wrote " << (out / "videos.csv").string() << " and " << (out / "labels.csv").string() << "\n";
    } else if (extract->parsed()) {
      write_run_manifest(out, "extract", cfg, {{"videos", path_json(videos)}});
      const auto s = run_extract(videos, cfg, out);
      std::cout << s.videos << " videos, " << s.windows << " windows, " << s.rows << " manifest rows -> "
                << (out / "manifest.csv").string() << "\n";
    } else if (label->parsed()) {
      write_run_manifest(out, "label", cfg, {{"manifest", path_json(manifest)}});
      const auto rep = run_label(manifest, cfg, out / "manifest.csv");
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << rep.scored << " scored, " << rep.inherited << " inherited -> " << (out / "manifest.csv").string()
                << "\n";
    } else if (train->parsed()) {
      if (!resume) write_run_manifest(out, "train", cfg, {{"manifest", path_json(manifest)}});
      const auto res = run_train(manifest, cfg, out, resume, stop_after);
      if (res.curve.empty()) throw Error("training produced no steps");
      std::cout << res.curve.size() << " steps, final loss " << res.curve.back().loss << " -> "
                << res.checkpoint.string() << "\n";
    } else if (embed->parsed()) {
      write_run_manifest(out, "embed", cfg,
                         {{"checkpoint", path_json(checkpoint)}, {"videos", path_json(videos)}, {"max_frames", max_frames}});
      const auto t = run_embed(checkpoint, videos, out, max_frames);
      std::cout << t.video_ids.size() << " embeddings -> " << (out / "embeddings.rmtt").string() << "\n";
    } else if (evaluate->parsed()) {
      write_run_manifest(out, "evaluate", cfg, {{"embeddings", path_json(embeddings)}, {"labels", path_json(labels)}});
      const auto rep = run_evaluate(embeddings, labels, cfg, out);
      std::cout << format_summary(rep);
    } else if (sweep->parsed()) {
      write_run_manifest(out, "sweep", cfg, {{"manifest", path_json(manifest)}});
      for (const auto& cell : run_sweep(manifest, cfg, out)) {
        std::cout << "M=" << cell.M << " S=" << cell.S << " final loss " << cell.final_loss << "\n";
      }
    } else if (profile->parsed()) {
      if (!c.out.empty()) write_run_manifest(out, "profile", cfg, {{"frames", frames}});
      for (const auto& r : run_profile(cfg, frames)) {
        std::cout << r.stage << ": " << r.seconds * 1000.0 << " ms (mean of " << r.repeats << ")\n";
      }
    }
  } catch (const ToolError& e) {
    std::cerr << "error: " << e.what() << "\n" << e.output() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
