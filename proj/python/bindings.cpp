#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <string>
#include <vector>

#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/eval.hpp"
#include "rmtbvqa/model.hpp"
#include "rmtbvqa/pipeline.hpp"
#include "rmtbvqa/proxy.hpp"
#include "rmtbvqa/tensor.hpp"
#include "rmtbvqa/trainer.hpp"

namespace py = pybind11;
using namespace rmtbvqa;

namespace {

RunConfig config_from(const std::string& json_text) {
  RunConfig cfg;
  if (!json_text.empty()) cfg.merge(nlohmann::json::parse(json_text));
  cfg.validate();
  return cfg;
}

py::dict report_dict(const CrossValReport& r) {
  py::list rows;
  for (const auto& s : r.summary()) {
    py::dict d;
    d["scope"] = s.scope;
    d["subset"] = s.subset;
    d["folds"] = s.folds_scored;
    d["undefined"] = s.folds_undefined;
    d["srcc_mean"] = s.srcc_mean;
    d["srcc_sd"] = s.srcc_sd;
    d["plcc_mean"] = s.plcc_mean;
    d["plcc_sd"] = s.plcc_sd;
    rows.append(d);
  }
  py::dict out;
  out["summary"] = rows;
  out["overall_srcc"] = r.overall_srcc();
  out["notes"] = r.notes;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Contrastive recurrent-memory video quality pipeline";
  m.attr("__version__") = kVersion;

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  m.def("default_config", [] { return RunConfig().to_json().dump(); },
        "Default run configuration as a JSON string.");
  m.def("resolve_config", [](const std::string& j) { return config_from(j).to_json().dump(); }, py::arg("overrides"),
        "Defaults merged with a JSON object of overrides, validated.");

  m.def("srcc", [](const std::vector<double>& a, const std::vector<double>& b) { return srcc(a, b); });
  m.def("plcc", [](const std::vector<double>& a, const std::vector<double>& b) { return plcc(a, b); });
  m.def("fractional_ranks", [](const std::vector<double>& v) { return fractional_ranks(v); });
  m.def(
      "ridge_fit",
      [](const Rows& X, const std::vector<double>& y, double alpha, bool fit_intercept) {
        const RidgeModel r = ridge_fit(X, y, alpha, fit_intercept);
        return py::make_tuple(r.weights, r.intercept);
      },
      py::arg("X"), py::arg("y"), py::arg("alpha"), py::arg("fit_intercept") = true,
      "Returns (weights, intercept).");
  m.def(
      "psnr",
      [](const py::bytes& a, const py::bytes& b) {
        const std::string sa = a, sb = b;
        return psnr(std::span(reinterpret_cast<const std::uint8_t*>(sa.data()), sa.size()),
                    std::span(reinterpret_cast<const std::uint8_t*>(sb.data()), sb.size()));
      },
      "PSNR in dB between two equally sized 8-bit buffers.");
  m.def(
      "lr_at",
      [](double t, double base_lr, double warmup_epochs, std::size_t epochs) {
        TrainConfig c;
        c.base_lr = base_lr;
        c.warmup_epochs = warmup_epochs;
        c.epochs = epochs;
        c.validate();
        return lr_at(t, c);
      },
      py::arg("t"), py::arg("base_lr"), py::arg("warmup_epochs"), py::arg("epochs"));

  m.def(
      "embed_frames",
      [](const std::filesystem::path& checkpoint, const std::vector<std::vector<double>>& frames) {
        const Model model = load_checkpoint(checkpoint);
        if (frames.empty()) throw InvalidArgument("no frames");
        std::vector<Real> flat;
        for (const auto& f : frames) {
          if (f.size() != frames[0].size()) throw InvalidArgument("ragged frame features");
          flat.insert(flat.end(), f.begin(), f.end());
        }
        return embed_video(model, Tensor::matrix(frames.size(), frames[0].size(), flat));
      },
      py::arg("checkpoint"), py::arg("frames"), "Pooled embedding of a [T x D] frame-feature sequence.");

  const auto release = py::call_guard<py::gil_scoped_release>();
  m.def(
      "run_synth", [](const std::string& cfg, const std::filesystem::path& out) { run_synth(config_from(cfg), out); },
      py::arg("config"), py::arg("out"), release);
  m.def(
      "run_extract",
      [](const std::filesystem::path& videos, const std::string& cfg, const std::filesystem::path& out) {
        return run_extract(videos, config_from(cfg), out).rows;
      },
      py::arg("videos"), py::arg("config"), py::arg("out"), release, "Returns the number of manifest rows.");
  m.def(
      "run_label",
      [](const std::filesystem::path& manifest, const std::string& cfg, const std::filesystem::path& out) {
        const LabelReport r = run_label(manifest, config_from(cfg), out);
        return std::make_pair(r.scored, r.inherited);
      },
      py::arg("manifest"), py::arg("config"), py::arg("out_manifest"), release,
      "Returns (scored, inherited) row counts.");
  m.def(
      "run_train",
      [](const std::filesystem::path& manifest, const std::string& cfg, const std::filesystem::path& out) {
        const FitResult r = run_train(manifest, config_from(cfg), out);
        std::vector<double> losses;
        for (const auto& rec : r.curve) losses.push_back(rec.loss);
        return std::make_pair(r.checkpoint, losses);
      },
      py::arg("manifest"), py::arg("config"), py::arg("out"), release,
      "Returns (checkpoint directory, per-step losses).");
  m.def(
      "run_embed",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& videos, const std::filesystem::path& out,
         std::size_t max_frames) {
        const EmbeddingTable t = run_embed(checkpoint, videos, out, max_frames);
        return std::make_pair(t.video_ids, t.h_v);
      },
      py::arg("checkpoint"), py::arg("videos"), py::arg("out"), py::arg("max_frames") = 0, release,
      "Returns (video ids, embeddings).");
  m.def(
      "run_evaluate",
      [](const std::filesystem::path& emb, const std::filesystem::path& labels, const std::string& cfg,
         const std::filesystem::path& out) {
        CrossValReport r;
        {
          py::gil_scoped_release unlock;
          r = run_evaluate(emb, labels, config_from(cfg), out);
        }
        return report_dict(r);
      },
      py::arg("embeddings"), py::arg("labels"), py::arg("config"), py::arg("out"));
  m.def(
      "run_selfcheck",
      [] {
        std::vector<std::tuple<std::string, bool, std::string>> out;
        for (const auto& c : run_selfcheck()) out.emplace_back(c.name, c.passed, c.detail);
        return out;
      },
      release, "Returns (name, passed, detail) per check.");
}
