#include "rmtbvqa/eval.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "rmtbvqa/csv.hpp"
#include "rmtbvqa/errors.hpp"
#include "rmtbvqa/random.hpp"

namespace rmtbvqa {

double RidgeModel::predict(std::span<const double> x) const {
  if (x.size() != weights.size()) throw ShapeError("ridge predict: feature count differs from the model");
  double s = intercept;
  for (std::size_t j = 0; j < x.size(); ++j) s += weights[j] * x[j];
  return s;
}

std::vector<double> RidgeModel::predict(const Rows& X) const {
  std::vector<double> out;
  out.reserve(X.size());
  for (const auto& row : X) out.push_back(predict(row));
  return out;
}

RidgeModel ridge_fit(const Rows& X, std::span<const double> y, double alpha, bool fit_intercept) {
  if (X.empty()) throw InvalidArgument("ridge_fit: no samples");
  if (X.size() != y.size()) throw ShapeError("ridge_fit: X and y differ in length");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw InvalidArgument("ridge_fit: alpha must be finite and >= 0");
  const Eigen::Index n = Eigen::Index(X.size()), d = Eigen::Index(X[0].size());
  if (d == 0) throw InvalidArgument("ridge_fit: no features");
  Eigen::MatrixXd A(n, d);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (Eigen::Index(X[i].size()) != d) throw ShapeError("ridge_fit: ragged feature rows");
    for (Eigen::Index j = 0; j < d; ++j) A(i, j) = X[i][j];
    b(i) = y[i];
  }
  Eigen::RowVectorXd x_mean = Eigen::RowVectorXd::Zero(d);
  double y_mean = 0.0;
  if (fit_intercept) {
    x_mean = A.colwise().mean();
    y_mean = b.mean();
    A.rowwise() -= x_mean;
    b.array() -= y_mean;
  }
  Eigen::MatrixXd G = A.transpose() * A;
  G.diagonal().array() += alpha;
  if (alpha == 0.0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(G, Eigen::EigenvaluesOnly);
    const double hi = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (!(eig.eigenvalues().minCoeff() > 1e-12 * std::max(hi, 1e-300))) {
      throw InvalidArgument("ridge_fit: singular system at alpha = 0 (rank-deficient X)");
    }
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  if (ldlt.info() != Eigen::Success) throw NumericError("ridge_fit: factorization failed");
  Eigen::VectorXd w = ldlt.solve(A.transpose() * b);
  RidgeModel m;
  m.alpha = alpha;
  m.weights.assign(w.data(), w.data() + d);
  m.intercept = fit_intercept ? y_mean - x_mean.dot(w) : 0.0;
  for (double v : m.weights) {
    if (!std::isfinite(v)) throw NumericError("ridge_fit: non-finite weights");
  }
  return m;
}

std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * double(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double plcc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("correlation: inputs differ in length");
  if (a.size() < 2) throw InvalidArgument("correlation: needs at least two samples");
  const double n = double(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw InvalidArgument("correlation: constant input");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double srcc(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InvalidArgument("correlation: inputs differ in length");
  const auto ra = fractional_ranks(a), rb = fractional_ranks(b);
  return plcc(ra, rb);
}

std::vector<std::size_t> split_by_source(const std::vector<std::string>& source_ids, std::size_t k,
                                         std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("split_by_source: need at least 2 folds");
  const std::set<std::string> distinct(source_ids.begin(), source_ids.end());
  std::vector<std::string> sources(distinct.begin(), distinct.end());
  if (sources.size() < k) {
    throw InvalidArgument("split_by_source: " + std::to_string(sources.size()) + " sources cannot fill " +
                          std::to_string(k) + " folds");
  }
  Rng rng(seed);
  shuffle_in_place(sources, rng);
  std::map<std::string, std::size_t> fold_of;
  for (std::size_t i = 0; i < sources.size(); ++i) fold_of[sources[i]] = i % k;
  std::vector<std::size_t> out;
  out.reserve(source_ids.size());
  for (const auto& s : source_ids) out.push_back(fold_of.at(s));
  return out;
}

void CvConfig::validate() const {
  if (folds < 2) throw InvalidArgument("folds must be >= 2");
  if (repeats == 0) throw InvalidArgument("repeats must be >= 1");
  if (inner_folds < 2) throw InvalidArgument("inner_folds must be >= 2");
  if (alpha_grid.empty()) throw InvalidArgument("alpha grid is empty");
  for (double a : alpha_grid) {
    if (!(a >= 0.0) || !std::isfinite(a)) throw InvalidArgument("alpha grid values must be finite and >= 0");
  }
}

namespace {

template <class T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

std::optional<double> safe_corr(double (*f)(std::span<const double>, std::span<const double>),
                                const std::vector<double>& a, const std::vector<double>& b) {
  try {
    return f(a, b);
  } catch (const InvalidArgument&) {
    return std::nullopt;
  }
}

}  // namespace

double select_alpha(const Rows& X, std::span<const double> y, const std::vector<std::string>& sources,
                    const CvConfig& cfg, std::uint64_t seed) {
  const std::size_t distinct = std::set<std::string>(sources.begin(), sources.end()).size();
  std::vector<double> grid = cfg.alpha_grid;
  std::sort(grid.begin(), grid.end());
  if (grid.size() == 1) return grid[0];
  if (distinct < 2) return grid[grid.size() / 2];
  const std::size_t k = std::min(cfg.inner_folds, distinct);
  const auto fold = split_by_source(sources, k, seed);
  double best_alpha = grid.back(), best_mse = std::numeric_limits<double>::infinity();
  for (auto it = grid.rbegin(); it != grid.rend(); ++it) {
    double se = 0.0;
    bool ok = true;
    for (std::size_t f = 0; f < k && ok; ++f) {
      std::vector<std::size_t> tr, te;
      for (std::size_t i = 0; i < fold.size(); ++i) (fold[i] == f ? te : tr).push_back(i);
      try {
        const auto m = ridge_fit(pick(X, tr), pick(std::vector<double>(y.begin(), y.end()), tr), *it,
                                 cfg.fit_intercept);
        for (auto i : te) {
          const double r = m.predict(X[i]) - y[i];
          se += r * r;
        }
      } catch (const InvalidArgument&) {
        ok = false;
      }
    }
    if (ok && se < best_mse) {
      best_mse = se;
      best_alpha = *it;
    }
  }
  return best_alpha;
}

namespace {

// One k-fold pass over `idx`; returns out-of-fold predictions keyed like idx.
struct FoldRun {
  std::size_t fold;
  double alpha;
  std::vector<std::size_t> test;
  std::vector<double> pred;
};

std::vector<FoldRun> run_folds(const std::vector<LabeledVideo>& videos, const std::vector<std::size_t>& idx,
                               const CvConfig& cfg, std::uint64_t split_seed) {
  std::vector<std::string> src;
  for (auto i : idx) src.push_back(videos[i].source_id);
  const auto fold = split_by_source(src, cfg.folds, split_seed);
  std::vector<FoldRun> runs;
  for (std::size_t f = 0; f < cfg.folds; ++f) {
    Rows Xtr;
    std::vector<double> ytr;
    std::vector<std::string> str;
    FoldRun run{f, 0.0, {}, {}};
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& v = videos[idx[k]];
      if (fold[k] == f) {
        run.test.push_back(idx[k]);
      } else {
        Xtr.push_back(v.h_v);
        ytr.push_back(v.mos);
        str.push_back(v.source_id);
      }
    }
    run.alpha = select_alpha(Xtr, ytr, str, cfg, derive_seed(split_seed, "inner:" + std::to_string(f)));
    const auto model = ridge_fit(Xtr, ytr, run.alpha, cfg.fit_intercept);
    for (auto i : run.test) run.pred.push_back(model.predict(videos[i].h_v));
    runs.push_back(std::move(run));
  }
  return runs;
}

FoldScore score(std::size_t repeat, std::uint64_t seed, const FoldRun& run, const std::string& scope,
                const std::string& subset, const std::vector<LabeledVideo>& videos) {
  std::vector<double> p, y;
  for (std::size_t k = 0; k < run.test.size(); ++k) {
    const auto& v = videos[run.test[k]];
    if (subset != "all" && v.subset_tag != subset) continue;
    p.push_back(run.pred[k]);
    y.push_back(v.mos);
  }
  return {repeat, run.fold, seed, scope, subset, p.size(), run.alpha, safe_corr(&srcc, p, y), safe_corr(&plcc, p, y)};
}

}  // namespace

CrossValReport cross_validate(const std::vector<LabeledVideo>& videos, const CvConfig& cfg) {
  cfg.validate();
  if (videos.empty()) throw InvalidArgument("cross_validate: no videos");
  const std::size_t D = videos[0].h_v.size();
  for (const auto& v : videos) {
    if (v.h_v.size() != D) throw ShapeError("cross_validate: embedding of " + v.video_id + " has the wrong size");
    if (!std::isfinite(v.mos)) throw InvalidArgument("cross_validate: non-finite MOS for " + v.video_id);
  }
  std::vector<std::string> subsets;
  for (const auto& v : videos) {
    if (std::find(subsets.begin(), subsets.end(), v.subset_tag) == subsets.end()) subsets.push_back(v.subset_tag);
  }
  std::sort(subsets.begin(), subsets.end());

  CrossValReport report;
  std::vector<std::size_t> all(videos.size());
  std::iota(all.begin(), all.end(), 0);
  std::vector<FoldScore> overall, filtered, local;
  std::set<std::string> skipped_local;
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    const std::uint64_t seed = derive_seed(cfg.seed, "split:" + std::to_string(r));
    report.split_seeds.push_back(seed);
    const auto runs = run_folds(videos, all, cfg, seed);
    for (const auto& run : runs) {
      overall.push_back(score(r, seed, run, "overall", "all", videos));
      if (subsets.size() > 1) {
        for (const auto& s : subsets) filtered.push_back(score(r, seed, run, "filtered", s, videos));
      }
    }
    if (subsets.size() > 1) {
      for (const auto& s : subsets) {
        std::vector<std::size_t> idx;
        std::set<std::string> srcs;
        for (auto i : all) {
          if (videos[i].subset_tag == s) {
            idx.push_back(i);
            srcs.insert(videos[i].source_id);
          }
        }
        if (srcs.size() < cfg.folds) {
          skipped_local.insert(s);
          continue;
        }
        for (const auto& run : run_folds(videos, idx, cfg, seed)) local.push_back(score(r, seed, run, "local", s, videos));
      }
    }
  }
  for (const auto& s : skipped_local) {
    report.notes.push_back("local cross-validation skipped for subset " + s + ": fewer sources than folds");
  }
  auto by_subset = [](std::vector<FoldScore>& v) {
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.subset < b.subset; });
  };
  by_subset(filtered);
  by_subset(local);
  report.entries = overall;
  report.entries.insert(report.entries.end(), filtered.begin(), filtered.end());
  report.entries.insert(report.entries.end(), local.begin(), local.end());
  return report;
}

std::vector<SummaryRow> CrossValReport::summary() const {
  std::vector<SummaryRow> rows;
  for (const auto& e : entries) {
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const auto& r) { return r.scope == e.scope && r.subset == e.subset; });
    if (it == rows.end()) {
      rows.push_back({e.scope, e.subset});
      it = rows.end() - 1;
    }
    (e.srcc && e.plcc ? it->folds_scored : it->folds_undefined) += 1;
  }
  for (auto& row : rows) {
    std::vector<double> s, p;
    for (const auto& e : entries) {
      if (e.scope == row.scope && e.subset == row.subset && e.srcc && e.plcc) {
        s.push_back(*e.srcc);
        p.push_back(*e.plcc);
      }
    }
    auto mean_sd = [](const std::vector<double>& v, double& mean, double& sd) {
      if (v.empty()) return;
      mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      sd = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0;
    };
    mean_sd(s, row.srcc_mean, row.srcc_sd);
    mean_sd(p, row.plcc_mean, row.plcc_sd);
  }
  return rows;
}

double CrossValReport::overall_srcc() const {
  for (const auto& r : summary()) {
    if (r.scope == "overall") {
      if (r.folds_scored == 0) throw InvalidArgument("no overall fold has a defined SRCC");
      return r.srcc_mean;
    }
  }
  throw InvalidArgument("report has no overall entries");
}

namespace {

const std::vector<std::string> kReportHeader{"repeat", "fold", "split_seed", "scope", "subset",
                                             "n",      "alpha", "srcc",      "plcc"};

std::string opt_str(const std::optional<double>& v) { return v ? csv::format_real(*v) : ""; }

}  // namespace

void write_report(const std::filesystem::path& csv_path, const CrossValReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : report.entries) {
    rows.push_back({std::to_string(e.repeat), std::to_string(e.fold), std::to_string(e.split_seed), e.scope, e.subset,
                    std::to_string(e.n), csv::format_real(e.alpha), opt_str(e.srcc), opt_str(e.plcc)});
  }
  csv::write(csv_path, kReportHeader, rows, report.notes);
}

CrossValReport read_report(const std::filesystem::path& csv_path) {
  const auto t = csv::read(csv_path, kReportHeader);
  CrossValReport r;
  r.notes = t.comments;
  for (const auto& row : t.rows) {
    auto col = [&](const char* name) -> const std::string& { return row[t.column(name)]; };
    FoldScore e;
    e.repeat = std::stoull(col("repeat"));
    e.fold = std::stoull(col("fold"));
    e.split_seed = std::stoull(col("split_seed"));
    e.scope = col("scope");
    e.subset = col("subset");
    e.n = std::stoull(col("n"));
    e.alpha = csv::parse_real(col("alpha"), "alpha");
    e.srcc = csv::parse_optional_real(col("srcc"), "srcc");
    e.plcc = csv::parse_optional_real(col("plcc"), "plcc");
    if (std::find(r.split_seeds.begin(), r.split_seeds.end(), e.split_seed) == r.split_seeds.end()) {
      r.split_seeds.push_back(e.split_seed);
    }
    r.entries.push_back(std::move(e));
  }
  return r;
}

std::string format_summary(const CrossValReport& report) {
  std::ostringstream out;
  out << std::left << std::setw(10) << "scope" << std::setw(12) << "subset" << std::right << std::setw(8) << "folds"
      << std::setw(10) << "undef" << std::setw(18) << "SRCC mean+-sd" << std::setw(18) << "PLCC mean+-sd" << "\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& r : report.summary()) {
    std::ostringstream s, p;
    s << std::fixed << std::setprecision(4) << r.srcc_mean << "+-" << r.srcc_sd;
    p << std::fixed << std::setprecision(4) << r.plcc_mean << "+-" << r.plcc_sd;
    out << std::left << std::setw(10) << r.scope << std::setw(12) << r.subset << std::right << std::setw(8)
        << r.folds_scored << std::setw(10) << r.folds_undefined << std::setw(18) << s.str() << std::setw(18) << p.str()
        << "\n";
  }
  for (const auto& n : report.notes) out << "note: " << n << "\n";
  return out.str();
}

}  // namespace rmtbvqa
