#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rmtbvqa {

using Rows = std::vector<std::vector<double>>;

struct RidgeModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double alpha = 0.0;

  double predict(std::span<const double> x) const;
  std::vector<double> predict(const Rows& X) const;
};

/// Minimizes |y - Xw - b|^2 + alpha |w|^2. With fit_intercept the columns
/// and y are centered and b = mean(y) - mean(X) w; otherwise b = 0. Throws
/// InvalidArgument when alpha = 0 and the normal matrix is singular.
RidgeModel ridge_fit(const Rows& X, std::span<const double> y, double alpha, bool fit_intercept = true);

/// Ranks starting at 1; ties get the mean of the positions they occupy.
std::vector<double> fractional_ranks(std::span<const double> v);
/// Pearson r. Throws InvalidArgument for n < 2, length mismatch or a
/// constant input.
double plcc(std::span<const double> a, std::span<const double> b);
/// Pearson r of fractional ranks.
double srcc(std::span<const double> a, std::span<const double> b);

/// Fold index per video: distinct source ids (sorted) are shuffled by `seed`
/// and dealt round-robin into k folds. Throws InvalidArgument when there are
/// fewer sources than folds.
std::vector<std::size_t> split_by_source(const std::vector<std::string>& source_ids, std::size_t k,
                                         std::uint64_t seed);

struct LabeledVideo {
  std::string video_id;
  std::string source_id;
  std::string subset_tag;
  std::vector<double> h_v;
  double mos = 0.0;
};

struct CvConfig {
  std::size_t folds = 5;
  std::size_t repeats = 100;
  std::size_t inner_folds = 4;
  std::vector<double> alpha_grid{1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2, 1e3};
  std::uint64_t seed = 0;
  bool fit_intercept = true;
  void validate() const;
};

/// Picks the grid value with the lowest by-source inner validation MSE; ties
/// go to the larger alpha.
double select_alpha(const Rows& X, std::span<const double> y, const std::vector<std::string>& sources,
                    const CvConfig& cfg, std::uint64_t seed);

// scope "overall":  all test videos, subset "all"
// scope "filtered": overall-split predictions restricted to one subset
// scope "local":    separate cross-validation inside one subset
struct FoldScore {
  std::size_t repeat = 0;
  std::size_t fold = 0;
  std::uint64_t split_seed = 0;
  std::string scope;
  std::string subset;
  std::size_t n = 0;
  double alpha = 0.0;
  std::optional<double> srcc;  // empty when undefined (n < 2 or constant)
  std::optional<double> plcc;
};

struct SummaryRow {
  std::string scope;
  std::string subset;
  std::size_t folds_scored = 0;
  std::size_t folds_undefined = 0;
  double srcc_mean = 0.0, srcc_sd = 0.0;
  double plcc_mean = 0.0, plcc_sd = 0.0;
};

struct CrossValReport {
  std::vector<FoldScore> entries;  // ordered by (scope, subset, repeat, fold)
  std::vector<std::uint64_t> split_seeds;
  std::vector<std::string> notes;
  std::vector<SummaryRow> summary() const;
  /// Mean SRCC over the scored overall folds.
  double overall_srcc() const;
};

/// Repeated k-fold cross-validation split by source. Only the ridge map is
/// fitted; embeddings are read-only.
CrossValReport cross_validate(const std::vector<LabeledVideo>& videos, const CvConfig& cfg);

void write_report(const std::filesystem::path& csv_path, const CrossValReport& report);
CrossValReport read_report(const std::filesystem::path& csv_path);
/// Human-readable table of SummaryRow values.
std::string format_summary(const CrossValReport& report);

}  // namespace rmtbvqa
