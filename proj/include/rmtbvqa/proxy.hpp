#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmtbvqa/manifest.hpp"
#include "rmtbvqa/patches.hpp"

namespace rmtbvqa {

inline constexpr double kPsnrCap = 100.0;

struct ProxyScore {
  double value = 0.0;
  std::string metric;
};

struct PairingConfig {
  double TH = 3.0;  // dB for PSNR; the VMAF-scale value is 6
  std::string metric = "psnr";
  void validate() const;
};

/// 10 log10(255^2 / MSE) over all samples, capped at 100 when MSE = 0.
double psnr(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b);
ProxyScore psnr(const Patch& enh, const Patch& ref);

/// |a - b| <= TH. Throws InvalidArgument when metric names differ.
bool is_positive_pair(const ProxyScore& a, const ProxyScore& b, const PairingConfig& cfg);

struct ExternalMetric {
  std::string command_template;  // "{enh}" and "{ref}" are replaced by quoted paths
  std::string metric = "external";
  std::string pattern;  // regex; first capture group of the last match. Empty: last number.
  std::chrono::milliseconds timeout{120000};
  bool repeat_check = false;  // run twice and warn when the scores differ
};

struct ToolRun {
  int exit_code = 0;
  bool timed_out = false;
  std::string output;  // stdout and stderr, interleaved
};

/// Runs `/bin/sh -c command`, capturing output, killing it after `timeout`.
ToolRun run_tool(const std::string& command, std::chrono::milliseconds timeout);

/// Extracts the score from tool output. Throws ToolError when nothing parses.
double parse_score(const std::string& output, const std::string& pattern);

/// Throws ToolError (carrying the captured output) on nonzero exit, timeout
/// or unparseable output. A repeat mismatch is appended to `warnings`.
ProxyScore external_score(const std::filesystem::path& enh, const std::filesystem::path& ref,
                          const ExternalMetric& cfg, std::vector<std::string>* warnings = nullptr);

struct LabelConfig {
  std::string metric = "psnr";             // "psnr" or the external metric's name
  std::optional<ExternalMetric> external;  // used when set
  std::size_t workers = 1;
};

struct LabelReport {
  std::size_t scored = 0;
  std::size_t inherited = 0;
  std::vector<std::string> warnings;
};

/// Scores every unrotated full enhanced row against its reference; rotated
/// and down rows inherit from the row they link to. Throws InvalidArgument
/// when an enhanced row has no resolvable reference.
Manifest label_manifest(const Manifest& m, const std::filesystem::path& base_dir,
                        const LabelConfig& cfg, LabelReport* report = nullptr);

}  // namespace rmtbvqa
