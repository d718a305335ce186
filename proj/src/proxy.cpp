#include "rmtbvqa/proxy.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <mutex>
#include <regex>
#include <thread>

#include "rmtbvqa/csv.hpp"
#include "rmtbvqa/errors.hpp"

namespace rmtbvqa {

void PairingConfig::validate() const {
  if (!(TH > 0.0) || !std::isfinite(TH)) throw InvalidArgument("pairing threshold TH must be > 0");
}

double psnr(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
  if (a.size() != b.size() || a.empty()) throw ShapeError("psnr: inputs differ in size");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    se += d * d;
  }
  if (se == 0.0) return kPsnrCap;
  const double mse = se / double(a.size());
  return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

ProxyScore psnr(const Patch& enh, const Patch& ref) {
  if (enh.size != ref.size || enh.frames != ref.frames) {
    throw ShapeError("psnr: patch dimensions differ (" + enh.patch_id + " vs " + ref.patch_id + ")");
  }
  return {psnr(enh.pixels, ref.pixels), "psnr"};
}

bool is_positive_pair(const ProxyScore& a, const ProxyScore& b, const PairingConfig& cfg) {
  if (a.metric != b.metric) {
    throw InvalidArgument("cannot pair scores of metrics '" + a.metric + "' and '" + b.metric + "'");
  }
  return std::abs(a.value - b.value) <= cfg.TH;
}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

std::string substitute(std::string tmpl, const std::string& key, const std::string& value) {
  for (std::size_t pos = 0; (pos = tmpl.find(key, pos)) != std::string::npos; pos += value.size()) {
    tmpl.replace(pos, key.size(), value);
  }
  return tmpl;
}

}  // namespace

ToolRun run_tool(const std::string& command, std::chrono::milliseconds timeout) {
  int fds[2];
  if (pipe(fds) != 0) throw ToolError("pipe failed: " + std::string(std::strerror(errno)), "");
  const pid_t pid = fork();
  if (pid < 0) {
    close(fds[0]);
    close(fds[1]);
    throw ToolError("fork failed: " + std::string(std::strerror(errno)), "");
  }
  if (pid == 0) {
    setpgid(0, 0);
    dup2(fds[1], STDOUT_FILENO);
    dup2(fds[1], STDERR_FILENO);
    close(fds[0]);
    close(fds[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(fds[1]);
  ToolRun run;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  char buf[4096];
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      run.timed_out = true;
      kill(-pid, SIGKILL);
      break;
    }
    pollfd p{fds[0], POLLIN, 0};
    const int r = poll(&p, 1, static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (r < 0 && errno != EINTR) break;
    if (r <= 0) continue;
    const ssize_t n = read(fds[0], buf, sizeof buf);
    if (n <= 0) break;
    run.output.append(buf, static_cast<std::size_t>(n));
  }
  close(fds[0]);
  int status = 0;
  while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (!run.timed_out) {
    run.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  } else {
    run.exit_code = -1;
  }
  return run;
}

double parse_score(const std::string& output, const std::string& pattern) {
  static const std::regex number(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)");
  const std::regex re = pattern.empty() ? number : std::regex(pattern, std::regex::multiline);
  std::string last;
  for (auto it = std::sregex_iterator(output.begin(), output.end(), re); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    last = (m.size() > 1 && m[1].matched) ? m[1].str() : m[0].str();
  }
  if (last.empty()) throw ToolError("no score found in tool output", output);
  try {
    return csv::parse_real(last, "tool score");
  } catch (const FormatError& e) {
    throw ToolError(e.what(), output);
  }
}

ProxyScore external_score(const std::filesystem::path& enh, const std::filesystem::path& ref,
                          const ExternalMetric& cfg, std::vector<std::string>* warnings) {
  if (cfg.command_template.empty()) throw InvalidArgument("external metric: empty command template");
  const std::string cmd = substitute(substitute(cfg.command_template, "{enh}", shell_quote(enh.string())),
                                     "{ref}", shell_quote(ref.string()));
  auto once = [&] {
    ToolRun run = run_tool(cmd, cfg.timeout);
    if (run.timed_out) {
      throw ToolError("metric command timed out after " + std::to_string(cfg.timeout.count()) + " ms: " + cmd,
                      run.output);
    }
    if (run.exit_code != 0) {
      throw ToolError("metric command exited with " + std::to_string(run.exit_code) + ": " + cmd, run.output);
    }
    return parse_score(run.output, cfg.pattern);
  };
  const double v = once();
  if (cfg.repeat_check) {
    const double again = once();
    if (again != v && warnings != nullptr) {
      warnings->push_back("nondeterministic metric on " + enh.string() + ": " + csv::format_real(v) + " then " +
                          csv::format_real(again));
    }
  }
  return {v, cfg.metric};
}

Manifest label_manifest(const Manifest& m, const std::filesystem::path& base_dir, const LabelConfig& cfg,
                        LabelReport* report) {
  Manifest out = m;
  const auto idx = m.index();
  LabelReport local;
  LabelReport& rep = report ? *report : local;

  // Rows scored directly: full enhanced rows whose link names a reference row.
  std::vector<std::size_t> direct;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& r = m.rows[i];
    if (r.is_reference() || r.resolution != Resolution::full) continue;
    auto it = idx.find(r.reference_link);
    if (r.reference_link.empty() || it == idx.end()) {
      throw InvalidArgument("enhanced patch " + r.patch_id + " has no resolvable reference");
    }
    if (m.rows[it->second].is_reference()) direct.push_back(i);
  }

  std::vector<std::optional<double>> scores(direct.size());
  std::vector<std::string> errors(direct.size());
  std::mutex warn_mu;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next++) < direct.size();) {
      const auto& r = m.rows[direct[k]];
      const auto& ref = m.rows[idx.at(r.reference_link)];
      try {
        if (cfg.external) {
          std::vector<std::string> w;
          scores[k] = external_score(base_dir / r.path, base_dir / ref.path, *cfg.external, &w).value;
          std::lock_guard lock(warn_mu);
          rep.warnings.insert(rep.warnings.end(), w.begin(), w.end());
        } else {
          std::size_t s1, f1, s2, f2;
          auto a = load_patch_pixels(base_dir / r.path, s1, f1);
          auto b = load_patch_pixels(base_dir / ref.path, s2, f2);
          if (s1 != s2 || f1 != f2) throw ShapeError("psnr: " + r.patch_id + " and its reference differ in size");
          scores[k] = psnr(a, b);
        }
      } catch (const ToolError& e) {
        errors[k] = std::string(e.what()) + "\n" + e.output();
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(cfg.workers, direct.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (std::size_t k = 0; k < direct.size(); ++k) {
    if (!scores[k]) throw ToolError("labeling " + m.rows[direct[k]].patch_id + " failed", errors[k]);
    out.rows[direct[k]].proxy_score = scores[k];
    out.rows[direct[k]].metric = cfg.metric;
    ++rep.scored;
  }

  // Inherit along links until every non-reference row has a score.
  for (bool changed = true; changed;) {
    changed = false;
    for (auto& r : out.rows) {
      if (r.is_reference() || r.proxy_score) continue;
      const auto& src = out.rows[idx.at(r.reference_link)];
      if (src.proxy_score && !src.is_reference()) {
        r.proxy_score = src.proxy_score;
        r.metric = src.metric;
        ++rep.inherited;
        changed = true;
      }
    }
  }
  for (const auto& r : out.rows) {
    if (!r.is_reference() && !r.proxy_score) {
      throw InvalidArgument("patch " + r.patch_id + " could not inherit a score");
    }
  }
  return out;
}

}  // namespace rmtbvqa
