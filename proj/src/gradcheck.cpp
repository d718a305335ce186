#include "rmtbvqa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rmtbvqa {

GradCheckReport gradcheck(const std::function<Tensor()>& loss_fn, const NamedTensors& params,
                          const GradCheckOptions& options) {
  for (auto [name, t] : params) t.zero_grad();
  loss_fn().backward();
  std::vector<std::vector<Real>> analytic;
  analytic.reserve(params.size());
  for (const auto& [name, t] : params) {
    auto g = t.grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor t = params[p].second;
    auto data = t.mutable_data();
    bool all_zero = true;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Real original = data[i];
      const Real up = static_cast<Real>(original + options.step);
      const Real down = static_cast<Real>(original - options.step);
      data[i] = up;
      const double loss_up = loss_fn().item();
      data[i] = down;
      const double loss_down = loss_fn().item();
      data[i] = original;
      const double numeric = (loss_up - loss_down) / (double(up) - double(down));
      const double a = analytic[p][i];
      all_zero = all_zero && a == 0.0;
      const double err = std::abs(a - numeric);
      const double rel = err / std::max({std::abs(a), std::abs(numeric), 1e-30});
      report.max_abs_error = std::max(report.max_abs_error, err);
      ++report.checked;
      if (err > options.abs_tol && rel > options.rel_tol) {
        ++report.failed;
        if (report.failures.size() < options.max_reported) {
          std::ostringstream os;
          os << params[p].first << "[" << i << "]: analytic " << a << " numeric " << numeric;
          report.failures.push_back(os.str());
        }
      }
    }
    if (all_zero) ++report.zero_grad_tensors;
  }
  return report;
}

}  // namespace rmtbvqa
