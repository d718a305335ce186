#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rmtbvqa/rmvit.hpp"

namespace rmtbvqa {

struct GradCheckOptions {
  double step = 1e-3;
  double rel_tol = 1e-2;
  double abs_tol = 1e-4;
  std::size_t max_reported = 8;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t failed = 0;
  std::size_t zero_grad_tensors = 0;  // parameter tensors whose grad is all zero
  double max_abs_error = 0.0;
  std::vector<std::string> failures;
  bool ok() const { return failed == 0; }
};

/// Compares backward() against central finite differences for every scalar
/// entry of every listed parameter. `loss_fn` must rebuild the graph on each
/// call. An entry passes when |analytic - numeric| <= abs_tol or the
/// relative error is <= rel_tol.
GradCheckReport gradcheck(const std::function<Tensor()>& loss_fn, const NamedTensors& params,
                          const GradCheckOptions& options = {});

}  // namespace rmtbvqa
