#pragma once

#include "betrans/common.hpp"

#include <string>
#include <vector>

namespace betrans::harness {

struct MetricRow {
  std::string method;
  int seed = 0;
  std::int64_t env_step = 0;
  Real eval_return_mean = 0.0;
  Real eval_return_stderr = 0.0;
  Real loss_sr = 0.0;
  Real loss_kl = 0.0;
  Real loss_q = 0.0;
  Real loss_pi = 0.0;
  Real wall_clock_s = 0.0;
};

// Exact column order required by the metrics schema.
extern const char* const kMetricsHeader;

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricRow>& rows);
std::vector<MetricRow> read_metrics_csv(const std::string& path);

// Mean and standard error (0 for a single sample).
std::pair<Real, Real> mean_stderr(const std::vector<Real>& xs);

// Trailing moving average with the given window.
std::vector<Real> smooth_trailing(const std::vector<Real>& xs, int window = 3);

// First env_step at which the smoothed eval return reaches the threshold.
// Returns `sentinel` when the curve never crosses it.
std::int64_t convergence_step(const std::vector<MetricRow>& rows,
                              Real threshold, std::int64_t sentinel,
                              int smooth_window = 3);

// Smoothed value of the final evaluation point.
Real final_smoothed_return(const std::vector<MetricRow>& rows,
                           int smooth_window = 3);

}  // namespace betrans::harness
