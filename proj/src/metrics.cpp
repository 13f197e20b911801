#include "betrans/harness/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace betrans::harness {

const char* const kMetricsHeader =
    "method,seed,env_step,eval_return_mean,eval_return_stderr,loss_sr,"
    "loss_kl,loss_q,loss_pi,wall_clock_s";

void write_metrics_csv(const std::string& path,
                       const std::vector<MetricRow>& rows) {
  std::ofstream os(path);
  if (!os) throw UsageError("cannot open " + path + " for writing");
  os << kMetricsHeader << "\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf),
                  "%s,%d,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f",
                  r.method.c_str(), r.seed, static_cast<long long>(r.env_step),
                  r.eval_return_mean, r.eval_return_stderr, r.loss_sr,
                  r.loss_kl, r.loss_q, r.loss_pi, r.wall_clock_s);
    os << buf << "\n";
  }
}

std::vector<MetricRow> read_metrics_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open metrics file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw UsageError("empty metrics file: " + path);
  if (line != kMetricsHeader)
    throw UsageError("unexpected metrics header in " + path);
  std::vector<MetricRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string f;
    MetricRow r;
    std::getline(ss, r.method, ',');
    std::getline(ss, f, ','); r.seed = std::stoi(f);
    std::getline(ss, f, ','); r.env_step = std::stoll(f);
    std::getline(ss, f, ','); r.eval_return_mean = std::stod(f);
    std::getline(ss, f, ','); r.eval_return_stderr = std::stod(f);
    std::getline(ss, f, ','); r.loss_sr = std::stod(f);
    std::getline(ss, f, ','); r.loss_kl = std::stod(f);
    std::getline(ss, f, ','); r.loss_q = std::stod(f);
    std::getline(ss, f, ','); r.loss_pi = std::stod(f);
    std::getline(ss, f, ','); r.wall_clock_s = std::stod(f);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::pair<Real, Real> mean_stderr(const std::vector<Real>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  Real mean = 0.0;
  for (Real x : xs) mean += x;
  mean /= xs.size();
  if (xs.size() == 1) return {mean, 0.0};
  Real ss = 0.0;
  for (Real x : xs) ss += (x - mean) * (x - mean);
  Real sd = std::sqrt(ss / (xs.size() - 1));
  return {mean, sd / std::sqrt(static_cast<Real>(xs.size()))};
}

std::vector<Real> smooth_trailing(const std::vector<Real>& xs, int window) {
  std::vector<Real> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::size_t b = i + 1 >= static_cast<std::size_t>(window)
                        ? i + 1 - window
                        : 0;
    Real acc = 0.0;
    for (std::size_t j = b; j <= i; ++j) acc += xs[j];
    out[i] = acc / (i - b + 1);
  }
  return out;
}

std::int64_t convergence_step(const std::vector<MetricRow>& rows,
                              Real threshold, std::int64_t sentinel,
                              int smooth_window) {
  std::vector<Real> ys;
  ys.reserve(rows.size());
  for (const auto& r : rows) ys.push_back(r.eval_return_mean);
  auto sm = smooth_trailing(ys, smooth_window);
  for (std::size_t i = 0; i < sm.size(); ++i)
    if (sm[i] >= threshold) return rows[i].env_step;
  return sentinel;
}

Real final_smoothed_return(const std::vector<MetricRow>& rows,
                           int smooth_window) {
  if (rows.empty()) return 0.0;
  std::vector<Real> ys;
  ys.reserve(rows.size());
  for (const auto& r : rows) ys.push_back(r.eval_return_mean);
  return smooth_trailing(ys, smooth_window).back();
}

}  // namespace betrans::harness
