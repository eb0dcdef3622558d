#include "shakediff/harness/metrics.hpp"

#include <fstream>
#include <ostream>

#include <fmt/format.h>

#include "shakediff/harness/config.hpp"

namespace shakediff::harness {

MetricsRow summarize(std::size_t sample_id, const SampleResult& result, const std::vector<ConstraintExpr>& exprs,
                     double tolerance, double wall_time_ms) {
  MetricsRow row;
  row.sample_id = sample_id;
  row.valid = result.valid;
  row.failed_steps = result.failed_steps;
  row.wall_time_ms = wall_time_ms;
  for (const auto& r : result.reports) row.shake_iterations_total += r.iterations;
  if (!result.reports.empty()) {
    row.converged = result.reports.back().converged;
    row.max_residual = result.reports.back().max_residual;
  }
  for (const auto& e : exprs) {
    bool ok = false;
    try {
      ok = satisfied(e, result.conformation, tolerance);
    } catch (const GeometryError&) {
    }
    row.satisfied.push_back(ok);
  }
  return row;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows, std::size_t n_constraints) {
  std::string buf = fmt::format("# shakediff metrics v{}\n", kMetricsVersion);
  buf += "sample_id,valid,converged,max_residual,shake_iterations_total,failed_steps";
  for (std::size_t c = 0; c < n_constraints; ++c) buf += fmt::format(",c{}", c);
  buf += '\n';
  for (const auto& r : rows) {
    buf += fmt::format("{},{:d},{:d},{:.6e},{},{}", r.sample_id, r.valid, r.converged, r.max_residual,
                       r.shake_iterations_total, r.failed_steps);
    for (std::size_t c = 0; c < n_constraints; ++c) buf += c < r.satisfied.size() && r.satisfied[c] ? ",1" : ",0";
    buf += '\n';
  }
  out << buf;
}

void write_metrics_file(const std::filesystem::path& path, const std::vector<MetricsRow>& rows,
                        std::size_t n_constraints) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  write_metrics_csv(out, rows, n_constraints);
  out.flush();
  if (!out) throw IoError(fmt::format("error while writing '{}'", path.string()));
}

void write_timings_file(const std::filesystem::path& path, const std::vector<MetricsRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  std::string buf = "sample_id,wall_time_ms\n";
  for (const auto& r : rows) buf += fmt::format("{},{:.3f}\n", r.sample_id, r.wall_time_ms);
  out << buf;
  out.flush();
  if (!out) throw IoError(fmt::format("error while writing '{}'", path.string()));
}

}  // namespace shakediff::harness
