#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "shakediff/constraints.hpp"
#include "shakediff/diffusion.hpp"

namespace shakediff::harness {

inline constexpr int kMetricsVersion = 1;

struct MetricsRow {
  std::size_t sample_id = 0;
  bool valid = false;
  bool converged = false;  ///< final projection
  double max_residual = 0.0;
  long shake_iterations_total = 0;
  int failed_steps = 0;
  std::vector<bool> satisfied;  ///< one flag per top-level constraint expression
  double wall_time_ms = 0.0;
};

MetricsRow summarize(std::size_t sample_id, const SampleResult& result, const std::vector<ConstraintExpr>& exprs,
                     double tolerance, double wall_time_ms = 0.0);

/// Versioned comment line, header, one row per sample. Wall time is left out so reruns compare byte-for-byte.
void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows, std::size_t n_constraints);
void write_metrics_file(const std::filesystem::path& path, const std::vector<MetricsRow>& rows,
                        std::size_t n_constraints);

void write_timings_file(const std::filesystem::path& path, const std::vector<MetricsRow>& rows);

}  // namespace shakediff::harness
