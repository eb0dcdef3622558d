#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "shakediff/diffusion.hpp"
#include "shakediff/harness/config.hpp"
#include "shakediff/harness/metrics.hpp"

namespace shakediff::harness {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 2;
inline constexpr int usage = 64;
inline constexpr int data = 65;
inline constexpr int io = 74;
}  // namespace exit_code

using GradientFunction = std::function<Eigen::VectorXd(const Primitive&, const Conformation&)>;

struct GradcheckResult {
  std::array<double, 3> max_error{};  ///< indexed by ConstraintKind
  int trials = 0;
  bool passed = false;
};

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-6;

/// Analytic vs central-difference gradients on `trials` random non-degenerate configurations per kind.
GradcheckResult gradcheck(int trials, std::uint64_t seed, const GradientFunction& gradient);
int gradcheck_command(int trials, std::uint64_t seed, bool quiet, std::ostream& out, std::ostream& err,
                      const GradientFunction& gradient);

struct BatchResult {
  std::vector<SampleResult> samples;
  std::vector<MetricsRow> rows;
  std::size_t valid = 0;
};

/// Sample i uses derive_seed(config.seed, i); results do not depend on `threads`.
BatchResult run_batch(const ExperimentConfig& config, unsigned threads);

/// XYZ files for valid samples plus the metrics CSV. Returns the XYZ paths written.
std::vector<std::filesystem::path> write_batch(const ExperimentConfig& config, const BatchResult& batch,
                                               const std::filesystem::path& dir);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<unsigned> threads;
  std::optional<std::filesystem::path> timings;
  bool quiet = false;
};

int sample_command(const std::filesystem::path& config_path, const RunOptions& options, std::ostream& out,
                   std::ostream& err);

int validate_command(const std::vector<std::filesystem::path>& xyz_paths, const std::filesystem::path& config_path,
                     bool quiet, std::ostream& out, std::ostream& err);

struct RingDemoOptions {
  std::size_t n = 6;
  std::size_t batch = 100;
  int steps = 250;
  bool infeasible = false;
};

/// Consecutive pairs i, i+1 (mod n) bounded to [1.3, 1.5] widened by 0.1 on each side.
ExperimentConfig ring_demo_config(const RingDemoOptions& demo, std::uint64_t seed);

int ring_demo_command(const RingDemoOptions& demo, const RunOptions& options, std::ostream& out, std::ostream& err);

/// Full command line: sample | validate | gradcheck | ring-demo, with --seed, --out-dir, --threads, --quiet.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace shakediff::harness
