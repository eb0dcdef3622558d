#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "shakediff/constraints.hpp"
#include "shakediff/diffusion.hpp"
#include "shakediff/shake.hpp"

namespace shakediff::harness {

/// Malformed or schema-invalid configuration. The message carries a location.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

struct DenoiserSpec {
  enum class Kind { isotropic_gaussian, gaussian_mixture };
  Kind kind = Kind::isotropic_gaussian;
  GaussianMixture mixture;
};

struct ScheduleSpec {
  int steps = 1000;
  double precision = 1e-5;
  double power = 2.0;
};

struct OutputSpec {
  std::string dir = ".";
  std::string prefix = "sample";
  std::string metrics = "metrics.csv";
};

struct ExperimentConfig {
  std::size_t particles = 0;
  std::vector<ConstraintExpr> constraints;
  ScheduleSpec schedule;
  ConstraintSchedule constraint_schedule;
  ShakeConfig shake;
  DenoiserSpec denoiser;
  double diffusion_constant = 1.0;
  double max_failed_step_fraction = 0.25;
  std::size_t feature_dim = 0;
  std::size_t batch = 1;
  std::uint64_t seed = 0;
  double min_valid_fraction = 0.95;
  double validate_tolerance = 1e-6;
  unsigned threads = 0;  ///< 0: hardware concurrency
  OutputSpec output;

  SamplerConfig sampler() const;
  Denoiser make_denoiser() const;
};

/**
 * Strict JSON configuration.
 *
 *   {
 *     "particles": 6,
 *     "constraints": [
 *       {"type": "distance", "atoms": [0, 1], "interval": [1.2, 1.6]},
 *       {"type": "angle", "atoms": [0, 1, 2], "exact": 1.91},
 *       {"any_of": [ ... ]}, {"all_of": [ ... ]},
 *       {"not": {"type": "distance", "atoms": [0, 2], "exact": 1.5}, "epsilon": 0.1}
 *     ],
 *     "schedule": {"steps": 250, "precision": 1e-5, "power": 2},
 *     "constraint_schedule": {"initial_widen": 5, "exact_half_width": 0.5},
 *     "shake": {"tolerance": 1e-8, "max_iterations": 500, "solver": "full_linear", "regularization": 1e-10},
 *     "denoiser": {"kind": "isotropic_gaussian"},
 *     "sampler": {"diffusion_constant": 1, "max_failed_step_fraction": 0.25, "feature_dim": 0},
 *     "batch": 100, "seed": 7, "min_valid_fraction": 0.95, "validate_tolerance": 1e-6, "threads": 0,
 *     "output": {"dir": ".", "prefix": "sample", "metrics": "metrics.csv"}
 *   }
 *
 * Angles are in radians, distances in Angstrom; a null interval bound is infinite.
 * Only "particles" is required. Unknown keys are errors.
 */
ExperimentConfig parse_config(std::string_view text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

std::string config_to_json(const ExperimentConfig& config);

}  // namespace shakediff::harness
