#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "shakediff/constraints.hpp"
#include "shakediff/shake.hpp"

namespace shakediff {

/**
 * Variance-preserving coefficients over steps 0..T.
 *
 * The polynomial family uses alpha_t^2 = s + (1 - s) (1 - (t/T)^p)^2 with a
 * small floor s so that alpha_T stays positive; sigma_t = sqrt(1 - alpha_t^2).
 * Step 0 is the data end (alpha = 1, sigma = 0), step T the noise end.
 */
struct NoiseSchedule {
  std::vector<double> alphas;
  std::vector<double> sigmas;
  int steps = 0;

  static NoiseSchedule polynomial(int steps, double precision = 1e-5, double power = 2.0);

  double alpha(int t) const { return alphas.at(static_cast<std::size_t>(t)); }
  double sigma(int t) const { return sigmas.at(static_cast<std::size_t>(t)); }

  void validate() const;
};

/// Predicted noise for (z, t): 3N coordinate entries followed by N*F feature entries.
using Denoiser = std::function<Eigen::VectorXd(const Conformation& z, int step)>;

/// Standard normal data (on the zero center-of-gravity subspace for coordinates).
struct IsotropicGaussian {};

/// Mixture of isotropic Gaussians over coordinates; features stay standard normal.
struct GaussianMixture {
  struct Component {
    double weight = 1.0;
    Eigen::VectorXd mean;  ///< 3N, centered on construction of the denoiser
    double scale = 1.0;    ///< per-coordinate standard deviation
  };
  std::vector<Component> components;
};

using AnalyticTarget = std::variant<IsotropicGaussian, GaussianMixture>;

/// Exact E[eps | z_t] for the given target under `schedule`.
Denoiser analytic_denoiser(const AnalyticTarget& target, const NoiseSchedule& schedule);

struct SamplerConfig {
  NoiseSchedule schedule = NoiseSchedule::polynomial(1000);
  ShakeConfig shake;
  /// total_steps is overridden with the noise schedule's T while sampling.
  ConstraintSchedule constraint_schedule;
  double diffusion_constant = 1.0;
  std::uint64_t seed = 0;
  /// A sample is flagged when more than this fraction of per-step projections fail.
  double max_failed_step_fraction = 0.25;
  std::size_t feature_dim = 0;

  void validate() const;
};

/// Removes the mean of every coordinate triple of a flattened 3N vector.
Eigen::VectorXd subtract_center_of_gravity(const Eigen::VectorXd& flat);
Conformation subtract_center_of_gravity(const Conformation& x);

struct NoisedSample {
  Conformation z;
  Eigen::VectorXd noise;  ///< centered coordinate noise (3N) followed by feature noise (N*F)
};

NoisedSample forward_noise(const Conformation& x, int step, const NoiseSchedule& schedule, std::mt19937_64& rng);

/// z_t = alpha_t [x, h] + sigma_t noise for a given (already centered) noise vector.
Conformation noised(const Conformation& x, int step, const NoiseSchedule& schedule, const Eigen::VectorXd& noise);

struct TrainingLoss {
  double value = 0.0;
  int step = 0;
  bool flagged = false;  ///< a projection failed to converge or hit degenerate geometry
  std::string diagnostics;
  ShakeReport target_report;
  ShakeReport prediction_report;
};

/**
 * Constraint-aware denoising loss for one (t, noise) draw:
 *   eps_s  = Shake(z_t) - alpha_t x
 *   eps_s' = Shake(phi(z_t) + z_t) - z_t
 *   loss   = |eps_s - eps_s'|^2 over coordinates.
 */
TrainingLoss training_loss_at(const Conformation& x, const std::vector<ConstraintExpr>& exprs, const Denoiser& denoiser,
                              const NoiseSchedule& schedule, const ShakeConfig& shake, int step,
                              const Eigen::VectorXd& noise);

/// Draws t uniformly from 0..T and the noise, then evaluates training_loss_at.
TrainingLoss training_loss(const Conformation& x, const std::vector<ConstraintExpr>& exprs, const Denoiser& denoiser,
                           const NoiseSchedule& schedule, const ShakeConfig& shake, std::mt19937_64& rng);

/// As above with 5-15 exact constraints drawn from x itself.
TrainingLoss training_loss(const Conformation& x, const Denoiser& denoiser, const NoiseSchedule& schedule,
                           const ShakeConfig& shake, std::mt19937_64& rng);

struct SampleResult {
  Conformation conformation;
  std::vector<ShakeReport> reports;  ///< one per reverse step, then the final projection
  bool valid = false;
  int failed_steps = 0;
  std::string failure;
};

/**
 * Ancestral reverse diffusion with a projection after every step.
 *
 * Bounds at reverse step s come from the constraint schedule at generation
 * progress T - s, so they start relaxed and reach the user bounds at s = 0,
 * where a final projection onto the exact bounds is applied. Coordinates are
 * re-centered after every step.
 */
SampleResult reverse_sample(std::size_t n_particles, const std::vector<ConstraintExpr>& exprs, const Denoiser& denoiser,
                            const SamplerConfig& config, std::mt19937_64& rng);
SampleResult reverse_sample(std::size_t n_particles, const std::vector<ConstraintExpr>& exprs, const Denoiser& denoiser,
                            const SamplerConfig& config);

struct LangevinResult {
  Conformation conformation;
  ShakeReport report;
};

/**
 * Euler-Maruyama step of the constrained overdamped Langevin SDE:
 * x + D h score + sqrt(2 D h) P xi, then a projection to remove
 * second-order drift off the constraint set.
 */
LangevinResult langevin_step(const Conformation& x, const Eigen::VectorXd& score, const std::vector<ConstraintExpr>& exprs,
                             double diffusion_constant, double step_size, std::mt19937_64& rng,
                             const ShakeConfig& shake = {});

/// Same step with a caller-supplied standard normal vector `xi` (3N).
LangevinResult langevin_step_with_noise(const Conformation& x, const Eigen::VectorXd& score,
                                        const std::vector<ConstraintExpr>& exprs, double diffusion_constant,
                                        double step_size, const Eigen::VectorXd& xi, const ShakeConfig& shake = {});

/// Independent per-trajectory seed (SplitMix64 of the run seed and the sample index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace shakediff
