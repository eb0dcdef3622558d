#include "shakediff/diffusion.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "shakediff/projection.hpp"

namespace shakediff {

NoiseSchedule NoiseSchedule::polynomial(int steps, double precision, double power) {
  if (steps < 1) throw std::invalid_argument("noise schedule needs at least one step");
  if (!(precision > 0 && precision < 1)) throw std::invalid_argument("schedule precision must lie in (0, 1)");
  if (!(power > 0)) throw std::invalid_argument("schedule power must be positive");
  NoiseSchedule s;
  s.steps = steps;
  s.alphas.resize(static_cast<std::size_t>(steps) + 1);
  s.sigmas.resize(s.alphas.size());
  for (int t = 0; t <= steps; ++t) {
    const double f = 1.0 - std::pow(static_cast<double>(t) / steps, power);
    const double alpha2 = t == 0 ? 1.0 : precision + (1.0 - precision) * f * f;
    s.alphas[static_cast<std::size_t>(t)] = std::sqrt(alpha2);
    s.sigmas[static_cast<std::size_t>(t)] = std::sqrt(std::max(0.0, 1.0 - alpha2));
  }
  return s;
}

void NoiseSchedule::validate() const {
  if (steps < 1 || alphas.size() != static_cast<std::size_t>(steps) + 1 || sigmas.size() != alphas.size())
    throw std::invalid_argument("noise schedule must hold T + 1 coefficients");
  if (alphas.front() != 1.0 || sigmas.front() != 0.0)
    throw std::invalid_argument("noise schedule must start at alpha = 1, sigma = 0");
  for (std::size_t t = 0; t < alphas.size(); ++t) {
    if (!(alphas[t] > 0 && alphas[t] <= 1) || !(sigmas[t] >= 0))
      throw std::invalid_argument("noise schedule coefficients out of range");
    if (std::abs(alphas[t] * alphas[t] + sigmas[t] * sigmas[t] - 1.0) > 1e-12)
      throw std::invalid_argument("noise schedule is not variance preserving");
  }
}

void SamplerConfig::validate() const {
  schedule.validate();
  shake.validate();
  constraint_schedule.validate();
  if (!(diffusion_constant > 0)) throw std::invalid_argument("diffusion constant must be positive");
  if (!(max_failed_step_fraction >= 0 && max_failed_step_fraction <= 1))
    throw std::invalid_argument("max_failed_step_fraction must lie in [0, 1]");
}

Eigen::VectorXd subtract_center_of_gravity(const Eigen::VectorXd& flat) {
  if (flat.size() == 0 || flat.size() % 3 != 0) throw std::invalid_argument("expected a 3N coordinate vector");
  Eigen::VectorXd out = flat;
  auto rows = Eigen::Map<Positions>(out.data(), out.size() / 3, 3);
  rows.rowwise() -= rows.colwise().mean().eval();
  return out;
}

Conformation subtract_center_of_gravity(const Conformation& x) {
  Conformation out = x;
  out.positions().rowwise() -= x.positions().colwise().mean();
  return out;
}

namespace {

Eigen::VectorXd standard_normal(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

// Coordinates centered, feature channels left alone.
Eigen::VectorXd centered_noise(std::size_t n, std::size_t f, std::mt19937_64& rng) {
  const auto coords = static_cast<Eigen::Index>(3 * n);
  Eigen::VectorXd v = standard_normal(coords + static_cast<Eigen::Index>(n * f), rng);
  v.head(coords) = subtract_center_of_gravity(Eigen::VectorXd(v.head(coords)));
  return v;
}

Eigen::VectorXd feature_flat(const Conformation& x) {
  return Eigen::Map<const Eigen::VectorXd>(x.features().data(), x.features().size());
}

void set_features(Conformation& x, const Eigen::VectorXd& flat) {
  Eigen::Map<Eigen::VectorXd>(x.features().data(), x.features().size()) = flat;
}

void check_step(int step, const NoiseSchedule& schedule) {
  if (step < 0 || step > schedule.steps) throw std::out_of_range("diffusion step out of range");
}

}  // namespace

Conformation noised(const Conformation& x, int step, const NoiseSchedule& schedule, const Eigen::VectorXd& noise) {
  check_step(step, schedule);
  const auto coords = static_cast<Eigen::Index>(3 * x.size());
  const auto feats = static_cast<Eigen::Index>(x.features().size());
  if (noise.size() != coords + feats) throw std::invalid_argument("noise vector has wrong length");
  const double a = schedule.alpha(step), s = schedule.sigma(step);
  Conformation z = x;
  z.set_flat(a * x.flat() + s * noise.head(coords));
  if (feats) set_features(z, a * feature_flat(x) + s * noise.tail(feats));
  return z;
}

NoisedSample forward_noise(const Conformation& x, int step, const NoiseSchedule& schedule, std::mt19937_64& rng) {
  check_step(step, schedule);
  Eigen::VectorXd noise = centered_noise(x.size(), x.feature_dim(), rng);
  Conformation z = noised(x, step, schedule, noise);
  return {std::move(z), std::move(noise)};
}

Denoiser analytic_denoiser(const AnalyticTarget& target, const NoiseSchedule& schedule) {
  schedule.validate();
  if (std::holds_alternative<IsotropicGaussian>(target)) {
    return [schedule](const Conformation& z, int t) -> Eigen::VectorXd {
      check_step(t, schedule);
      const auto coords = static_cast<Eigen::Index>(3 * z.size());
      Eigen::VectorXd out(coords + z.features().size());
      // z ~ N(0, I) on the subspace, cov(eps, z) = sigma I
      out.head(coords) = schedule.sigma(t) * z.flat();
      out.tail(z.features().size()) = schedule.sigma(t) * feature_flat(z);
      return out;
    };
  }

  GaussianMixture mix = std::get<GaussianMixture>(target);
  if (mix.components.empty()) throw std::invalid_argument("mixture needs at least one component");
  double total = 0;
  const Eigen::Index dim = mix.components.front().mean.size();
  for (auto& c : mix.components) {
    if (!(c.weight > 0) || !(c.scale > 0)) throw std::invalid_argument("mixture weights and scales must be positive");
    if (c.mean.size() != dim || dim == 0 || dim % 3 != 0)
      throw std::invalid_argument("mixture means must share one 3N dimension");
    c.mean = subtract_center_of_gravity(c.mean);
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mixture weights must sum to 1");

  return [schedule, mix, dim](const Conformation& z, int t) -> Eigen::VectorXd {
    check_step(t, schedule);
    if (static_cast<Eigen::Index>(3 * z.size()) != dim) throw std::invalid_argument("denoiser dimension mismatch");
    const double a = schedule.alpha(t), s = schedule.sigma(t);
    const Eigen::VectorXd zf = z.flat();
    // effective dimension of the zero center-of-gravity subspace
    const double d = static_cast<double>(dim - 3);

    std::vector<double> logw(mix.components.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < mix.components.size(); ++k) {
      const auto& c = mix.components[k];
      const double var = a * a * c.scale * c.scale + s * s;
      logw[k] = std::log(c.weight) - 0.5 * d * std::log(var) - 0.5 * (zf - a * c.mean).squaredNorm() / var;
      top = std::max(top, logw[k]);
    }
    double norm = 0;
    for (double& w : logw) norm += (w = std::exp(w - top));

    Eigen::VectorXd out(dim + z.features().size());
    out.head(dim).setZero();
    for (std::size_t k = 0; k < mix.components.size(); ++k) {
      const auto& c = mix.components[k];
      const double var = a * a * c.scale * c.scale + s * s;
      out.head(dim) += (logw[k] / norm) * (s / var) * (zf - a * c.mean);
    }
    out.tail(z.features().size()) = s * feature_flat(z);
    return out;
  };
}

TrainingLoss training_loss_at(const Conformation& x, const std::vector<ConstraintExpr>& exprs, const Denoiser& denoiser,
                              const NoiseSchedule& schedule, const ShakeConfig& shake, int step,
                              const Eigen::VectorXd& noise) {
  TrainingLoss loss;
  loss.step = step;
  const Conformation z = noised(x, step, schedule, noise);
  const auto coords = static_cast<Eigen::Index>(3 * x.size());
  try {
    const ShakeResult target = shake_project(z, exprs, shake);
    const Eigen::VectorXd eps_s = target.conformation.flat() - schedule.alpha(step) * x.flat();

    const Eigen::VectorXd predicted = denoiser(z, step);
    if (predicted.size() < coords) throw std::invalid_argument("denoiser output is shorter than 3N");
    Conformation shifted = z;
    shifted.set_flat(z.flat() + predicted.head(coords));
    const ShakeResult prediction = shake_project(shifted, exprs, shake);
    const Eigen::VectorXd eps_s_pred = prediction.conformation.flat() - z.flat();

    loss.value = (eps_s - eps_s_pred).squaredNorm();
    loss.target_report = target.report;
    loss.prediction_report = prediction.report;
    loss.flagged = !(target.report.converged && prediction.report.converged);
    if (loss.flagged)
      loss.diagnostics = fmt::format("projection did not converge (target residual {:g}, prediction residual {:g})",
                                     target.report.max_residual, prediction.report.max_residual);
  } catch (const GeometryError& e) {
    loss.value = std::numeric_limits<double>::quiet_NaN();
    loss.flagged = true;
    loss.diagnostics = e.what();
  }
  return loss;
}

TrainingLoss training_loss(const Conformation& x, const std::vector<ConstraintExpr>& exprs, const Denoiser& denoiser,
                           const NoiseSchedule& schedule, const ShakeConfig& shake, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, schedule.steps);
  const int t = pick(rng);
  const Eigen::VectorXd noise = centered_noise(x.size(), x.feature_dim(), rng);
  return training_loss_at(x, exprs, denoiser, schedule, shake, t, noise);
}

TrainingLoss training_loss(const Conformation& x, const Denoiser& denoiser, const NoiseSchedule& schedule,
                           const ShakeConfig& shake, std::mt19937_64& rng) {
  const auto sampled = sample_constraints(x, rng);
  return training_loss(x, {sampled.begin(), sampled.end()}, denoiser, schedule, shake, rng);
}

SampleResult reverse_sample(std::size_t n_particles, const std::vector<ConstraintExpr>& exprs, const Denoiser& denoiser,
                            const SamplerConfig& config, std::mt19937_64& rng) {
  config.validate();
  if (n_particles < 1) throw std::invalid_argument("need at least one particle");
  for (const auto& e : exprs) e.validate(n_particles);

  const NoiseSchedule& sched = config.schedule;
  const int T = sched.steps;
  ConstraintSchedule bounds = config.constraint_schedule;
  bounds.total_steps = T;

  const std::size_t f = config.feature_dim;
  const auto coords = static_cast<Eigen::Index>(3 * n_particles);
  const auto feats = static_cast<Eigen::Index>(n_particles * f);

  const Eigen::VectorXd start = centered_noise(n_particles, f, rng);
  Conformation z = Conformation::from_flat(start.head(coords));
  if (f) {
    z = Conformation(z.positions(), Features(static_cast<Eigen::Index>(n_particles), static_cast<Eigen::Index>(f)));
    set_features(z, start.tail(feats));
  }

  SampleResult result;
  result.reports.reserve(static_cast<std::size_t>(T) + 1);

  for (int t = T; t >= 1; --t) {
    const int s = t - 1;
    const Eigen::VectorXd predicted = denoiser(z, t);
    if (predicted.size() != coords + feats) throw std::invalid_argument("denoiser output has wrong length");
    Eigen::VectorXd eps = predicted;
    eps.head(coords) = subtract_center_of_gravity(Eigen::VectorXd(predicted.head(coords)));

    const double alpha_ts = sched.alpha(t) / sched.alpha(s);
    const double var_ts = std::max(0.0, sched.sigma(t) * sched.sigma(t) - alpha_ts * alpha_ts * sched.sigma(s) * sched.sigma(s));
    const double mean_coef = var_ts / (alpha_ts * sched.sigma(t));
    const double noise_std = std::sqrt(var_ts) * sched.sigma(s) / sched.sigma(t);

    const Eigen::VectorXd fresh = centered_noise(n_particles, f, rng);
    Eigen::VectorXd state(coords + feats);
    state.head(coords) = z.flat();
    if (feats) state.tail(feats) = feature_flat(z);
    state = state / alpha_ts - mean_coef * eps + noise_std * fresh;

    z.set_flat(subtract_center_of_gravity(Eigen::VectorXd(state.head(coords))));
    if (feats) set_features(z, state.tail(feats));

    const auto step_exprs = schedule_at(bounds, exprs, T - s);
    try {
      ShakeResult projected = shake_project(z, step_exprs, config.shake);
      if (!projected.report.converged) ++result.failed_steps;
      z = subtract_center_of_gravity(projected.conformation);
      result.reports.push_back(std::move(projected.report));
    } catch (const GeometryError& e) {
      ++result.failed_steps;
      ShakeReport failed;
      failed.max_residual = std::numeric_limits<double>::infinity();
      result.reports.push_back(failed);
    }
  }

  try {
    ShakeResult final_projection = shake_project(z, exprs, config.shake);
    result.conformation = std::move(final_projection.conformation);
    result.valid = final_projection.report.converged;
    if (!result.valid)
      result.failure = fmt::format("final projection did not converge (max residual {:g})",
                                   final_projection.report.max_residual);
    result.reports.push_back(std::move(final_projection.report));
  } catch (const GeometryError& e) {
    result.conformation = z;
    result.valid = false;
    result.failure = fmt::format("final projection hit degenerate geometry: {}", e.what());
    ShakeReport failed;
    failed.max_residual = std::numeric_limits<double>::infinity();
    result.reports.push_back(failed);
  }

  if (result.valid && result.failed_steps > config.max_failed_step_fraction * T) {
    result.valid = false;
    result.failure = fmt::format("{} of {} step projections failed", result.failed_steps, T);
  }
  return result;
}

SampleResult reverse_sample(std::size_t n_particles, const std::vector<ConstraintExpr>& exprs, const Denoiser& denoiser,
                            const SamplerConfig& config) {
  std::mt19937_64 rng(config.seed);
  return reverse_sample(n_particles, exprs, denoiser, config, rng);
}

LangevinResult langevin_step_with_noise(const Conformation& x, const Eigen::VectorXd& score,
                                        const std::vector<ConstraintExpr>& exprs, double diffusion_constant,
                                        double step_size, const Eigen::VectorXd& xi, const ShakeConfig& shake) {
  if (!(step_size > 0)) throw std::invalid_argument("Langevin step size must be positive");
  if (!(diffusion_constant >= 0)) throw std::invalid_argument("diffusion constant must be nonnegative");
  const auto dim = static_cast<Eigen::Index>(3 * x.size());
  if (score.size() != dim || xi.size() != dim) throw std::invalid_argument("score and noise must have length 3N");

  const Projector p = nullspace_projector(constraint_jacobian(active_set(exprs, x), x));
  Conformation moved = x;
  moved.set_flat(x.flat() + diffusion_constant * step_size * score +
                 std::sqrt(2.0 * diffusion_constant * step_size) * (p.matrix * xi));
  ShakeResult projected = shake_project(moved, exprs, shake);
  return {std::move(projected.conformation), std::move(projected.report)};
}

LangevinResult langevin_step(const Conformation& x, const Eigen::VectorXd& score, const std::vector<ConstraintExpr>& exprs,
                             double diffusion_constant, double step_size, std::mt19937_64& rng,
                             const ShakeConfig& shake) {
  const Eigen::VectorXd xi = standard_normal(static_cast<Eigen::Index>(3 * x.size()), rng);
  return langevin_step_with_noise(x, score, exprs, diffusion_constant, step_size, xi, shake);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace shakediff
