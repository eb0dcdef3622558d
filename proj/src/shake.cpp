#include "shakediff/shake.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "shakediff/projection.hpp"

namespace shakediff {

void ShakeConfig::validate() const {
  if (!(tolerance > 0)) throw std::invalid_argument("shake tolerance must be positive");
  if (max_iterations < 1) throw std::invalid_argument("shake max_iterations must be >= 1");
  if (!(regularization >= 0)) throw std::invalid_argument("shake regularization must be >= 0");
}

Eigen::MatrixXd constraint_gram(const std::vector<ActiveConstraint>& active, const Conformation& x) {
  const Eigen::MatrixXd j = constraint_jacobian(active, x).matrix;
  return j * j.transpose();
}

Eigen::VectorXd solve_multipliers(const Eigen::MatrixXd& gram, const Eigen::VectorXd& residuals,
                                  double regularization) {
  if (gram.rows() != gram.cols() || gram.rows() != residuals.size())
    throw std::invalid_argument("multiplier system dimensions disagree");
  if (gram.rows() == 0) return {};
  if (!gram.allFinite() || !residuals.allFinite())
    throw SingularSystemError("multiplier system has non-finite entries", std::numeric_limits<double>::infinity());

  Eigen::MatrixXd a = gram;
  a.diagonal().array() += regularization;

  const Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-12) return ldlt.solve(residuals);

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  const double condition = smin > 0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!(smax > 0))
    throw SingularSystemError(fmt::format("multiplier system is singular (condition {:g})", condition), condition);

  const double cutoff = kPseudoInverseCutoff * smax;
  Eigen::VectorXd coeffs = svd.matrixU().transpose() * residuals;
  for (Eigen::Index i = 0; i < s.size(); ++i) coeffs(i) = s(i) > cutoff ? coeffs(i) / s(i) : 0.0;
  return svd.matrixV() * coeffs;
}

namespace {

Eigen::VectorXd residual_vector(const std::vector<ActiveConstraint>& active, const Conformation& x) {
  Eigen::VectorXd r(static_cast<Eigen::Index>(active.size()));
  for (std::size_t i = 0; i < active.size(); ++i) r(static_cast<Eigen::Index>(i)) = active[i].residual(x);
  return r;
}

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

// One coupled update; returns the multipliers.
Eigen::VectorXd full_linear_step(Conformation& x, const std::vector<ActiveConstraint>& active,
                                 const Eigen::VectorXd& r, const ShakeConfig& config) {
  const Eigen::MatrixXd j = constraint_jacobian(active, x).matrix;
  const Eigen::VectorXd lambda = solve_multipliers(j * j.transpose(), r, config.regularization);
  x.set_flat(x.flat() - j.transpose() * lambda);
  return lambda;
}

// One sweep over the active constraints, each corrected against the latest coordinates.
Eigen::VectorXd gauss_seidel_sweep(Conformation& x, const std::vector<ActiveConstraint>& active,
                                   const ShakeConfig& config) {
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(active.size()));
  for (std::size_t b = 0; b < active.size(); ++b) {
    const double r = active[b].residual(x);
    const Eigen::VectorXd g = residual_gradient(active[b].constraint.primitive(), x);
    const double denom = g.squaredNorm() + config.regularization;
    if (!(denom > 0)) throw SingularSystemError("constraint gradient vanished", std::numeric_limits<double>::infinity());
    const double l = r / denom;
    x.set_flat(x.flat() - l * g);
    lambda(static_cast<Eigen::Index>(b)) = l;
  }
  return lambda;
}

// pinned interval bounds aim slightly inside the allowed range
void aim_inside(std::vector<ActiveConstraint>& active, double margin) {
  for (auto& a : active) {
    const auto* iv = std::get_if<Interval>(&a.constraint.bound());
    if (iv == nullptr || a.side == BoundSide::equality) continue;
    const double m = std::min(margin, 0.5 * (iv->upper - iv->lower));
    a.effective_target += a.side == BoundSide::at_lower ? m : -m;
  }
}

}  // namespace

ShakeResult shake_project(const Conformation& x, const std::vector<ConstraintExpr>& exprs, const ShakeConfig& config) {
  config.validate();
  for (const auto& e : exprs) e.validate(x.size());

  Conformation current = x;
  Conformation best = x;
  double best_residual = std::numeric_limits<double>::infinity();
  ShakeReport report;

  for (int iteration = 0;; ++iteration) {
    std::vector<ActiveConstraint> active = active_set(exprs, current);
    aim_inside(active, 2 * config.tolerance);
    const Eigen::VectorXd r = residual_vector(active, current);
    const double worst = max_abs(r);

    if (worst < best_residual) {
      best = current;
      best_residual = worst;
    }
    if (worst <= config.tolerance) {
      report.converged = true;
      break;
    }
    if (iteration >= config.max_iterations || !std::isfinite(worst)) break;

    const Eigen::VectorXd lambda = config.solver == ShakeSolver::full_linear
                                       ? full_linear_step(current, active, r, config)
                                       : gauss_seidel_sweep(current, active, config);
    report.iterations = iteration + 1;
    report.multipliers.assign(lambda.data(), lambda.data() + lambda.size());
    report.active = std::move(active);
  }

  report.max_residual = best_residual;
  return {std::move(best), std::move(report)};
}

Eigen::VectorXd shake_displacement(const Conformation& z, const std::vector<ConstraintExpr>& exprs,
                                   const ShakeConfig& config) {
  return shake_project(z, exprs, config).conformation.flat() - z.flat();
}

}  // namespace shakediff
