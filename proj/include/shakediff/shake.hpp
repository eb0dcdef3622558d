#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shakediff/constraints.hpp"

namespace shakediff {

enum class ShakeSolver {
  full_linear,   ///< solve the coupled multiplier system every iteration
  gauss_seidel,  ///< classic per-constraint sweeps
};

struct ShakeConfig {
  double tolerance = 1e-8;  ///< on max |residual| over the active set
  int max_iterations = 500;
  ShakeSolver solver = ShakeSolver::full_linear;
  double regularization = 1e-10;  ///< Tikhonov shift on the Gram matrix

  void validate() const;
};

struct ShakeReport {
  int iterations = 0;  ///< coordinate updates performed
  double max_residual = 0.0;
  bool converged = false;
  /// Multipliers of the last update, aligned with `active` at that update.
  std::vector<double> multipliers;
  std::vector<ActiveConstraint> active;
};

class SingularSystemError : public std::runtime_error {
public:
  SingularSystemError(const std::string& what, double condition)
      : std::runtime_error(what), condition_(condition) {}
  double condition() const { return condition_; }

private:
  double condition_;
};

/// A[a][b] = grad c_a . grad c_b, both gradients at `x`.
Eigen::MatrixXd constraint_gram(const std::vector<ActiveConstraint>& active, const Conformation& x);

/**
 * Solves (A + regularization I) lambda = residuals.
 *
 * Uses LDL^T and falls back to an SVD least-squares solve when the
 * factorization fails or is ill conditioned (redundant constraint sets).
 */
Eigen::VectorXd solve_multipliers(const Eigen::MatrixXd& gram, const Eigen::VectorXd& residuals,
                                  double regularization);

struct ShakeResult {
  Conformation conformation;
  ShakeReport report;
};

/**
 * Projects `x` onto the set satisfying `exprs` with unit masses and timestep.
 *
 * Each iteration re-evaluates the active set, stops once every active
 * residual is within tolerance, and otherwise moves x <- x - sum_b lambda_b grad c_b.
 * A run that exhausts max_iterations returns its lowest-residual iterate with
 * `converged == false`. Features are copied through unchanged.
 */
ShakeResult shake_project(const Conformation& x, const std::vector<ConstraintExpr>& exprs,
                          const ShakeConfig& config = {});

/// shake_project(z) - z, flattened to 3N.
Eigen::VectorXd shake_displacement(const Conformation& z, const std::vector<ConstraintExpr>& exprs,
                                   const ShakeConfig& config = {});

}  // namespace shakediff
