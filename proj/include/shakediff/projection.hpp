#pragma once

#include <random>
#include <vector>

#include <Eigen/Dense>

#include "shakediff/constraints.hpp"

namespace shakediff {

/// Relative singular-value cutoff for every pseudo-inverse in the library.
inline constexpr double kPseudoInverseCutoff = 1e-10;

/// Stacked residual gradients, one row per active constraint (M x 3N).
struct ConstraintJacobian {
  Eigen::MatrixXd matrix;
  std::vector<ActiveConstraint> rows;
};

ConstraintJacobian constraint_jacobian(const std::vector<ActiveConstraint>& active, const Conformation& x);

/// Orthogonal projector onto the nullspace of J (the tangent space of the active constraints).
struct Projector {
  Eigen::MatrixXd matrix;
  int rank_deficiency = 0;  // rank of J, i.e. the number of directions removed
};

/// P = I - J^T (J J^T)^+ J, evaluated through the right singular vectors of J.
Projector nullspace_projector(const ConstraintJacobian& jacobian);

Eigen::VectorXd project_noise(const Projector& projector, const Eigen::VectorXd& noise);

/// Moore-Penrose pseudo-inverse of a symmetric PSD matrix with the library cutoff.
Eigen::MatrixXd symmetric_pseudo_inverse(const Eigen::MatrixXd& m);

/**
 * Generalized Schur complement: Sigma - Sigma J^T (J Sigma J^T)^+ J Sigma.
 *
 * The result has zero variance along every row of J. Throws
 * std::invalid_argument if `covariance` is not symmetric positive definite.
 */
Eigen::MatrixXd schur_project_covariance(const Eigen::MatrixXd& covariance, const Eigen::MatrixXd& jacobian);

/// PSD square root via eigen-decomposition; negative eigenvalues are clamped to zero.
Eigen::MatrixXd psd_sqrt_factor(const Eigen::MatrixXd& covariance);

/// Draws mean + L xi with L L^T = covariance; the factor is computed once at construction.
class ConstrainedGaussian {
public:
  explicit ConstrainedGaussian(const Eigen::MatrixXd& covariance);

  Eigen::VectorXd draw(const Eigen::VectorXd& mean, std::mt19937_64& rng) const;
  const Eigen::MatrixXd& factor() const { return factor_; }

private:
  Eigen::MatrixXd factor_;
};

Eigen::VectorXd constrained_gaussian_sample(const Eigen::MatrixXd& covariance, const Eigen::VectorXd& mean,
                                            std::mt19937_64& rng);

}  // namespace shakediff
