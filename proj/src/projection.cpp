#include "shakediff/projection.hpp"

#include <cmath>
#include <stdexcept>

namespace shakediff {

ConstraintJacobian constraint_jacobian(const std::vector<ActiveConstraint>& active, const Conformation& x) {
  ConstraintJacobian j;
  j.rows = active;
  j.matrix.resize(static_cast<Eigen::Index>(active.size()), static_cast<Eigen::Index>(3 * x.size()));
  for (std::size_t r = 0; r < active.size(); ++r)
    j.matrix.row(static_cast<Eigen::Index>(r)) = residual_gradient(active[r].constraint.primitive(), x).transpose();
  return j;
}

Projector nullspace_projector(const ConstraintJacobian& jacobian) {
  const Eigen::MatrixXd& j = jacobian.matrix;
  const Eigen::Index n = j.cols();
  Projector p;
  p.matrix = Eigen::MatrixXd::Identity(n, n);
  if (j.rows() == 0) return p;
  if (!j.allFinite()) throw std::invalid_argument("jacobian has non-finite entries");

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(j, Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return p;
  const double cutoff = kPseudoInverseCutoff * s(0);
  Eigen::Index rank = 0;
  while (rank < s.size() && s(rank) > cutoff) ++rank;

  const auto v = svd.matrixV().leftCols(rank);
  p.matrix.noalias() -= v * v.transpose();
  p.rank_deficiency = static_cast<int>(rank);
  return p;
}

Eigen::VectorXd project_noise(const Projector& projector, const Eigen::VectorXd& noise) {
  if (noise.size() != projector.matrix.cols()) throw std::invalid_argument("noise dimension does not match projector");
  return projector.matrix * noise;
}

Eigen::MatrixXd symmetric_pseudo_inverse(const Eigen::MatrixXd& m) {
  if (m.rows() == 0) return m;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
  const Eigen::VectorXd& w = eig.eigenvalues();
  const double cutoff = kPseudoInverseCutoff * w.cwiseAbs().maxCoeff();
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w(i) > cutoff) inv(i) = 1.0 / w(i);
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

namespace {

void require_symmetric(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() != m.cols()) throw std::invalid_argument(std::string(what) + " must be square");
  if (!m.allFinite()) throw std::invalid_argument(std::string(what) + " has non-finite entries");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument(std::string(what) + " is not symmetric");
}

}  // namespace

Eigen::MatrixXd schur_project_covariance(const Eigen::MatrixXd& covariance, const Eigen::MatrixXd& jacobian) {
  require_symmetric(covariance, "covariance");
  if (Eigen::LLT<Eigen::MatrixXd>(covariance).info() != Eigen::Success)
    throw std::invalid_argument("covariance is not positive definite");
  if (jacobian.rows() == 0) return covariance;
  if (jacobian.cols() != covariance.rows()) throw std::invalid_argument("jacobian columns do not match covariance");
  if (!jacobian.allFinite()) throw std::invalid_argument("jacobian has non-finite entries");

  const Eigen::MatrixXd sj = covariance * jacobian.transpose();  // Sigma J^T
  const Eigen::MatrixXd inner = jacobian * sj;                   // J Sigma J^T
  Eigen::MatrixXd out = covariance - sj * symmetric_pseudo_inverse(0.5 * (inner + inner.transpose())) * sj.transpose();
  return 0.5 * (out + out.transpose());
}

Eigen::MatrixXd psd_sqrt_factor(const Eigen::MatrixXd& covariance) {
  require_symmetric(covariance, "covariance");
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(covariance);
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal();
}

ConstrainedGaussian::ConstrainedGaussian(const Eigen::MatrixXd& covariance) : factor_(psd_sqrt_factor(covariance)) {}

Eigen::VectorXd ConstrainedGaussian::draw(const Eigen::VectorXd& mean, std::mt19937_64& rng) const {
  if (mean.size() != factor_.rows()) throw std::invalid_argument("mean dimension does not match covariance");
  std::normal_distribution<double> normal;
  Eigen::VectorXd xi(factor_.cols());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = normal(rng);
  return mean + factor_ * xi;
}

Eigen::VectorXd constrained_gaussian_sample(const Eigen::MatrixXd& covariance, const Eigen::VectorXd& mean,
                                            std::mt19937_64& rng) {
  return ConstrainedGaussian(covariance).draw(mean, rng);
}

}  // namespace shakediff
