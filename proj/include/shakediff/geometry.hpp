#pragma once

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace shakediff {

using Positions = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Features = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Arms, bond vectors and plane normals shorter than this are treated as degenerate.
inline constexpr double kDegeneracyThreshold = 1e-9;

/**
 * A set of N particles in 3D (Angstroms) with optional per-particle features and labels.
 *
 * Positions are stored row-major so that the flattened 3N view used by the
 * constraint machinery is (x0, y0, z0, x1, y1, z1, ...). Features are carried
 * along but never touched by constraint projection.
 */
class Conformation {
public:
  Conformation() = default;
  explicit Conformation(Positions positions, Features features = {},
                        std::vector<std::string> labels = {});

  static Conformation from_flat(const Eigen::VectorXd& flat);

  std::size_t size() const { return static_cast<std::size_t>(positions_.rows()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features_.cols()); }

  const Positions& positions() const { return positions_; }
  Positions& positions() { return positions_; }
  const Features& features() const { return features_; }
  Features& features() { return features_; }
  const std::vector<std::string>& labels() const { return labels_; }

  Eigen::Vector3d position(std::size_t i) const { return positions_.row(static_cast<Eigen::Index>(i)).transpose(); }

  Eigen::VectorXd flat() const;
  void set_flat(const Eigen::VectorXd& flat);

  Eigen::Vector3d center_of_gravity() const;

private:
  Positions positions_;
  Features features_;
  std::vector<std::string> labels_;
};

class GeometryError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Raised when an arm, bond or plane normal collapses below kDegeneracyThreshold.
class DegeneracyError : public GeometryError {
public:
  DegeneracyError(const std::string& what, std::vector<std::size_t> indices);
  const std::vector<std::size_t>& indices() const { return indices_; }

private:
  std::vector<std::size_t> indices_;
};

enum class ConstraintKind { distance, angle, dihedral };

std::size_t arity(ConstraintKind kind);
const char* to_string(ConstraintKind kind);

/// A geometric observable over particle indices; unused trailing index slots are ignored.
struct Primitive {
  ConstraintKind kind = ConstraintKind::distance;
  std::array<std::size_t, 4> indices{};

  static Primitive distance(std::size_t i, std::size_t j);
  static Primitive angle(std::size_t i, std::size_t j, std::size_t k);
  static Primitive dihedral(std::size_t i, std::size_t j, std::size_t k, std::size_t l);

  std::size_t arity() const { return shakediff::arity(kind); }

  /// Throws std::out_of_range / std::invalid_argument on bad or repeated indices.
  void validate(std::size_t n_particles) const;

  friend bool operator==(const Primitive&, const Primitive&) = default;
};

double pairwise_distance(const Conformation& x, std::size_t i, std::size_t j);

/// Angle at vertex j in [0, pi].
double bond_angle(const Conformation& x, std::size_t i, std::size_t j, std::size_t k);

/**
 * Signed torsion in (-pi, pi].
 *
 * With b1 = x_j - x_i, b2 = x_k - x_j, b3 = x_l - x_k and plane normals
 * n1 = b1 x b2, n2 = b2 x b3 the angle is atan2(|b2| b1.n2, n1.n2):
 * 0 for the planar cis arrangement, pi for trans, positive for a
 * right-handed (counter-clockwise) rotation of l about the j->k axis
 * when viewed from k towards j. Every dihedral quantity in the library uses
 * this convention; a mirrored convention flips residual signs.
 */
double dihedral_angle(const Conformation& x, std::size_t i, std::size_t j, std::size_t k,
                      std::size_t l);

double observable(const Primitive& p, const Conformation& x);

/// Wraps an angle difference into (-pi, pi].
double wrap_angle(double radians);

/// Signed residual observable - target; dihedral residuals are wrapped into (-pi, pi].
double residual(const Primitive& p, const Conformation& x, double target);

/// Analytic gradient of the signed residual with respect to all 3N coordinates.
Eigen::VectorXd residual_gradient(const Primitive& p, const Conformation& x);

/// Central differences of the residual; test oracle and `gradcheck` backend.
Eigen::VectorXd finite_difference_gradient(const Primitive& p, const Conformation& x,
                                           double target, double step);

}  // namespace shakediff
