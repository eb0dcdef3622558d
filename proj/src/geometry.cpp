#include "shakediff/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace shakediff {

Conformation::Conformation(Positions positions, Features features, std::vector<std::string> labels)
    : positions_(std::move(positions)), features_(std::move(features)), labels_(std::move(labels)) {
  if (positions_.rows() < 1) throw std::invalid_argument("conformation needs at least one particle");
  if (!positions_.allFinite()) throw std::invalid_argument("conformation has non-finite coordinates");
  if (features_.size() > 0 && features_.rows() != positions_.rows())
    throw std::invalid_argument("feature rows must match particle count");
  if (!labels_.empty() && labels_.size() != size())
    throw std::invalid_argument("label count must match particle count");
}

Conformation Conformation::from_flat(const Eigen::VectorXd& flat) {
  if (flat.size() == 0 || flat.size() % 3 != 0)
    throw std::invalid_argument("flat coordinate vector length must be a positive multiple of 3");
  Positions p = Eigen::Map<const Positions>(flat.data(), flat.size() / 3, 3);
  return Conformation(std::move(p));
}

Eigen::VectorXd Conformation::flat() const {
  return Eigen::Map<const Eigen::VectorXd>(positions_.data(), positions_.size());
}

void Conformation::set_flat(const Eigen::VectorXd& flat) {
  if (flat.size() != positions_.size())
    throw std::invalid_argument("flat coordinate vector has wrong length");
  Eigen::Map<Eigen::VectorXd>(positions_.data(), positions_.size()) = flat;
}

Eigen::Vector3d Conformation::center_of_gravity() const {
  return positions_.colwise().mean().transpose();
}

DegeneracyError::DegeneracyError(const std::string& what, std::vector<std::size_t> indices)
    : GeometryError(what), indices_(std::move(indices)) {}

std::size_t arity(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::distance: return 2;
    case ConstraintKind::angle: return 3;
    case ConstraintKind::dihedral: return 4;
  }
  return 0;
}

const char* to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::distance: return "distance";
    case ConstraintKind::angle: return "angle";
    case ConstraintKind::dihedral: return "dihedral";
  }
  return "unknown";
}

Primitive Primitive::distance(std::size_t i, std::size_t j) {
  return {ConstraintKind::distance, {i, j, 0, 0}};
}

Primitive Primitive::angle(std::size_t i, std::size_t j, std::size_t k) {
  return {ConstraintKind::angle, {i, j, k, 0}};
}

Primitive Primitive::dihedral(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
  return {ConstraintKind::dihedral, {i, j, k, l}};
}

void Primitive::validate(std::size_t n_particles) const {
  const std::size_t n = arity();
  for (std::size_t a = 0; a < n; ++a) {
    if (indices[a] >= n_particles)
      throw std::out_of_range(std::string(to_string(kind)) + " index " + std::to_string(indices[a]) +
                              " out of range for " + std::to_string(n_particles) + " particles");
    for (std::size_t b = 0; b < a; ++b)
      if (indices[a] == indices[b])
        throw std::invalid_argument(std::string(to_string(kind)) + " indices must be distinct");
  }
}

namespace {

Eigen::Vector3d row(const Conformation& x, std::size_t i) { return x.position(i); }

void check_indices(const Conformation& x, const Primitive& p) { p.validate(x.size()); }

struct AngleTerms {
  Eigen::Vector3d u, v;  // arms from the vertex
  double nu, nv, cross_norm, dot;
};

AngleTerms angle_terms(const Conformation& x, std::size_t i, std::size_t j, std::size_t k) {
  AngleTerms t;
  t.u = row(x, i) - row(x, j);
  t.v = row(x, k) - row(x, j);
  t.nu = t.u.norm();
  t.nv = t.v.norm();
  if (t.nu < kDegeneracyThreshold) throw DegeneracyError("degenerate angle arm", {i, j});
  if (t.nv < kDegeneracyThreshold) throw DegeneracyError("degenerate angle arm", {k, j});
  t.cross_norm = t.u.cross(t.v).norm();
  t.dot = t.u.dot(t.v);
  return t;
}

struct DihedralTerms {
  Eigen::Vector3d b1, b2, b3, n1, n2;
  double nb2, nn1sq, nn2sq;
};

DihedralTerms dihedral_terms(const Conformation& x, std::size_t i, std::size_t j, std::size_t k,
                             std::size_t l) {
  DihedralTerms t;
  t.b1 = row(x, j) - row(x, i);
  t.b2 = row(x, k) - row(x, j);
  t.b3 = row(x, l) - row(x, k);
  t.nb2 = t.b2.norm();
  if (t.nb2 < kDegeneracyThreshold) throw DegeneracyError("degenerate dihedral axis", {j, k});
  t.n1 = t.b1.cross(t.b2);
  t.n2 = t.b2.cross(t.b3);
  t.nn1sq = t.n1.squaredNorm();
  t.nn2sq = t.n2.squaredNorm();
  if (std::sqrt(t.nn1sq) < kDegeneracyThreshold) throw DegeneracyError("degenerate dihedral plane", {i, j, k});
  if (std::sqrt(t.nn2sq) < kDegeneracyThreshold) throw DegeneracyError("degenerate dihedral plane", {j, k, l});
  return t;
}

double wrap_if(ConstraintKind kind, double diff) {
  return kind == ConstraintKind::dihedral ? wrap_angle(diff) : diff;
}

void add_block(Eigen::VectorXd& g, std::size_t particle, const Eigen::Vector3d& v) {
  g.segment<3>(static_cast<Eigen::Index>(3 * particle)) += v;
}

}  // namespace

double pairwise_distance(const Conformation& x, std::size_t i, std::size_t j) {
  check_indices(x, Primitive::distance(i, j));
  return (row(x, i) - row(x, j)).norm();
}

double bond_angle(const Conformation& x, std::size_t i, std::size_t j, std::size_t k) {
  check_indices(x, Primitive::angle(i, j, k));
  const AngleTerms t = angle_terms(x, i, j, k);
  const double c = std::clamp(t.dot / (t.nu * t.nv), -1.0, 1.0);
  return std::acos(c);
}

double dihedral_angle(const Conformation& x, std::size_t i, std::size_t j, std::size_t k,
                      std::size_t l) {
  check_indices(x, Primitive::dihedral(i, j, k, l));
  const DihedralTerms t = dihedral_terms(x, i, j, k, l);
  const double psi = std::atan2(t.nb2 * t.b1.dot(t.n2), t.n1.dot(t.n2));
  // atan2 returns [-pi, pi]; fold -pi onto pi
  return psi <= -std::numbers::pi ? std::numbers::pi : psi;
}

double observable(const Primitive& p, const Conformation& x) {
  const auto& ix = p.indices;
  switch (p.kind) {
    case ConstraintKind::distance: return pairwise_distance(x, ix[0], ix[1]);
    case ConstraintKind::angle: return bond_angle(x, ix[0], ix[1], ix[2]);
    case ConstraintKind::dihedral: return dihedral_angle(x, ix[0], ix[1], ix[2], ix[3]);
  }
  return 0.0;
}

double wrap_angle(double radians) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::remainder(radians, two_pi);  // [-pi, pi]
  if (r <= -std::numbers::pi) r += two_pi;
  return r;
}

double residual(const Primitive& p, const Conformation& x, double target) {
  if (!std::isfinite(target)) throw std::invalid_argument("residual target must be finite");
  const double diff = observable(p, x) - target;
  return p.kind == ConstraintKind::dihedral ? wrap_angle(diff) : diff;
}

Eigen::VectorXd residual_gradient(const Primitive& p, const Conformation& x) {
  check_indices(x, p);
  const auto& ix = p.indices;
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * x.size()));

  switch (p.kind) {
    case ConstraintKind::distance: {
      const Eigen::Vector3d r = row(x, ix[0]) - row(x, ix[1]);
      const double d = r.norm();
      if (d < kDegeneracyThreshold) throw DegeneracyError("coincident particles", {ix[0], ix[1]});
      add_block(g, ix[0], r / d);
      add_block(g, ix[1], -r / d);
      break;
    }
    case ConstraintKind::angle: {
      const AngleTerms t = angle_terms(x, ix[0], ix[1], ix[2]);
      // |u||v| sin(theta) = |u x v|; the angle is not differentiable at 0 or pi
      if (t.cross_norm < kDegeneracyThreshold * t.nu * t.nv)
        throw DegeneracyError("collinear angle has no gradient", {ix[0], ix[1], ix[2]});
      const double sin_t = t.cross_norm / (t.nu * t.nv);
      const double cos_t = t.dot / (t.nu * t.nv);
      const Eigen::Vector3d uh = t.u / t.nu;
      const Eigen::Vector3d vh = t.v / t.nv;
      const Eigen::Vector3d gi = (cos_t * uh - vh) / (t.nu * sin_t);
      const Eigen::Vector3d gk = (cos_t * vh - uh) / (t.nv * sin_t);
      add_block(g, ix[0], gi);
      add_block(g, ix[2], gk);
      add_block(g, ix[1], -gi - gk);
      break;
    }
    case ConstraintKind::dihedral: {
      const DihedralTerms t = dihedral_terms(x, ix[0], ix[1], ix[2], ix[3]);
      const double b2sq = t.nb2 * t.nb2;
      const Eigen::Vector3d gi = -t.nb2 / t.nn1sq * t.n1;
      const Eigen::Vector3d gl = t.nb2 / t.nn2sq * t.n2;
      const double f = t.b1.dot(t.b2) / b2sq;
      const double h = t.b3.dot(t.b2) / b2sq;
      add_block(g, ix[0], gi);
      add_block(g, ix[3], gl);
      add_block(g, ix[1], -(1.0 + f) * gi + h * gl);
      add_block(g, ix[2], f * gi - (1.0 + h) * gl);
      break;
    }
  }
  return g;
}

Eigen::VectorXd finite_difference_gradient(const Primitive& p, const Conformation& x,
                                           double target, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("finite-difference step must be positive");
  check_indices(x, p);
  const double base = residual(p, x, target);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * x.size()));
  Conformation probe = x;
  for (std::size_t a = 0; a < p.arity(); ++a) {
    const auto particle = static_cast<Eigen::Index>(p.indices[a]);
    for (Eigen::Index c = 0; c < 3; ++c) {
      const double orig = probe.positions()(particle, c);
      probe.positions()(particle, c) = orig + step;
      const double plus = residual(p, probe, target);
      probe.positions()(particle, c) = orig - step;
      const double minus = residual(p, probe, target);
      probe.positions()(particle, c) = orig;
      // differences are taken relative to the base value so that dihedral wrap
      // across +-pi does not produce a 2*pi jump
      g(3 * particle + c) += (wrap_if(p.kind, plus - base) - wrap_if(p.kind, minus - base)) / (2.0 * step);
    }
  }
  return g;
}

}  // namespace shakediff
