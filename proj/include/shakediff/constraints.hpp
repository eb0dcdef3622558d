#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "shakediff/geometry.hpp"

namespace shakediff {

class ConstraintError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

struct Exact {
  double target = 0.0;
  friend bool operator==(const Exact&, const Exact&) = default;
};

/**
 * Closed bound [lower, upper]. Either side may be infinite (half-open bands).
 *
 * Dihedral intervals are arcs: the allowed set is every angle reached by
 * turning counter-clockwise from `lower` by at most `upper - lower`, which must
 * not exceed 2*pi.
 */
struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

using Bound = std::variant<Exact, Interval>;

class Constraint {
public:
  Constraint(Primitive primitive, Bound bound);

  static Constraint exact(Primitive p, double target) { return {p, Exact{target}}; }
  static Constraint interval(Primitive p, double lower, double upper) { return {p, Interval{lower, upper}}; }

  const Primitive& primitive() const { return primitive_; }
  const Bound& bound() const { return bound_; }
  bool is_exact() const { return std::holds_alternative<Exact>(bound_); }

  std::string describe() const;

  friend bool operator==(const Constraint&, const Constraint&) = default;

private:
  Primitive primitive_;
  Bound bound_;
};

class ConstraintExpr;

struct AllOf {
  std::vector<ConstraintExpr> children;
};

struct AnyOf {
  std::vector<ConstraintExpr> children;
};

struct Negation {
  std::shared_ptr<const ConstraintExpr> child;
  double epsilon = 0.0;
};

/// Logical tree over constraint atoms. Immutable once built; children are validated on construction.
class ConstraintExpr {
public:
  using Node = std::variant<Constraint, AllOf, AnyOf, Negation>;

  ConstraintExpr(Constraint atom) : node_(std::move(atom)) {}  // NOLINT(google-explicit-constructor)

  static ConstraintExpr all_of(std::vector<ConstraintExpr> children);
  static ConstraintExpr any_of(std::vector<ConstraintExpr> children);
  static ConstraintExpr negate(ConstraintExpr child, double epsilon);

  const Node& node() const { return node_; }
  const Constraint* atom() const { return std::get_if<Constraint>(&node_); }

  /// Checks every atom's indices against the particle count.
  void validate(std::size_t n_particles) const;

  std::string describe() const;

private:
  explicit ConstraintExpr(Node node) : node_(std::move(node)) {}
  Node node_;
};

enum class BoundSide { equality, at_lower, at_upper };

const char* to_string(BoundSide side);

/// A constraint reduced to an equality for one projection step.
struct ActiveConstraint {
  Constraint constraint;
  double effective_target = 0.0;
  BoundSide side = BoundSide::equality;

  double residual(const Conformation& x) const {
    return shakediff::residual(constraint.primitive(), x, effective_target);
  }
};

/**
 * How far an interval constraint is violated (0 when satisfied) and which
 * bound is violated. Only meaningful for interval constraints.
 */
struct Slack {
  double value = 0.0;
  BoundSide side = BoundSide::equality;
};

Slack interval_slack(const Constraint& c, double observable_value);

/// Slack variable y >= 0 for an interval constraint; throws ConstraintError on Exact constraints.
double slack_value(const Constraint& c, const Conformation& x);

/// Magnitude of the violation of a whole expression: And = max, Or = min, atoms = |c| or slack.
double violation(const ConstraintExpr& expr, const Conformation& x);

/**
 * Reduces the expressions to the equalities a projection step must enforce.
 *
 * Exact atoms are always active; interval atoms only while violated, pinned
 * to the violated bound. An Or contributes the active set of its
 * least-violated branch (lowest index on ties); a Not is lowered first.
 */
std::vector<ActiveConstraint> active_set(const std::vector<ConstraintExpr>& exprs, const Conformation& x);

/// Rewrites Not(atom = t, eps) as Or(observable <= t - eps, observable >= t + eps).
ConstraintExpr lower_not(const Negation& negation);

bool satisfied(const ConstraintExpr& expr, const Conformation& x, double tol);
bool satisfied(const std::vector<ConstraintExpr>& exprs, const Conformation& x, double tol);

/**
 * Linear relaxation of bounds over a generation run of `total_steps` steps.
 *
 * At step 0 finite intervals have their half-width multiplied by
 * `initial_widen`; Exact targets become intervals of half-width
 * `exact_half_width`, and half-open bands are relaxed outward by
 * `exact_half_width`. Everything shrinks linearly to the user bounds at
 * `total_steps`.
 */
struct ConstraintSchedule {
  double initial_widen = 5.0;
  double exact_half_width = 0.5;
  int total_steps = 1000;

  void validate() const;
};

Constraint schedule_at(const ConstraintSchedule& s, const Constraint& c, int step);
ConstraintExpr schedule_at(const ConstraintSchedule& s, const ConstraintExpr& expr, int step);
std::vector<ConstraintExpr> schedule_at(const ConstraintSchedule& s, const std::vector<ConstraintExpr>& exprs,
                                        int step);

struct CountRange {
  int min = 5;
  int max = 15;
};

/// Draws Exact constraints satisfied by `x`: a uniform count, then per draw a uniform kind and index tuple.
std::vector<Constraint> sample_constraints(const Conformation& x, std::mt19937_64& rng, CountRange count = {});

}  // namespace shakediff
