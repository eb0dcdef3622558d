#include "shakediff/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

namespace shakediff {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string describe_primitive(const Primitive& p) {
  std::string s = to_string(p.kind);
  s += '(';
  for (std::size_t a = 0; a < p.arity(); ++a) {
    if (a) s += ',';
    s += std::to_string(p.indices[a]);
  }
  s += ')';
  return s;
}

// [0, 2*pi)
double wrap_positive(double radians) {
  double r = std::fmod(radians, kTwoPi);
  if (r < 0) r += kTwoPi;
  return r;
}

}  // namespace

Constraint::Constraint(Primitive primitive, Bound bound) : primitive_(primitive), bound_(bound) {
  primitive_.validate(std::numeric_limits<std::size_t>::max());
  if (const auto* e = std::get_if<Exact>(&bound_)) {
    if (!std::isfinite(e->target)) throw ConstraintError("exact target must be finite");
    if (primitive_.kind == ConstraintKind::distance && e->target < 0)
      throw ConstraintError("distance target must be nonnegative");
    if (primitive_.kind == ConstraintKind::angle && (e->target < 0 || e->target > std::numbers::pi))
      throw ConstraintError("angle target must lie in [0, pi]");
    if (primitive_.kind == ConstraintKind::dihedral && (e->target <= -std::numbers::pi || e->target > std::numbers::pi))
      throw ConstraintError("dihedral target must lie in (-pi, pi]");
  } else {
    const auto& iv = std::get<Interval>(bound_);
    if (std::isnan(iv.lower) || std::isnan(iv.upper) || !(iv.lower <= iv.upper))
      throw ConstraintError("interval requires lower <= upper");
    if (iv.lower == std::numeric_limits<double>::infinity() || iv.upper == -std::numeric_limits<double>::infinity())
      throw ConstraintError("interval is empty");
    if (primitive_.kind == ConstraintKind::dihedral) {
      if (!std::isfinite(iv.lower) || !std::isfinite(iv.upper))
        throw ConstraintError("dihedral intervals must have finite bounds");
      if (iv.upper - iv.lower > kTwoPi + 1e-12) throw ConstraintError("dihedral interval wider than 2*pi");
    }
  }
}

std::string Constraint::describe() const {
  if (const auto* e = std::get_if<Exact>(&bound_)) return fmt::format("{} = {}", describe_primitive(primitive_), e->target);
  const auto& iv = std::get<Interval>(bound_);
  return fmt::format("{} in [{}, {}]", describe_primitive(primitive_), iv.lower, iv.upper);
}

ConstraintExpr ConstraintExpr::all_of(std::vector<ConstraintExpr> children) {
  if (children.empty()) throw ConstraintError("AND needs at least one child");
  return ConstraintExpr(Node{AllOf{std::move(children)}});
}

ConstraintExpr ConstraintExpr::any_of(std::vector<ConstraintExpr> children) {
  if (children.empty()) throw ConstraintError("OR needs at least one child");
  return ConstraintExpr(Node{AnyOf{std::move(children)}});
}

ConstraintExpr ConstraintExpr::negate(ConstraintExpr child, double epsilon) {
  if (!(epsilon > 0) || !std::isfinite(epsilon)) throw ConstraintError("NOT epsilon must be positive");
  const Constraint* a = child.atom();
  if (a == nullptr || !a->is_exact())
    throw ConstraintError("NOT is only defined for a single exact constraint");
  return ConstraintExpr(Node{Negation{std::make_shared<const ConstraintExpr>(std::move(child)), epsilon}});
}

void ConstraintExpr::validate(std::size_t n_particles) const {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Constraint>) {
          n.primitive().validate(n_particles);
        } else if constexpr (std::is_same_v<T, Negation>) {
          n.child->validate(n_particles);
        } else {
          for (const auto& c : n.children) c.validate(n_particles);
        }
      },
      node_);
}

std::string ConstraintExpr::describe() const {
  return std::visit(
      [](const auto& n) -> std::string {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Constraint>) {
          return n.describe();
        } else if constexpr (std::is_same_v<T, Negation>) {
          return fmt::format("not({}, eps={})", n.child->describe(), n.epsilon);
        } else {
          std::string s = std::is_same_v<T, AllOf> ? "and(" : "or(";
          for (std::size_t i = 0; i < n.children.size(); ++i) {
            if (i) s += ", ";
            s += n.children[i].describe();
          }
          return s + ")";
        }
      },
      node_);
}

const char* to_string(BoundSide side) {
  switch (side) {
    case BoundSide::equality: return "equality";
    case BoundSide::at_lower: return "lower";
    case BoundSide::at_upper: return "upper";
  }
  return "unknown";
}

Slack interval_slack(const Constraint& c, double value) {
  const auto* iv = std::get_if<Interval>(&c.bound());
  if (iv == nullptr) throw ConstraintError("slack is only defined for interval constraints");

  if (c.primitive().kind != ConstraintKind::dihedral) {
    if (value > iv->upper) return {value - iv->upper, BoundSide::at_upper};
    if (value < iv->lower) return {iv->lower - value, BoundSide::at_lower};
    return {};
  }

  const double width = iv->upper - iv->lower;
  if (width >= kTwoPi) return {};
  const double offset = wrap_positive(value - iv->lower);
  if (offset <= width) return {};
  const double past_upper = offset - width;
  const double before_lower = kTwoPi - offset;
  if (past_upper <= before_lower) return {past_upper, BoundSide::at_upper};
  return {before_lower, BoundSide::at_lower};
}

double slack_value(const Constraint& c, const Conformation& x) {
  if (c.is_exact()) throw ConstraintError("slack is only defined for interval constraints");
  return interval_slack(c, observable(c.primitive(), x)).value;
}

namespace {

double atom_violation(const Constraint& c, const Conformation& x) {
  if (const auto* e = std::get_if<Exact>(&c.bound())) return std::abs(residual(c.primitive(), x, e->target));
  return interval_slack(c, observable(c.primitive(), x)).value;
}

void collect_active(const ConstraintExpr& expr, const Conformation& x, std::vector<ActiveConstraint>& out);

std::size_t least_violated(const std::vector<ConstraintExpr>& children, const Conformation& x) {
  std::size_t best = 0;
  double best_v = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < children.size(); ++i) {
    const double v = violation(children[i], x);
    if (v < best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

void collect_active(const ConstraintExpr& expr, const Conformation& x, std::vector<ActiveConstraint>& out) {
  std::visit(
      [&](const auto& n) {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Constraint>) {
          if (const auto* e = std::get_if<Exact>(&n.bound())) {
            out.push_back({n, e->target, BoundSide::equality});
          } else {
            const auto& iv = std::get<Interval>(n.bound());
            const Slack s = interval_slack(n, observable(n.primitive(), x));
            if (s.value > 0) out.push_back({n, s.side == BoundSide::at_upper ? iv.upper : iv.lower, s.side});
          }
        } else if constexpr (std::is_same_v<T, AllOf>) {
          for (const auto& c : n.children) collect_active(c, x, out);
        } else if constexpr (std::is_same_v<T, AnyOf>) {
          collect_active(n.children[least_violated(n.children, x)], x, out);
        } else {
          collect_active(lower_not(n), x, out);
        }
      },
      expr.node());
}

}  // namespace

double violation(const ConstraintExpr& expr, const Conformation& x) {
  return std::visit(
      [&](const auto& n) -> double {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Constraint>) {
          return atom_violation(n, x);
        } else if constexpr (std::is_same_v<T, AllOf>) {
          double v = 0;
          for (const auto& c : n.children) v = std::max(v, violation(c, x));
          return v;
        } else if constexpr (std::is_same_v<T, AnyOf>) {
          double v = std::numeric_limits<double>::infinity();
          for (const auto& c : n.children) v = std::min(v, violation(c, x));
          return v;
        } else {
          return violation(lower_not(n), x);
        }
      },
      expr.node());
}

std::vector<ActiveConstraint> active_set(const std::vector<ConstraintExpr>& exprs, const Conformation& x) {
  std::vector<ActiveConstraint> out;
  for (const auto& e : exprs) collect_active(e, x, out);
  return out;
}

ConstraintExpr lower_not(const Negation& negation) {
  const Constraint* a = negation.child ? negation.child->atom() : nullptr;
  if (a == nullptr || !a->is_exact()) throw ConstraintError("NOT is only defined for a single exact constraint");
  if (!(negation.epsilon > 0)) throw ConstraintError("NOT epsilon must be positive");
  const Primitive& p = a->primitive();
  const double t = std::get<Exact>(a->bound()).target;
  const double eps = negation.epsilon;
  if (p.kind == ConstraintKind::dihedral) {
    // the excluded band on the circle leaves two arcs meeting opposite the target
    return ConstraintExpr::any_of({Constraint::interval(p, t - std::numbers::pi, t - eps),
                                   Constraint::interval(p, t + eps, t + std::numbers::pi)});
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  return ConstraintExpr::any_of({Constraint::interval(p, -inf, t - eps), Constraint::interval(p, t + eps, inf)});
}

bool satisfied(const ConstraintExpr& expr, const Conformation& x, double tol) {
  if (!(tol > 0)) throw std::invalid_argument("satisfaction tolerance must be positive");
  return std::visit(
      [&](const auto& n) -> bool {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Constraint>) {
          return atom_violation(n, x) <= tol;
        } else if constexpr (std::is_same_v<T, AllOf>) {
          return std::all_of(n.children.begin(), n.children.end(), [&](const auto& c) { return satisfied(c, x, tol); });
        } else if constexpr (std::is_same_v<T, AnyOf>) {
          return std::any_of(n.children.begin(), n.children.end(), [&](const auto& c) { return satisfied(c, x, tol); });
        } else {
          return satisfied(lower_not(n), x, tol);
        }
      },
      expr.node());
}

bool satisfied(const std::vector<ConstraintExpr>& exprs, const Conformation& x, double tol) {
  return std::all_of(exprs.begin(), exprs.end(), [&](const auto& e) { return satisfied(e, x, tol); });
}

void ConstraintSchedule::validate() const {
  if (!(initial_widen >= 1.0)) throw ConstraintError("initial_widen must be >= 1");
  if (!(exact_half_width >= 0.0)) throw ConstraintError("exact_half_width must be >= 0");
  if (total_steps < 1) throw ConstraintError("schedule needs at least one step");
}

Constraint schedule_at(const ConstraintSchedule& s, const Constraint& c, int step) {
  s.validate();
  if (step < 0 || step > s.total_steps) throw std::out_of_range("schedule step out of range");
  if (step == s.total_steps) return c;

  const double remaining = 1.0 - static_cast<double>(step) / s.total_steps;
  const double relax = s.exact_half_width * remaining;
  const Primitive& p = c.primitive();

  if (const auto* e = std::get_if<Exact>(&c.bound())) {
    if (relax == 0.0) return c;
    return Constraint::interval(p, e->target - relax, e->target + relax);
  }

  const auto& iv = std::get<Interval>(c.bound());
  const bool finite_lower = std::isfinite(iv.lower);
  const bool finite_upper = std::isfinite(iv.upper);
  if (finite_lower && finite_upper) {
    const double center = 0.5 * (iv.lower + iv.upper);
    const double half = 0.5 * (iv.upper - iv.lower);
    double widened = half * (1.0 + (s.initial_widen - 1.0) * remaining);
    if (p.kind == ConstraintKind::dihedral) widened = std::min(widened, std::numbers::pi);
    return Constraint::interval(p, center - widened, center + widened);
  }
  return Constraint::interval(p, finite_lower ? iv.lower - relax : iv.lower, finite_upper ? iv.upper + relax : iv.upper);
}

ConstraintExpr schedule_at(const ConstraintSchedule& s, const ConstraintExpr& expr, int step) {
  return std::visit(
      [&](const auto& n) -> ConstraintExpr {
        using T = std::decay_t<decltype(n)>;
        if constexpr (std::is_same_v<T, Constraint>) {
          return schedule_at(s, n, step);
        } else if constexpr (std::is_same_v<T, Negation>) {
          return schedule_at(s, lower_not(n), step);
        } else {
          std::vector<ConstraintExpr> kids;
          kids.reserve(n.children.size());
          for (const auto& c : n.children) kids.push_back(schedule_at(s, c, step));
          return std::is_same_v<T, AllOf> ? ConstraintExpr::all_of(std::move(kids))
                                          : ConstraintExpr::any_of(std::move(kids));
        }
      },
      expr.node());
}

std::vector<ConstraintExpr> schedule_at(const ConstraintSchedule& s, const std::vector<ConstraintExpr>& exprs,
                                        int step) {
  std::vector<ConstraintExpr> out;
  out.reserve(exprs.size());
  for (const auto& e : exprs) out.push_back(schedule_at(s, e, step));
  return out;
}

std::vector<Constraint> sample_constraints(const Conformation& x, std::mt19937_64& rng, CountRange count) {
  const std::size_t n = x.size();
  if (n < 2) throw ConstraintError("sampling constraints needs at least two particles");
  if (count.min < 0 || count.max < count.min) throw ConstraintError("invalid constraint count range");

  std::vector<ConstraintKind> pool{ConstraintKind::distance};
  if (n >= 3) pool.push_back(ConstraintKind::angle);
  if (n >= 4) pool.push_back(ConstraintKind::dihedral);

  std::uniform_int_distribution<int> count_dist(count.min, count.max);
  std::uniform_int_distribution<std::size_t> kind_dist(0, pool.size() - 1);
  std::vector<std::size_t> order(n);

  const int m = count_dist(rng);
  std::vector<Constraint> out;
  out.reserve(static_cast<std::size_t>(m));
  for (int drawn = 0; drawn < m; ++drawn) {
    const ConstraintKind kind = pool[kind_dist(rng)];
    for (int attempt = 0;; ++attempt) {
      // partial Fisher-Yates for a distinct index tuple
      std::iota(order.begin(), order.end(), std::size_t{0});
      Primitive p{kind, {}};
      for (std::size_t a = 0; a < arity(kind); ++a) {
        std::uniform_int_distribution<std::size_t> pick(a, n - 1);
        std::swap(order[a], order[pick(rng)]);
        p.indices[a] = order[a];
      }
      try {
        residual_gradient(p, x);
        out.push_back(Constraint::exact(p, observable(p, x)));
        break;
      } catch (const DegeneracyError&) {
        if (attempt >= 100) throw;
      }
    }
  }
  return out;
}

}  // namespace shakediff
