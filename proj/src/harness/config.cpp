#include "shakediff/harness/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace shakediff::harness {

using json = nlohmann::json;

namespace {

class Reader {
public:
  explicit Reader(std::string source) : source_(std::move(source)) {}

  [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
    throw ConfigError(fmt::format("{}: at {}: {}", source_, path.empty() ? "/" : path, msg));
  }

  void keys(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) const {
    if (!j.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : j.items())
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) fail(path, fmt::format("unknown key '{}'", key));
  }

  double number(const json& j, const std::string& path) const {
    if (!j.is_number()) fail(path, "expected a number");
    return j.get<double>();
  }

  std::int64_t integer(const json& j, const std::string& path) const {
    if (j.is_number_unsigned()) {
      if (j.get<std::uint64_t>() > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
        fail(path, "integer out of range");
      return static_cast<std::int64_t>(j.get<std::uint64_t>());
    }
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<std::int64_t>();
  }

  std::size_t count(const json& j, const std::string& path) const {
    const auto v = integer(j, path);
    if (v < 0) fail(path, "expected a nonnegative integer");
    return static_cast<std::size_t>(v);
  }

  std::uint64_t seed(const json& j, const std::string& path) const {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
    fail(path, "expected a nonnegative integer seed");
  }

  std::string string(const json& j, const std::string& path) const {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
  }

  double bound(const json& j, const std::string& path, double infinite) const {
    if (j.is_null()) return infinite;
    return number(j, path);
  }

  Constraint atom(const json& j, const std::string& path) const {
    keys(j, path, {"type", "atoms", "exact", "interval"});
    if (!j.contains("type")) fail(path, "missing 'type'");
    if (!j.contains("atoms")) fail(path, "missing 'atoms'");
    const std::string type = string(j["type"], path + "/type");
    ConstraintKind kind;
    if (type == "distance") kind = ConstraintKind::distance;
    else if (type == "angle") kind = ConstraintKind::angle;
    else if (type == "dihedral") kind = ConstraintKind::dihedral;
    else fail(path + "/type", fmt::format("unknown constraint type '{}'", type));

    const json& atoms = j["atoms"];
    if (!atoms.is_array() || atoms.size() != arity(kind))
      fail(path + "/atoms", fmt::format("expected an array of {} particle indices", arity(kind)));
    Primitive p{kind, {0, 0, 0, 0}};
    for (std::size_t i = 0; i < atoms.size(); ++i) p.indices[i] = count(atoms[i], fmt::format("{}/atoms/{}", path, i));

    if (j.contains("exact") == j.contains("interval")) fail(path, "expected exactly one of 'exact' or 'interval'");
    try {
      if (j.contains("exact")) return Constraint::exact(p, number(j["exact"], path + "/exact"));
      const json& iv = j["interval"];
      if (!iv.is_array() || iv.size() != 2) fail(path + "/interval", "expected [lower, upper]");
      const double inf = std::numeric_limits<double>::infinity();
      return Constraint::interval(p, bound(iv[0], path + "/interval/0", -inf), bound(iv[1], path + "/interval/1", inf));
    } catch (const std::invalid_argument& e) {
      fail(path, e.what());
    }
  }

  ConstraintExpr expr(const json& j, const std::string& path) const {
    if (!j.is_object()) fail(path, "expected a constraint object");
    for (const char* op : {"all_of", "any_of"}) {
      if (!j.contains(op)) continue;
      keys(j, path, {op});
      const json& children = j[op];
      if (!children.is_array()) fail(path + "/" + op, "expected an array");
      std::vector<ConstraintExpr> parsed;
      for (std::size_t i = 0; i < children.size(); ++i)
        parsed.push_back(expr(children[i], fmt::format("{}/{}/{}", path, op, i)));
      try {
        return std::string_view(op) == "all_of" ? ConstraintExpr::all_of(std::move(parsed))
                                                : ConstraintExpr::any_of(std::move(parsed));
      } catch (const std::invalid_argument& e) {
        fail(path, e.what());
      }
    }
    if (j.contains("not")) {
      keys(j, path, {"not", "epsilon"});
      if (!j.contains("epsilon")) fail(path, "missing 'epsilon'");
      Constraint inner = atom(j["not"], path + "/not");
      const double eps = number(j["epsilon"], path + "/epsilon");
      try {
        return ConstraintExpr::negate(std::move(inner), eps);
      } catch (const std::invalid_argument& e) {
        fail(path, e.what());
      }
    }
    return atom(j, path);
  }

private:
  std::string source_;
};

std::pair<std::size_t, std::size_t> line_column(std::string_view text, std::size_t offset) {
  offset = std::min(offset, text.size());
  std::size_t line = 1, column = 1;
  for (std::size_t i = 0; i < offset; ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

json atom_json(const Constraint& c) {
  const double inf = std::numeric_limits<double>::infinity();
  json j;
  j["type"] = to_string(c.primitive().kind);
  j["atoms"] = json::array();
  for (std::size_t i = 0; i < arity(c.primitive().kind); ++i) j["atoms"].push_back(c.primitive().indices[i]);
  if (const auto* e = std::get_if<Exact>(&c.bound())) {
    j["exact"] = e->target;
  } else {
    const auto& iv = std::get<Interval>(c.bound());
    j["interval"] = json::array({iv.lower == -inf ? json(nullptr) : json(iv.lower),
                                 iv.upper == inf ? json(nullptr) : json(iv.upper)});
  }
  return j;
}

json expr_json(const ConstraintExpr& e) {
  return std::visit(
      [](const auto& node) -> json {
        using T = std::decay_t<decltype(node)>;
        if constexpr (std::is_same_v<T, Constraint>) {
          return atom_json(node);
        } else if constexpr (std::is_same_v<T, Negation>) {
          return {{"not", atom_json(*node.child->atom())}, {"epsilon", node.epsilon}};
        } else {
          json children = json::array();
          for (const auto& c : node.children) children.push_back(expr_json(c));
          return {{std::is_same_v<T, AllOf> ? "all_of" : "any_of", children}};
        }
      },
      e.node());
}

}  // namespace

SamplerConfig ExperimentConfig::sampler() const {
  SamplerConfig s;
  s.schedule = NoiseSchedule::polynomial(schedule.steps, schedule.precision, schedule.power);
  s.shake = shake;
  s.constraint_schedule = constraint_schedule;
  s.constraint_schedule.total_steps = schedule.steps;
  s.diffusion_constant = diffusion_constant;
  s.seed = seed;
  s.max_failed_step_fraction = max_failed_step_fraction;
  s.feature_dim = feature_dim;
  return s;
}

Denoiser ExperimentConfig::make_denoiser() const {
  const NoiseSchedule s = NoiseSchedule::polynomial(schedule.steps, schedule.precision, schedule.power);
  if (denoiser.kind == DenoiserSpec::Kind::gaussian_mixture) return analytic_denoiser(denoiser.mixture, s);
  return analytic_denoiser(IsotropicGaussian{}, s);
}

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    const auto [line, column] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    std::string msg = e.what();
    if (const auto pos = msg.rfind(": "); pos != std::string::npos) msg = msg.substr(pos + 2);
    throw ConfigError(fmt::format("{}:{}:{}: parse error: {}", source, line, column, msg));
  }

  const Reader r(source);
  r.keys(root, "",
         {"particles", "constraints", "schedule", "constraint_schedule", "shake", "denoiser", "sampler", "batch", "seed",
          "min_valid_fraction", "validate_tolerance", "threads", "output"});

  ExperimentConfig cfg;
  if (!root.contains("particles")) r.fail("", "missing 'particles'");
  cfg.particles = r.count(root["particles"], "/particles");
  if (cfg.particles < 1) r.fail("/particles", "need at least one particle");

  if (root.contains("constraints")) {
    const json& list = root["constraints"];
    if (!list.is_array()) r.fail("/constraints", "expected an array");
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string path = fmt::format("/constraints/{}", i);
      ConstraintExpr e = r.expr(list[i], path);
      try {
        e.validate(cfg.particles);
      } catch (const std::exception& ex) {
        r.fail(path, ex.what());
      }
      cfg.constraints.push_back(std::move(e));
    }
  }

  if (root.contains("schedule")) {
    const json& s = root["schedule"];
    r.keys(s, "/schedule", {"steps", "precision", "power"});
    if (s.contains("steps")) cfg.schedule.steps = static_cast<int>(r.integer(s["steps"], "/schedule/steps"));
    if (s.contains("precision")) cfg.schedule.precision = r.number(s["precision"], "/schedule/precision");
    if (s.contains("power")) cfg.schedule.power = r.number(s["power"], "/schedule/power");
  }

  if (root.contains("constraint_schedule")) {
    const json& s = root["constraint_schedule"];
    r.keys(s, "/constraint_schedule", {"initial_widen", "exact_half_width"});
    if (s.contains("initial_widen"))
      cfg.constraint_schedule.initial_widen = r.number(s["initial_widen"], "/constraint_schedule/initial_widen");
    if (s.contains("exact_half_width"))
      cfg.constraint_schedule.exact_half_width = r.number(s["exact_half_width"], "/constraint_schedule/exact_half_width");
  }

  if (root.contains("shake")) {
    const json& s = root["shake"];
    r.keys(s, "/shake", {"tolerance", "max_iterations", "solver", "regularization"});
    if (s.contains("tolerance")) cfg.shake.tolerance = r.number(s["tolerance"], "/shake/tolerance");
    if (s.contains("max_iterations"))
      cfg.shake.max_iterations = static_cast<int>(r.integer(s["max_iterations"], "/shake/max_iterations"));
    if (s.contains("regularization")) cfg.shake.regularization = r.number(s["regularization"], "/shake/regularization");
    if (s.contains("solver")) {
      const std::string solver = r.string(s["solver"], "/shake/solver");
      if (solver == "full_linear") cfg.shake.solver = ShakeSolver::full_linear;
      else if (solver == "gauss_seidel") cfg.shake.solver = ShakeSolver::gauss_seidel;
      else r.fail("/shake/solver", fmt::format("unknown solver '{}'", solver));
    }
  }

  if (root.contains("denoiser")) {
    const json& d = root["denoiser"];
    r.keys(d, "/denoiser", {"kind", "components"});
    const std::string kind = d.contains("kind") ? r.string(d["kind"], "/denoiser/kind") : "isotropic_gaussian";
    if (kind == "isotropic_gaussian") {
      if (d.contains("components")) r.fail("/denoiser/components", "only valid for gaussian_mixture");
    } else if (kind == "gaussian_mixture") {
      cfg.denoiser.kind = DenoiserSpec::Kind::gaussian_mixture;
      if (!d.contains("components") || !d["components"].is_array())
        r.fail("/denoiser", "gaussian_mixture needs a 'components' array");
      const json& comps = d["components"];
      for (std::size_t k = 0; k < comps.size(); ++k) {
        const std::string path = fmt::format("/denoiser/components/{}", k);
        r.keys(comps[k], path, {"weight", "mean", "scale"});
        GaussianMixture::Component c;
        if (comps[k].contains("weight")) c.weight = r.number(comps[k]["weight"], path + "/weight");
        if (comps[k].contains("scale")) c.scale = r.number(comps[k]["scale"], path + "/scale");
        if (!comps[k].contains("mean") || !comps[k]["mean"].is_array()) r.fail(path, "missing 'mean' array");
        const json& mean = comps[k]["mean"];
        if (mean.size() != 3 * cfg.particles) r.fail(path + "/mean", fmt::format("expected {} entries", 3 * cfg.particles));
        c.mean.resize(static_cast<Eigen::Index>(mean.size()));
        for (std::size_t i = 0; i < mean.size(); ++i)
          c.mean(static_cast<Eigen::Index>(i)) = r.number(mean[i], fmt::format("{}/mean/{}", path, i));
        cfg.denoiser.mixture.components.push_back(std::move(c));
      }
    } else {
      r.fail("/denoiser/kind", fmt::format("unknown denoiser '{}'", kind));
    }
  }

  if (root.contains("sampler")) {
    const json& s = root["sampler"];
    r.keys(s, "/sampler", {"diffusion_constant", "max_failed_step_fraction", "feature_dim"});
    if (s.contains("diffusion_constant")) cfg.diffusion_constant = r.number(s["diffusion_constant"], "/sampler/diffusion_constant");
    if (s.contains("max_failed_step_fraction"))
      cfg.max_failed_step_fraction = r.number(s["max_failed_step_fraction"], "/sampler/max_failed_step_fraction");
    if (s.contains("feature_dim")) cfg.feature_dim = r.count(s["feature_dim"], "/sampler/feature_dim");
  }

  if (root.contains("batch")) cfg.batch = r.count(root["batch"], "/batch");
  if (root.contains("seed")) cfg.seed = r.seed(root["seed"], "/seed");
  if (root.contains("min_valid_fraction")) {
    cfg.min_valid_fraction = r.number(root["min_valid_fraction"], "/min_valid_fraction");
    if (!(cfg.min_valid_fraction >= 0 && cfg.min_valid_fraction <= 1)) r.fail("/min_valid_fraction", "must lie in [0, 1]");
  }
  if (root.contains("validate_tolerance")) {
    cfg.validate_tolerance = r.number(root["validate_tolerance"], "/validate_tolerance");
    if (!(cfg.validate_tolerance > 0)) r.fail("/validate_tolerance", "must be positive");
  }
  if (root.contains("threads")) cfg.threads = static_cast<unsigned>(r.count(root["threads"], "/threads"));

  if (root.contains("output")) {
    const json& o = root["output"];
    r.keys(o, "/output", {"dir", "prefix", "metrics"});
    if (o.contains("dir")) cfg.output.dir = r.string(o["dir"], "/output/dir");
    if (o.contains("prefix")) cfg.output.prefix = r.string(o["prefix"], "/output/prefix");
    if (o.contains("metrics")) cfg.output.metrics = r.string(o["metrics"], "/output/metrics");
    if (cfg.output.prefix.empty() || cfg.output.prefix.find('/') != std::string::npos)
      r.fail("/output/prefix", "must be a non-empty file name prefix");
  }

  try {
    cfg.sampler().validate();
    cfg.make_denoiser();
  } catch (const std::invalid_argument& e) {
    r.fail("", e.what());
  }
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot read config '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError(fmt::format("error while reading '{}'", path.string()));
  return parse_config(buf.str(), path.string());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["particles"] = cfg.particles;
  j["constraints"] = json::array();
  for (const auto& e : cfg.constraints) j["constraints"].push_back(expr_json(e));
  j["schedule"] = {{"steps", cfg.schedule.steps}, {"precision", cfg.schedule.precision}, {"power", cfg.schedule.power}};
  j["constraint_schedule"] = {{"initial_widen", cfg.constraint_schedule.initial_widen},
                              {"exact_half_width", cfg.constraint_schedule.exact_half_width}};
  j["shake"] = {{"tolerance", cfg.shake.tolerance},
                {"max_iterations", cfg.shake.max_iterations},
                {"solver", cfg.shake.solver == ShakeSolver::full_linear ? "full_linear" : "gauss_seidel"},
                {"regularization", cfg.shake.regularization}};
  if (cfg.denoiser.kind == DenoiserSpec::Kind::isotropic_gaussian) {
    j["denoiser"] = {{"kind", "isotropic_gaussian"}};
  } else {
    json comps = json::array();
    for (const auto& c : cfg.denoiser.mixture.components)
      comps.push_back({{"weight", c.weight}, {"mean", std::vector<double>(c.mean.begin(), c.mean.end())}, {"scale", c.scale}});
    j["denoiser"] = {{"kind", "gaussian_mixture"}, {"components", comps}};
  }
  j["sampler"] = {{"diffusion_constant", cfg.diffusion_constant},
                  {"max_failed_step_fraction", cfg.max_failed_step_fraction},
                  {"feature_dim", cfg.feature_dim}};
  j["batch"] = cfg.batch;
  j["seed"] = cfg.seed;
  j["min_valid_fraction"] = cfg.min_valid_fraction;
  j["validate_tolerance"] = cfg.validate_tolerance;
  j["threads"] = cfg.threads;
  j["output"] = {{"dir", cfg.output.dir}, {"prefix", cfg.output.prefix}, {"metrics", cfg.output.metrics}};
  return j.dump(2) + "\n";
}

}  // namespace shakediff::harness
