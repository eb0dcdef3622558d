#include "shakediff/harness/commands.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "shakediff/harness/xyz.hpp"

namespace shakediff::harness {

namespace fs = std::filesystem;

namespace {

bool well_separated(const Primitive& p, const Conformation& x) {
  const auto v = [&](std::size_t a) { return x.position(p.indices[a]); };
  const auto sine = [](const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
    return a.cross(b).norm() / (a.norm() * b.norm());
  };
  switch (p.kind) {
    case ConstraintKind::distance: return (v(0) - v(1)).norm() > 0.3;
    case ConstraintKind::angle: {
      const Eigen::Vector3d u = v(0) - v(1), w = v(2) - v(1);
      return u.norm() > 0.3 && w.norm() > 0.3 && sine(u, w) > 0.2;
    }
    case ConstraintKind::dihedral: {
      const Eigen::Vector3d b1 = v(1) - v(0), b2 = v(2) - v(1), b3 = v(3) - v(2);
      return b1.norm() > 0.3 && b2.norm() > 0.3 && b3.norm() > 0.3 && sine(b1, b2) > 0.2 && sine(b2, b3) > 0.2;
    }
  }
  return false;
}

std::size_t id_width(std::size_t batch) {
  std::size_t digits = 1;
  for (std::size_t v = batch > 0 ? batch - 1 : 0; v >= 10; v /= 10) ++digits;
  return std::max<std::size_t>(digits, 4);
}

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::usage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::io;
  } catch (const XyzError& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::data;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::io;
  }
}

}  // namespace

GradcheckResult gradcheck(int trials, std::uint64_t seed, const GradientFunction& gradient) {
  if (trials < 1) throw std::invalid_argument("gradcheck needs at least one trial");
  GradcheckResult result;
  result.trials = trials;
  for (ConstraintKind kind : {ConstraintKind::distance, ConstraintKind::angle, ConstraintKind::dihedral}) {
    const auto k = static_cast<std::size_t>(kind);
    std::mt19937_64 rng(derive_seed(seed, k));
    std::normal_distribution<double> normal;
    const Primitive p{kind, {0, 1, 2, 3}};
    const auto n = static_cast<Eigen::Index>(arity(kind));
    for (int done = 0; done < trials;) {
      Positions pos(n, 3);
      for (Eigen::Index i = 0; i < pos.size(); ++i) pos.data()[i] = normal(rng);
      const Conformation x(std::move(pos));
      if (!well_separated(p, x)) continue;
      const Eigen::VectorXd analytic = gradient(p, x);
      const Eigen::VectorXd numeric = finite_difference_gradient(p, x, observable(p, x), kGradcheckStep);
      const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-300});
      const double err = analytic.size() == numeric.size() ? (analytic - numeric).cwiseAbs().maxCoeff() / scale
                                                           : std::numeric_limits<double>::infinity();
      result.max_error[k] = std::max(result.max_error[k], std::isnan(err) ? std::numeric_limits<double>::infinity() : err);
      ++done;
    }
  }
  result.passed = std::all_of(result.max_error.begin(), result.max_error.end(),
                              [](double e) { return e < kGradcheckTolerance; });
  return result;
}

int gradcheck_command(int trials, std::uint64_t seed, bool quiet, std::ostream& out, std::ostream& err,
                      const GradientFunction& gradient) {
  if (trials < 1) {
    err << "error: --trials must be at least 1\n";
    return exit_code::usage;
  }
  const GradcheckResult r = gradcheck(trials, seed, gradient);
  if (!quiet) {
    std::string buf = fmt::format("{:<10} {:>7} {:>14}\n", "kind", "trials", "max_rel_error");
    for (ConstraintKind kind : {ConstraintKind::distance, ConstraintKind::angle, ConstraintKind::dihedral})
      buf += fmt::format("{:<10} {:>7} {:>14.3e}\n", to_string(kind), trials, r.max_error[static_cast<std::size_t>(kind)]);
    buf += fmt::format("{} (tolerance {:g})\n", r.passed ? "PASS" : "FAIL", kGradcheckTolerance);
    out << buf;
  }
  return r.passed ? exit_code::ok : exit_code::failure;
}

BatchResult run_batch(const ExperimentConfig& config, unsigned threads) {
  BatchResult batch;
  batch.samples.resize(config.batch);
  batch.rows.resize(config.batch);
  if (config.batch == 0) return batch;

  const SamplerConfig sampler = config.sampler();
  const Denoiser denoiser = config.make_denoiser();
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  const auto worker = [&] {
    for (std::size_t i = next++; i < config.batch; i = next++) {
      try {
        const auto start = std::chrono::steady_clock::now();
        std::mt19937_64 rng(derive_seed(config.seed, i));
        batch.samples[i] = reverse_sample(config.particles, config.constraints, denoiser, sampler, rng);
        const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        batch.rows[i] = summarize(i, batch.samples[i], config.constraints, config.validate_tolerance, ms);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = config.batch;
      }
    }
  };

  const unsigned n = std::min<std::size_t>(resolve_threads(threads), config.batch);
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  for (const auto& s : batch.samples) batch.valid += s.valid ? 1 : 0;
  return batch;
}

std::vector<fs::path> write_batch(const ExperimentConfig& config, const BatchResult& batch, const fs::path& dir) {
  fs::create_directories(dir);
  std::vector<fs::path> written;
  const std::size_t width = id_width(config.batch);
  for (std::size_t i = 0; i < batch.samples.size(); ++i) {
    if (!batch.samples[i].valid) continue;
    const fs::path path = dir / fmt::format("{}_{:0{}}.xyz", config.output.prefix, i, width);
    write_xyz_file(path, batch.samples[i].conformation,
                   fmt::format("sample_id={} seed={} particles={}", i, config.seed, config.particles));
    written.push_back(path);
  }
  write_metrics_file(dir / config.output.metrics, batch.rows, config.constraints.size());
  return written;
}

namespace {

void apply(ExperimentConfig& cfg, const RunOptions& options) {
  if (options.seed) cfg.seed = *options.seed;
  if (options.out_dir) cfg.output.dir = *options.out_dir;
  if (options.threads) cfg.threads = *options.threads;
}

}  // namespace

int sample_command(const fs::path& config_path, const RunOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = load_config(config_path);
    apply(cfg, options);
    const BatchResult batch = run_batch(cfg, cfg.threads);
    write_batch(cfg, batch, cfg.output.dir);
    if (options.timings) write_timings_file(*options.timings, batch.rows);

    const double fraction = cfg.batch == 0 ? 1.0 : static_cast<double>(batch.valid) / static_cast<double>(cfg.batch);
    if (!options.quiet)
      out << fmt::format("{} of {} samples valid ({:.3f}); outputs in {}\n", batch.valid, cfg.batch, fraction,
                         cfg.output.dir);
    return fraction >= cfg.min_valid_fraction ? exit_code::ok : exit_code::failure;
  });
}

int validate_command(const std::vector<fs::path>& xyz_paths, const fs::path& config_path, bool quiet,
                     std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ExperimentConfig cfg = load_config(config_path);
    struct Loaded {
      fs::path path;
      std::vector<XyzFrame> frames;
    };
    std::vector<Loaded> files;
    for (const auto& p : xyz_paths) {
      files.push_back({p, read_xyz_file(p)});
      for (std::size_t f = 0; f < files.back().frames.size(); ++f) {
        const std::size_t n = files.back().frames[f].conformation.size();
        if (n != cfg.particles) {
          err << fmt::format("error: {} frame {} has {} particles, config expects {}\n", p.string(), f, n, cfg.particles);
          return exit_code::data;
        }
      }
    }

    const std::size_t m = cfg.constraints.size();
    std::vector<double> worst(m, 0.0);
    std::vector<std::size_t> violated(m, 0);
    std::size_t frames = 0;
    std::string listing;
    for (const auto& file : files) {
      for (std::size_t f = 0; f < file.frames.size(); ++f, ++frames) {
        const Conformation& x = file.frames[f].conformation;
        for (std::size_t c = 0; c < m; ++c) {
          double v;
          try {
            v = violation(cfg.constraints[c], x);
          } catch (const GeometryError&) {
            v = std::numeric_limits<double>::infinity();
          }
          worst[c] = std::max(worst[c], v);
          if (!(v <= cfg.validate_tolerance)) {
            ++violated[c];
            listing += fmt::format("violated: c{} {} in {} frame {} (violation {:.3e})\n", c,
                                   cfg.constraints[c].describe(), file.path.string(), f, v);
          }
        }
      }
    }

    const bool ok = listing.empty();
    if (!quiet) {
      std::string buf;
      for (std::size_t c = 0; c < m; ++c)
        buf += fmt::format("c{} {}: max violation {:.3e}, violated in {}/{} frames\n", c, cfg.constraints[c].describe(),
                           worst[c], violated[c], frames);
      out << buf;
    }
    out << listing;
    if (!quiet) out << fmt::format("{}: {} frames, tolerance {:g}\n", ok ? "PASS" : "FAIL", frames, cfg.validate_tolerance);
    return ok ? exit_code::ok : exit_code::failure;
  });
}

ExperimentConfig ring_demo_config(const RingDemoOptions& demo, std::uint64_t seed) {
  if (demo.n < 3) throw ConfigError("ring-demo needs n >= 3");
  if (demo.steps < 1) throw ConfigError("ring-demo needs at least one step");
  ExperimentConfig cfg;
  cfg.particles = demo.n;
  cfg.batch = demo.batch;
  cfg.seed = seed;
  cfg.schedule.steps = demo.steps;
  cfg.output.dir = "ring_demo";
  cfg.output.prefix = "ring";
  const double lower = 1.3 - 0.1, upper = 1.5 + 0.1;
  for (std::size_t i = 0; i < demo.n; ++i) {
    const bool forced = demo.infeasible && i == 0;
    cfg.constraints.emplace_back(
        Constraint::interval(Primitive::distance(i, (i + 1) % demo.n), forced ? 10.0 : lower, forced ? 11.0 : upper));
  }
  // a cross-ring contact at 0.5 next to a 10 A edge breaks the triangle inequality
  if (demo.infeasible) cfg.constraints.emplace_back(Constraint::exact(Primitive::distance(1, demo.n - 1), 0.5));
  return cfg;
}

int ring_demo_command(const RingDemoOptions& demo, const RunOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = ring_demo_config(demo, options.seed.value_or(7));
    apply(cfg, options);
    const BatchResult batch = run_batch(cfg, cfg.threads);
    const fs::path dir = cfg.output.dir;
    write_batch(cfg, batch, dir);
    {
      std::ofstream cfg_out(dir / "config.json", std::ios::binary | std::ios::trunc);
      ExperimentConfig portable = cfg;
      portable.output.dir = ".";
      portable.threads = 0;
      cfg_out << config_to_json(portable);
      if (!cfg_out) throw IoError(fmt::format("cannot write '{}'", (dir / "config.json").string()));
    }
    if (options.timings) write_timings_file(*options.timings, batch.rows);

    std::size_t all_ok = 0, emitted_ok = 0;
    for (std::size_t i = 0; i < batch.rows.size(); ++i) {
      const auto& flags = batch.rows[i].satisfied;
      const bool ok = std::all_of(flags.begin(), flags.end(), [](bool b) { return b; });
      all_ok += ok ? 1 : 0;
      emitted_ok += ok && batch.samples[i].valid ? 1 : 0;
    }
    const double total = std::max<double>(1.0, static_cast<double>(cfg.batch));
    const double valid_fraction = cfg.batch == 0 ? 1.0 : static_cast<double>(batch.valid) / total;
    if (!options.quiet) {
      out << fmt::format("ring n={} samples={} steps={} seed={}\n", cfg.particles, cfg.batch, cfg.schedule.steps, cfg.seed);
      out << fmt::format("flagged: {} ({:.3f})\n", cfg.batch - batch.valid, 1.0 - valid_fraction);
      out << fmt::format("all ring constraints satisfied: {}/{} samples ({:.3f})\n", all_ok, cfg.batch,
                         static_cast<double>(all_ok) / total);
      out << fmt::format("non-flagged samples satisfying all constraints: {}/{}\n", emitted_ok, batch.valid);
    }
    const bool ok = emitted_ok == batch.valid && valid_fraction >= cfg.min_valid_fraction;
    return ok ? exit_code::ok : exit_code::failure;
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Constraint-projected diffusion sampling"};
  app.require_subcommand(1);
  app.fallthrough();

  RunOptions options;
  std::uint64_t seed = 0;
  std::string out_dir;
  unsigned threads = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (u64)");
  auto* dir_opt = app.add_option("--out-dir", out_dir, "Output directory");
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads (0: all cores)");
  app.add_flag("-q,--quiet", options.quiet, "Only print errors and violations");

  auto* sample = app.add_subcommand("sample", "Generate a batch from a config file");
  std::string config_path;
  std::string timings;
  sample->add_option("config", config_path, "Config file")->required();
  auto* timings_opt = sample->add_option("--timings", timings, "Write per-sample wall time to this CSV");

  auto* validate = app.add_subcommand("validate", "Check XYZ files against a config: validate <xyz>... <config>");
  std::vector<std::string> validate_args;
  validate->add_option("files", validate_args, "XYZ files followed by the config file")->required();

  auto* grad = app.add_subcommand("gradcheck", "Compare analytic and finite-difference gradients");
  int trials = 200;
  grad->add_option("--trials", trials, "Configurations per constraint kind")->capture_default_str();

  auto* ring = app.add_subcommand("ring-demo", "Cyclic distance-bounded generation");
  RingDemoOptions demo;
  ring->add_option("--n", demo.n, "Ring size")->capture_default_str();
  ring->add_option("--batch", demo.batch, "Samples")->capture_default_str();
  ring->add_option("--steps", demo.steps, "Diffusion steps")->capture_default_str();
  ring->add_flag("--infeasible", demo.infeasible, "Use a deliberately unsatisfiable constraint set");
  auto* ring_timings = ring->add_option("--timings", timings, "Write per-sample wall time to this CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::ok : exit_code::usage;
  }

  if (*seed_opt) options.seed = seed;
  if (*dir_opt) options.out_dir = out_dir;
  if (*threads_opt) options.threads = threads;
  if (*timings_opt || *ring_timings) options.timings = timings;

  if (sample->parsed()) return sample_command(config_path, options, out, err);
  if (validate->parsed()) {
    if (validate_args.size() < 2) {
      err << "error: validate needs at least one XYZ file and a config file\n";
      return exit_code::usage;
    }
    std::vector<fs::path> xyz(validate_args.begin(), validate_args.end() - 1);
    return validate_command(xyz, validate_args.back(), options.quiet, out, err);
  }
  if (grad->parsed())
    return gradcheck_command(trials, options.seed.value_or(0), options.quiet, out, err, residual_gradient);
  if (ring->parsed()) return ring_demo_command(demo, options, out, err);
  return exit_code::usage;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"shakediff"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace shakediff::harness
