#include "app.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "epd/io.hpp"
#include "epd/metrics.hpp"
#include "epd/phantom.hpp"
#include "epd/spectral.hpp"
#include "epd/theory.hpp"

namespace epd::app {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>>& allowed_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"geometry", {"domain_extent", "n_bins", "detector_half_width", "views_per_spectrum", "angular_gap"}},
      {"model", {"spectra", "materials", "energies"}},
      {"phantom", {"ellipses", "n_side"}},
      {"solver",
       {"scheme", "tau", "sigma_k", "sigma_a", "theta", "lambda", "max_iters", "log_every", "termination", "force"}},
      {"noise", {"snr_db", "seed"}},
      {"output", {"directory", "formats", "energy_images", "timing"}},
      {"verify", {"rho_f", "rho_u", "rho_v", "kappa", "s", "samples", "trials"}},
  };
  return keys;
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& key) const {
    const auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  std::string string(const std::string& key) const {
    auto v = raw(key);
    if (!v || v->empty()) throw ConfigError("config field '" + key + "' is required");
    return *v;
  }

  std::optional<double> real(const std::string& key) const {
    const auto v = raw(key);
    if (!v) return std::nullopt;
    return parse_real(key, *v);
  }

  std::optional<long long> integer(const std::string& key) const {
    const auto v = raw(key);
    if (!v) return std::nullopt;
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
    if (ec != std::errc() || ptr != v->data() + v->size()) {
      throw ConfigError("config field '" + key + "': expected an integer, got '" + *v + "'");
    }
    return out;
  }

  std::optional<bool> boolean(const std::string& key) const {
    const auto v = raw(key);
    if (!v) return std::nullopt;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw ConfigError("config field '" + key + "': expected true or false, got '" + *v + "'");
  }

  /// A number, "inf", or "pi/N".
  static double parse_real(const std::string& key, const std::string& v) {
    if (v == "inf") return std::numeric_limits<double>::infinity();
    if (v.rfind("pi/", 0) == 0) {
      const double d = parse_real(key, v.substr(3));
      if (!(d > 0.0)) throw ConfigError("config field '" + key + "': bad divisor in '" + v + "'");
      return std::numbers::pi / d;
    }
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
      throw ConfigError("config field '" + key + "': expected a number, got '" + v + "'");
    }
    return out;
  }

 private:
  const pt::ptree& tree_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

fs::path existing(const fs::path& p, const std::string& key) {
  if (!fs::exists(p)) throw ConfigError("config field '" + key + "': file not found: " + p.string());
  return p;
}

struct Problem {
  SpectralForwardOp op;
  std::vector<EllipseSpec> ellipses;
  Index n_side = 0;
};

Problem build_problem(const RunConfig& cfg) {
  const SystemMatrix a = build_parallel_projector(cfg.geometry);
  std::string warnings;
  SpectralModel model = load_spectral_model(cfg.spectra_csv.string(), cfg.materials_csv.string(),
                                            SpectralModel::dual_assignment(cfg.geometry), &warnings);
  if (!warnings.empty()) std::cerr << "warning: " << warnings << '\n';
  if (model.n_spectra() != 2) {
    throw ConfigError("config field 'model.spectra': expected two spectra (low and high views), got " +
                      std::to_string(model.n_spectra()));
  }
  std::vector<EllipseSpec> ellipses = load_ellipses(cfg.ellipses_csv.string());
  for (const auto& e : ellipses) {
    if (static_cast<Index>(e.values.size()) != model.n_materials()) {
      throw ConfigError("config field 'phantom.ellipses': ellipse value count does not match the " +
                        std::to_string(model.n_materials()) + " materials");
    }
  }
  return {SpectralForwardOp(a, std::move(model)), std::move(ellipses), cfg.geometry.n_side};
}

Vector phantom_truth(const Problem& p, const RunConfig& cfg) {
  return generate_phantom(p.ellipses, p.n_side, p.op.n_materials(), cfg.geometry.domain_extent);
}

std::string energy_tag(double e) {
  std::string s = io::format_double(e);
  std::replace(s.begin(), s.end(), '.', 'p');
  return s + "kev";
}

void write_image_set(const RunConfig& cfg, const Problem& p, const Vector& f, const std::string& stem,
                     CommandOutput& out) {
  const fs::path& dir = cfg.out_dir;
  io::write_raw_image((dir / (stem + ".f64")).string(), f, p.n_side, p.n_side, p.op.n_materials());
  out.files.push_back(stem + ".f64");
  out.files.push_back(stem + ".f64.txt");
  const Index n = p.op.n_pixels();
  if (cfg.write_pgm) {
    for (Index d = 0; d < p.op.n_materials(); ++d) {
      const std::string name = stem + "_material_" + std::to_string(d + 1) + ".pgm";
      io::write_pgm16((dir / name).string(), f.segment(d * n, n), p.n_side, p.n_side, 0.0, 1.0);
      out.files.push_back(name);
    }
  }
  if (cfg.energy_images && cfg.energies_csv) {
    const MaterialTable table = load_material_table(cfg.energies_csv->string());
    if (table.synthesis.cols() != p.op.n_materials()) {
      throw ConfigError("config field 'model.energies': material count does not match the model");
    }
    for (Index i = 0; i < table.energies_kev.size(); ++i) {
      const double e = table.energies_kev(i);
      const Vector img = synthesize_energy_image(f, table, e);
      const std::string base = stem + "_energy_" + energy_tag(e);
      io::write_raw_image((dir / (base + ".f64")).string(), img, p.n_side, p.n_side, 1);
      out.files.push_back(base + ".f64");
      out.files.push_back(base + ".f64.txt");
      if (cfg.write_pgm) {
        // window from zero to the brightest value a pixel of unit materials could reach
        const double hi = std::max(1e-12, table.synthesis.row(i).cwiseMax(0.0).sum());
        io::write_pgm16((dir / (base + ".pgm")).string(), img, p.n_side, p.n_side, 0.0, hi);
        out.files.push_back(base + ".pgm");
      }
    }
  }
}

Vector read_image_checked(const fs::path& path, const Problem& p) {
  if (!fs::exists(path)) throw ConfigError("missing artifact " + path.string() + " (run simulate first)");
  const io::RawImage img = io::read_raw_image(path.string());
  if (img.width != p.n_side || img.height != p.n_side || img.n_materials != p.op.n_materials()) {
    throw ConfigError("artifact " + path.string() + " does not match the configured image shape");
  }
  return img.data;
}

Vector read_sinogram(const RunConfig& cfg, const Problem& p) {
  const fs::path path = cfg.out_dir / "sinogram.f64";
  if (!fs::exists(path)) throw ConfigError("missing artifact " + path.string() + " (run simulate first)");
  Vector g = io::read_raw_vector(path.string());
  if (g.size() != p.op.n_rays()) {
    throw ConfigError("artifact " + path.string() + " has " + std::to_string(g.size()) + " rays, geometry has " +
                      std::to_string(p.op.n_rays()));
  }
  return g;
}

void write_certificate(const fs::path& path, const StepSizeCertificate& c) {
  VerificationReport r;
  r.add("tau", c.tau);
  r.add("sigma_k", c.sigma_k);
  r.add("sigma_a", c.sigma_a);
  r.add("c_k", c.c_k);
  r.add("c_k_source", c.c_k_source);
  r.add("norm_a", c.norm_a);
  r.add("kappa", c.kappa);
  r.add("s", c.s);
  r.add("margin_metric_k", c.margin_metric_k);
  r.add("margin_metric_a", c.margin_metric_a);
  r.add("holds_metric", c.holds_metric);
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  r.write(os);
}

}  // namespace

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  pt::ptree tree;
  try {
    pt::read_ini(path.string(), tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }
  for (const auto& [section, body] : tree) {
    const auto it = allowed_keys().find(section);
    if (it == allowed_keys().end()) throw ConfigError("config section '" + section + "' is not recognized");
    if (body.empty() && !body.data().empty()) throw ConfigError("config key '" + section + "' must sit in a section");
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) throw ConfigError("config field '" + section + "." + key + "' is not recognized");
    }
  }

  const Reader r(tree);
  const fs::path base = fs::absolute(path).parent_path();
  RunConfig cfg;

  const Index n_side = r.integer("phantom.n_side").value_or(32);
  const Index views = r.integer("geometry.views_per_spectrum").value_or(60);
  if (views < 1) throw ConfigError("config field 'geometry.views_per_spectrum' must be >= 1");
  const Index bins = r.integer("geometry.n_bins").value_or(181);
  const double gap = r.real("geometry.angular_gap").value_or(std::numbers::pi / 120.0);
  cfg.views_per_spectrum = views;
  cfg.geometry = GeometrySpec::dual_scan(n_side, bins, views, gap);
  cfg.geometry.domain_extent = r.real("geometry.domain_extent").value_or(5.0);
  cfg.geometry.detector_half_width = r.real("geometry.detector_half_width").value_or(7.05);
  try {
    cfg.geometry.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("config [geometry]/[phantom]: ") + e.what());
  }
  if (n_side < 8) throw ConfigError("config field 'phantom.n_side' must be >= 8");

  cfg.spectra_csv = existing(resolve(base, r.string("model.spectra")), "model.spectra");
  cfg.materials_csv = existing(resolve(base, r.string("model.materials")), "model.materials");
  if (auto e = r.raw("model.energies"); e && !e->empty()) {
    cfg.energies_csv = existing(resolve(base, *e), "model.energies");
  }
  cfg.ellipses_csv = existing(resolve(base, r.string("phantom.ellipses")), "phantom.ellipses");

  if (auto s = r.raw("solver.scheme")) {
    try {
      cfg.scheme = parse_scheme(*s);
    } catch (const DomainError&) {
      throw ConfigError("config field 'solver.scheme': unknown scheme '" + *s + "'");
    }
  }
  SolverConfig& sc = cfg.solver;
  sc.tau = r.real("solver.tau").value_or(sc.tau);
  sc.sigma_k = r.real("solver.sigma_k").value_or(sc.sigma_k);
  sc.sigma_a = r.real("solver.sigma_a").value_or(sc.sigma_a);
  sc.theta = r.real("solver.theta").value_or(sc.theta);
  sc.lambda = r.real("solver.lambda").value_or(sc.lambda);
  sc.max_iters = r.integer("solver.max_iters").value_or(sc.max_iters);
  sc.log_every = r.integer("solver.log_every").value_or(sc.log_every);
  sc.termination = r.real("solver.termination");
  sc.force = r.boolean("solver.force").value_or(false);
  try {
    sc.validate();
  } catch (const DomainError& e) {
    throw ConfigError(std::string("config [solver]: ") + e.what());
  }

  cfg.snr_db = r.real("noise.snr_db");
  if (cfg.snr_db && std::isnan(*cfg.snr_db)) throw ConfigError("config field 'noise.snr_db' is NaN");
  const long long seed = r.integer("noise.seed").value_or(0);
  if (seed < 0) throw ConfigError("config field 'noise.seed' must be >= 0");
  cfg.seed = static_cast<std::uint64_t>(seed);
  sc.seed = cfg.seed;

  cfg.out_dir = resolve(base, r.raw("output.directory").value_or("out"));
  if (auto formats = r.raw("output.formats")) {
    std::set<std::string> set;
    std::stringstream ss(*formats);
    for (std::string item; std::getline(ss, item, ',');) {
      item = trim(item);
      if (item != "raw" && item != "pgm") throw ConfigError("config field 'output.formats': unknown format '" + item + "'");
      set.insert(item);
    }
    if (!set.contains("raw")) throw ConfigError("config field 'output.formats' must include raw");
    cfg.write_pgm = set.contains("pgm");
  }
  cfg.energy_images = r.boolean("output.energy_images").value_or(true);
  cfg.timing = r.boolean("output.timing").value_or(false);

  VerifySettings& v = cfg.verify;
  v.rho_f = r.real("verify.rho_f");
  v.rho_u = r.real("verify.rho_u").value_or(v.rho_u);
  v.rho_v = r.real("verify.rho_v").value_or(v.rho_v);
  v.kappa = r.real("verify.kappa");
  v.s = r.real("verify.s");
  v.samples = static_cast<int>(r.integer("verify.samples").value_or(v.samples));
  v.trials = static_cast<int>(r.integer("verify.trials").value_or(v.trials));
  if (v.samples < 1 || v.trials < 1) throw ConfigError("config [verify]: samples and trials must be >= 1");
  return cfg;
}

void apply_overrides(RunConfig& cfg, const Overrides& o) {
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.solver.seed = *o.seed;
  }
  if (o.scheme) {
    try {
      cfg.scheme = parse_scheme(*o.scheme);
    } catch (const DomainError&) {
      throw ConfigError("--scheme: unknown scheme '" + *o.scheme + "'");
    }
  }
}

Manifest read_manifest(const fs::path& path) {
  Manifest m;
  std::ifstream is(path);
  if (!is) return m;
  for (std::string line; std::getline(is, line);) {
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw Error(path.string() + ": malformed line '" + line + "'");
    m[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  for (const auto& [k, v] : m) os << k << " = " << v << '\n';
}

CommandOutput cmd_simulate(const RunConfig& cfg) {
  const Problem p = build_problem(cfg);
  const Vector truth = phantom_truth(p, cfg);
  const Vector g = simulate_data(p.op, truth, cfg.snr_db, cfg.seed);

  CommandOutput out;
  write_image_set(cfg, p, truth, "truth", out);
  io::write_raw_vector((cfg.out_dir / "sinogram.f64").string(), g);
  out.files.push_back("sinogram.f64");

  const Vector clean = forward(p.op, truth);
  out.facts.emplace_back("n_rays", std::to_string(p.op.n_rays()));
  out.facts.emplace_back("n_pixels", std::to_string(p.op.n_pixels()));
  out.facts.emplace_back("n_materials", std::to_string(p.op.n_materials()));
  out.facts.emplace_back("seed", std::to_string(cfg.seed));
  out.facts.emplace_back("snr_db_measured", io::format_double(measure_snr_db(clean, g)));
  return out;
}

CommandOutput cmd_reconstruct(const RunConfig& cfg) {
  const Problem p = build_problem(cfg);
  const Vector g = read_sinogram(cfg, p);
  const fs::path truth_path = cfg.out_dir / "truth.f64";
  std::optional<Vector> truth;
  if (fs::exists(truth_path)) truth = read_image_checked(truth_path, p);

  const OperatorBundle ops(p.op, g);
  const StepSizeCertificate cert = validate_step_sizes(cfg.solver, ops);
  CommandOutput out;
  write_certificate(cfg.out_dir / "certificate.txt", cert);
  out.files.push_back("certificate.txt");

  RunOptions options;
  options.truth = truth ? &*truth : nullptr;
  options.certificate = &cert;
  options.record_wall_time = cfg.timing;
  options.observer = [](const SolverState&, const IterationReport& r) {
    std::cerr << "iter " << r.iter << "  RE " << io::format_double(r.re) << "  RD " << io::format_double(r.rd)
              << "  residual " << io::format_double(r.residual) << '\n';
  };
  const RunResult result = run(cfg.scheme, ops, cfg.solver, init_state(ops), options);

  {
    std::ofstream os(cfg.out_dir / "iterations.csv");
    if (!os) throw Error("cannot write iterations.csv");
    write_report_header(os);
    for (const auto& r : result.reports) write_report_row(os, r);
  }
  out.files.push_back("iterations.csv");
  write_image_set(cfg, p, result.state.f, "recon", out);

  out.facts.emplace_back("scheme", std::string(scheme_name(cfg.scheme)));
  out.facts.emplace_back("iterations", std::to_string(result.state.iter));
  out.facts.emplace_back("holds_metric", cert.holds_metric ? "true" : "false");
  if (!result.reports.empty()) {
    const IterationReport& last = result.reports.back();
    out.facts.emplace_back("final_re", io::format_double(last.re));
    out.facts.emplace_back("final_rd", io::format_double(last.rd));
    out.facts.emplace_back("final_rt", io::format_double(last.rt));
  }
  return out;
}

CommandOutput cmd_verify(const RunConfig& cfg) {
  const Problem p = build_problem(cfg);
  const Vector truth = phantom_truth(p, cfg);
  const OperatorBundle ops(p.op, forward(p.op, truth));
  const OperatorNorms norms = measure_norms(ops);
  const StepSizeCertificate base = validate_step_sizes(cfg.solver, ops, nullptr, &norms);

  const double c_r = constant_CR(p.op);
  const double rho_f = cfg.verify.rho_f.value_or(c_r > 0.0 ? 0.5 / c_r : 1.0);
  NeighborhoodParams params = make_neighborhood(p.op, norms.matrix, rho_f, cfg.verify.rho_u, cfg.verify.rho_v,
                                                cfg.verify.kappa.value_or(base.kappa), cfg.verify.s.value_or(base.s));
  const NonlinearityProbe probe = probe_nonlinearity(p.op, truth, Vector::Zero(p.op.n_rays()), params,
                                                     cfg.verify.trials, cfg.seed + 13);
  params.lambda_1 = probe.lambda_1_alone;
  params.refresh_derived();
  const StepSizeCertificate cert = validate_step_sizes(cfg.solver, ops, &params, &norms);

  VerificationReport r;
  r.add("scheme", std::string(scheme_name(cfg.scheme)));
  r.add("tau", cert.tau);
  r.add("sigma_k", cert.sigma_k);
  r.add("sigma_a", cert.sigma_a);
  r.add("lambda", cfg.solver.lambda);
  r.add("norm_a", cert.norm_a);
  r.add("matrix_norm", norms.matrix);
  r.add("c_k", cert.c_k);
  r.add("c_r", params.c_r);
  r.add("lipschitz_l", params.L);
  r.add("rho_f", params.rho_f);
  r.add("eta", params.eta);
  r.add("kappa", cert.kappa);
  r.add("s", cert.s);
  r.add("lambda_1", params.lambda_1);
  r.add("margin_metric_k", cert.margin_metric_k);
  r.add("margin_metric_a", cert.margin_metric_a);
  r.add("holds_metric", cert.holds_metric);
  r.add("margin_exact_local", *cert.margin_exact_local);
  r.add("holds_exact_local", *cert.holds_exact_local);
  r.add("margin_linearized_local", *cert.margin_linearized_local);
  r.add("holds_linearized_local", *cert.holds_linearized_local);
  r.add("margin_spectral", *cert.margin_spectral);
  r.add("holds_spectral", *cert.holds_spectral);

  // M(f) at the phantom and at random nonnegative points around it
  std::mt19937_64 rng(cfg.seed + 1);
  double min_eig = check_psd(assemble_M(truth, cfg.solver, ops)).min_eigenvalue;
  for (int i = 1; i < cfg.verify.samples; ++i) {
    const Vector f = sample_ball(truth, params.rho_f, rng, true);
    min_eig = std::min(min_eig, check_psd(assemble_M(f, cfg.solver, ops)).min_eigenvalue);
  }
  const bool psd = min_eig >= -1e-10;
  r.add("metric_min_eigenvalue", min_eig);
  r.add("metric_psd", psd);

  const BBlockCheck blocks = check_B_blocks(truth, cfg.solver, params, ops);
  r.add("m_minus_b1_min_eigenvalue", blocks.m_minus_b1.min_eigenvalue);
  r.add("b1_min_eigenvalue", blocks.b1.min_eigenvalue);
  r.add("m_minus_b2_min_eigenvalue", blocks.m_minus_b2.min_eigenvalue);
  r.add("b2_min_eigenvalue", blocks.b2.min_eigenvalue);

  const SampledBound remainder = verify_remainder_bound(p.op, truth, params.rho_f, cfg.verify.trials, cfg.seed + 5);
  r.add("remainder_worst_ratio", remainder.worst_ratio);
  r.add("remainder_bound", remainder.bound);
  r.add("remainder_pass", remainder.pass);
  const SampledBound ratio = verify_ratio_bound(p.op, cfg.verify.trials, cfg.seed + 3);
  r.add("ratio_worst", ratio.worst_ratio);
  r.add("ratio_pass", ratio.pass);
  const SampledBound lip = verify_local_lipschitz(p.op, params.L, truth, params.rho_f, 20, cfg.seed + 9);
  r.add("lipschitz_worst", lip.worst_ratio);
  r.add("lipschitz_pass", lip.pass);

  const bool mandatory = cert.holds_metric && psd && blocks.all() && remainder.pass && ratio.pass && lip.pass;
  r.add("mandatory_pass", mandatory);

  CommandOutput out;
  {
    std::ofstream os(cfg.out_dir / "verify_report.txt");
    if (!os) throw Error("cannot write verify_report.txt");
    r.write(os);
  }
  r.write(std::cout);
  out.files.push_back("verify_report.txt");
  out.facts.emplace_back("mandatory_pass", mandatory ? "true" : "false");
  if (!mandatory) out.failure = "verification failed (see verify_report.txt)";
  return out;
}

CommandOutput cmd_metrics(const RunConfig& cfg) {
  const Problem p = build_problem(cfg);
  const Vector g = read_sinogram(cfg, p);
  const Vector truth = read_image_checked(cfg.out_dir / "truth.f64", p);
  const Vector recon = read_image_checked(cfg.out_dir / "recon.f64", p);
  const GradientOperator grad{p.n_side, p.op.n_materials(), BoundaryRule::Replicate};

  MetricReport report;
  report.relative = relative_metrics(recon, truth, g, p.op, grad);
  for (Index d = 0; d < p.op.n_materials(); ++d) {
    report.per_material.push_back(
        quality_metrics(material_image(recon, p.n_side, d), material_image(truth, p.n_side, d)));
  }
  CommandOutput out;
  {
    std::ofstream os(cfg.out_dir / "metrics.csv");
    if (!os) throw Error("cannot write metrics.csv");
    write_metric_header(os, p.op.n_materials());
    write_metric_row(os, report);
  }
  write_metric_header(std::cout, p.op.n_materials());
  write_metric_row(std::cout, report);
  out.files.push_back("metrics.csv");
  return out;
}

int execute(const std::string& command, const RunConfig& cfg, bool check) {
  fs::create_directories(cfg.out_dir);
  const fs::path manifest_path = cfg.out_dir / "manifest.txt";
  const Manifest recorded = read_manifest(manifest_path);

  CommandOutput out;
  if (command == "simulate") {
    out = cmd_simulate(cfg);
  } else if (command == "reconstruct") {
    out = cmd_reconstruct(cfg);
  } else if (command == "verify") {
    out = cmd_verify(cfg);
  } else if (command == "metrics") {
    out = cmd_metrics(cfg);
  } else {
    throw ConfigError("unknown command '" + command + "'");
  }

  Manifest updated = recorded;
  std::vector<std::string> mismatches;
  for (const auto& file : out.files) {
    const std::string key = "sha256." + file;
    const std::string hash = io::sha256_file((cfg.out_dir / file).string());
    if (check) {
      const auto it = recorded.find(key);
      if (it == recorded.end()) {
        mismatches.push_back(file + ": no recorded hash");
      } else if (it->second != hash) {
        mismatches.push_back(file + ": hash differs from manifest");
      }
    }
    updated[key] = hash;
  }
  for (const auto& [k, v] : out.facts) updated[command + "." + k] = v;

  if (check) {
    for (const auto& m : mismatches) std::cerr << "check: " << m << '\n';
    if (!mismatches.empty()) {
      throw VerificationFailure(std::to_string(mismatches.size()) + " artifact(s) differ from " +
                                manifest_path.string());
    }
    std::cerr << "check: " << out.files.size() << " artifact(s) match the manifest\n";
  } else {
    write_manifest(manifest_path, updated);
  }
  if (out.failure) throw VerificationFailure(*out.failure);
  return kOk;
}

int report_failure(const std::exception& e) {
  std::cerr << "error: " << e.what() << '\n';
  if (dynamic_cast<const VerificationFailure*>(&e)) return kVerificationFailure;
  if (dynamic_cast<const NumericalAbort*>(&e)) return kNumericalAbort;
  if (dynamic_cast<const Error*>(&e)) return kConfigError;
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return kConfigError;
  return 1;
}

}  // namespace epd::app
