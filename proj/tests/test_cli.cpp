#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "app.hpp"
#include "epd/io.hpp"
#include "epd/metrics.hpp"
#include "epd/phantom.hpp"

using namespace epd;
namespace fs = std::filesystem;

namespace {

const fs::path kData = EPD_DATA_DIR;
const fs::path kBinary = EPD_BINARY;
const std::string kSolver = "tau = 0.2\nsigma_k = 0.2\nsigma_a = 0.2\nmax_iters = 50\nlog_every = 10\n";

struct Sandbox {
  fs::path dir;
  explicit Sandbox(const std::string& name) : dir(fs::temp_directory_path() / ("epd_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }

  // Small 8x8 problem; `solver` is the whole [solver] body, `noise` and `extra` are appended.
  fs::path config(const std::string& solver = kSolver, const std::string& noise = "",
                  const std::string& extra = "") const {
    const fs::path path = dir / "run.ini";
    std::ofstream os(path);
    os << "[geometry]\nn_bins = 13\ndetector_half_width = 7.05\nviews_per_spectrum = 6\nangular_gap = pi/120\n"
       << "[model]\nspectra = " << (kData / "spectra.csv").string() << "\nmaterials = "
       << (kData / "materials.csv").string() << "\nenergies = " << (kData / "energies.csv").string() << '\n'
       << "[phantom]\nellipses = " << (kData / "phantom.csv").string() << "\nn_side = 8\n"
       << "[solver]\n" << solver
       << "[noise]\nseed = 1\n" << noise << "[output]\ndirectory = out\n" << extra;
    return path;
  }

  fs::path out() const { return dir / "out"; }
};

int run_cli(const std::string& args) {
  const std::string cmd = kBinary.string() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string config_error(const std::string& text) {
  const fs::path p = fs::temp_directory_path() / "epd_cli_bad.ini";
  {
    std::ofstream os(p);
    os << text;
  }
  try {
    app::load_run_config(p);
  } catch (const app::ConfigError& e) {
    fs::remove(p);
    return e.what();
  }
  fs::remove(p);
  return "";
}

}  // namespace

TEST_CASE("config errors name the offending field") {
  Sandbox box("config");
  const std::string good = slurp(box.config());
  CHECK(config_error(good + "bogus = 1\n").find("output.bogus") != std::string::npos);
  CHECK(config_error("[geometry]\nn_bins = x\n").find("geometry.n_bins") != std::string::npos);
  CHECK(config_error("[nonsense]\na = 1\n").find("nonsense") != std::string::npos);
  std::string bad_scheme = good;
  bad_scheme.replace(bad_scheme.find("[solver]\n"), 9, "[solver]\nscheme = nope\n");
  CHECK(config_error(bad_scheme).find("solver.scheme") != std::string::npos);

  const fs::path cfg = box.config(kSolver + "scheme = nope\n");
  CHECK(run_cli("simulate --config " + cfg.string()) == app::kConfigError);
  CHECK(run_cli("simulate --config " + (box.dir / "missing.ini").string()) == app::kConfigError);
  CHECK(run_cli("simulate") == app::kConfigError);
  CHECK(run_cli("reconstruct --config " + box.config().string()) == app::kConfigError);  // no sinogram yet
}

TEST_CASE("pi fractions and relative paths") {
  Sandbox box("paths");
  const app::RunConfig cfg = app::load_run_config(box.config());
  CHECK(cfg.geometry.angular_gap == doctest::Approx(std::numbers::pi / 120).epsilon(1e-15));
  CHECK(cfg.out_dir == box.dir / "out");
  CHECK(cfg.scheme == SchemeId::EpdExact);
  app::RunConfig o = cfg;
  app::apply_overrides(o, {box.dir / "elsewhere", 9, std::string("ncpd")});
  CHECK(o.out_dir == box.dir / "elsewhere");
  CHECK(o.seed == 9);
  CHECK(o.scheme == SchemeId::Ncpd);
}

TEST_CASE("noise-free simulation stores K of the phantom exactly") {
  Sandbox box("simulate");
  const fs::path cfg_path = box.config();
  REQUIRE(run_cli("simulate --config " + cfg_path.string()) == 0);
  const io::RawImage truth = io::read_raw_image((box.out() / "truth.f64").string());
  CHECK(truth.width == 8);
  CHECK(truth.n_materials == 2);
  const Vector g = io::read_raw_vector((box.out() / "sinogram.f64").string());
  CHECK(g.size() == 2 * 6 * 13);
  const app::RunConfig cfg = app::load_run_config(cfg_path);
  const SpectralForwardOp op(build_parallel_projector(cfg.geometry),
                             load_spectral_model(cfg.spectra_csv.string(), cfg.materials_csv.string(),
                                                 SpectralModel::dual_assignment(cfg.geometry)));
  CHECK(g == forward(op, truth.data));
  const app::Manifest m = app::read_manifest(box.out() / "manifest.txt");
  CHECK(m.at("simulate.snr_db_measured") == "inf");
  CHECK(m.contains("sha256.sinogram.f64"));
  CHECK(fs::exists(box.out() / "truth_energy_60kev.pgm"));
}

TEST_CASE("same seed reproduces the manifest and --check detects tampering") {
  Sandbox box("repro");
  const fs::path cfg = box.config("", "snr_db = 27.11\n");
  REQUIRE(run_cli("simulate --config " + cfg.string()) == 0);
  const std::string first = slurp(box.out() / "manifest.txt");
  REQUIRE(run_cli("simulate --config " + cfg.string()) == 0);
  CHECK(slurp(box.out() / "manifest.txt") == first);
  CHECK(run_cli("simulate --check --config " + cfg.string()) == 0);

  const app::Manifest m = app::read_manifest(box.out() / "manifest.txt");
  CHECK(std::abs(std::stod(m.at("simulate.snr_db_measured")) - 27.11) <= 0.01);

  CHECK(run_cli("simulate --check --seed 2 --config " + cfg.string()) == app::kVerificationFailure);
  CHECK(slurp(box.out() / "manifest.txt") == first);  // --check never rewrites
}

TEST_CASE("reconstruct with zero iterations writes only the header") {
  Sandbox box("zero");
  const fs::path cfg = box.config("max_iters = 0\n");
  REQUIRE(run_cli("simulate --config " + cfg.string()) == 0);
  REQUIRE(run_cli("reconstruct --config " + cfg.string()) == 0);
  CHECK(slurp(box.out() / "iterations.csv") == "iter,RE,RD,RT,residual,wall_ms\n");
  CHECK(io::read_raw_vector((box.out() / "recon.f64").string()).isZero(0.0));
}

TEST_CASE("schemes produce different trajectories and metrics are written") {
  Sandbox box("schemes");
  const fs::path cfg = box.config();
  REQUIRE(run_cli("simulate --config " + cfg.string()) == 0);
  REQUIRE(run_cli("reconstruct --config " + cfg.string()) == 0);
  const std::string exact = slurp(box.out() / "iterations.csv");
  REQUIRE(run_cli("metrics --config " + cfg.string()) == 0);
  const std::string metrics = slurp(box.out() / "metrics.csv");
  CHECK(metrics.rfind("# psnr_peak=1\n", 0) == 0);

  REQUIRE(run_cli("reconstruct --scheme exact-nl-pdhgm --config " + cfg.string()) == 0);
  CHECK(slurp(box.out() / "iterations.csv") != exact);
  const app::Manifest m = app::read_manifest(box.out() / "manifest.txt");
  CHECK(m.at("reconstruct.scheme") == "exact-nl-pdhgm");
  CHECK(m.at("reconstruct.iterations") == "50");
  CHECK(m.at("reconstruct.holds_metric") == "true");
}

TEST_CASE("verify passes under certified steps and fails when they are violated") {
  Sandbox box("verify");
  const std::string verify = "[verify]\nsamples = 3\ntrials = 10\n";
  const fs::path ok = box.config(kSolver + "lambda = 1e-6\n", "", verify);
  REQUIRE(run_cli("simulate --config " + ok.string()) == 0);
  CHECK(run_cli("verify --config " + ok.string()) == 0);
  const std::string report = slurp(box.out() / "verify_report.txt");
  CHECK(report.find("holds_metric = true") != std::string::npos);
  CHECK(report.find("mandatory_pass = true") != std::string::npos);

  const fs::path bad = box.config("tau = 2\nsigma_k = 2\nsigma_a = 0.2\nmax_iters = 50\nlambda = 1e-6\n", "", verify);
  CHECK(run_cli("verify --config " + bad.string()) == app::kVerificationFailure);
  const std::string violated = slurp(box.out() / "verify_report.txt");
  CHECK(violated.find("holds_metric = false") != std::string::npos);
  CHECK(violated.find("metric_psd = false") != std::string::npos);
}

TEST_CASE("uncertified reconstruction is refused unless forced") {
  Sandbox box("force");
  const fs::path bad = box.config("tau = 2\nsigma_k = 2\nsigma_a = 0.2\nmax_iters = 50\n");
  REQUIRE(run_cli("simulate --config " + bad.string()) == 0);
  CHECK(run_cli("reconstruct --config " + bad.string()) == app::kConfigError);
  const fs::path forced = box.config("tau = 2\nsigma_k = 2\nsigma_a = 0.2\nforce = true\nmax_iters = 5\n");
  CHECK(run_cli("reconstruct --config " + forced.string()) == 0);
}
