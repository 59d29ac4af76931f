// CSV writer/reader round-trips, SVG portrait rendering, JSON configuration
// handling, and the command-line front end driven in-process.

#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <pllsim/cli.hpp>

using namespace pllsim;

namespace {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

CliResult cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  CliResult r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + needle.size()))
    ++n;
  return n;
}

// Unique scratch path under the system temp dir, removed on destruction.
struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& name)
      : path(std::filesystem::temp_directory_path() /
             ("pllsim_test_" + std::to_string(::getpid()) + "_" + name)) {}
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
  [[nodiscard]] std::string str() const { return path.string(); }
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

TEST_CASE("numbers are rendered with nine significant digits") {
  CHECK(format_number(1.0) == "1");
  CHECK(format_number(0.0) == "0");
  CHECK(format_number(0.123456789123) == "0.123456789");
  CHECK(format_number(-2.5e-10) == "-2.5e-10");
  CHECK(format_number(60.97187063) == "60.9718706");
}

TEST_CASE("csv writer emits header plus comma-separated rows") {
  CsvTable t;
  t.columns = {"t", "x", "theta_e"};
  t.rows = {{"0", "1", "2"}};
  std::ostringstream out;
  write_csv(out, t);
  CHECK(out.str() == "t,x,theta_e\n0,1,2\n");
}

TEST_CASE("empty tables are refused rather than silently written") {
  std::ostringstream out;
  CsvTable empty;
  REQUIRE_THROWS_AS(write_csv(out, empty), EmptyTableError);
  empty.columns = {"a"};
  REQUIRE_THROWS_AS(write_csv(out, empty), EmptyTableError);  // header, no rows

  CsvTable jagged;
  jagged.columns = {"a", "b"};
  jagged.rows = {{"1"}};
  REQUIRE_THROWS_AS(write_csv(out, jagged), ParameterError);
}

TEST_CASE("csv parser round-trips what the writer produced") {
  std::vector<SweepRow> rows(2);
  rows[0] = {1.0, 0.0, 0.8737734478, 0.8737734478, false};
  rows[1] = {4.0, 0.5, 2.0808802290, 0.5202200573, false};
  const CsvTable written = sweep_table(rows);

  std::stringstream io;
  write_csv(io, written);
  const CsvTable parsed = parse_csv(io);

  REQUIRE(parsed.columns ==
          std::vector<std::string>{"axis", "family", "omega_lockin", "omega_normalized"});
  REQUIRE(parsed.rows == written.rows);
  // Nine significant digits survive a string -> double -> string cycle.
  for (const auto& row : parsed.rows)
    for (const auto& cell : row) CHECK(format_number(std::stod(cell)) == cell);
}

TEST_CASE("csv parser rejects malformed input") {
  std::istringstream empty("");
  REQUIRE_THROWS_AS(parse_csv(empty), EmptyTableError);
  std::istringstream header_only("a,b\n");
  REQUIRE_THROWS_AS(parse_csv(header_only), EmptyTableError);
  std::istringstream jagged("a,b\n1,2\n3\n");
  REQUIRE_THROWS_AS(parse_csv(jagged), IoError);
}

TEST_CASE("trajectory tables start at the initial sample") {
  const PhaseModel m =
      make_model(make_active_pi(1.0, 1.0), PdCharacteristic::sinusoidal(), 1.0, 0.0);
  IntegrationConfig icfg;
  icfg.t_max = 1.0;
  icfg.dense_stride = 0.25;
  const Trajectory traj = integrate(m, {1.0, 2.0}, icfg);
  const CsvTable t = trajectory_table(traj);
  REQUIRE(t.columns == std::vector<std::string>{"t", "x", "theta_e"});
  REQUIRE(t.rows.size() == traj.samples.size());
  CHECK(t.rows.front() == std::vector<std::string>{"0", "1", "2"});
}

TEST_CASE("equilibria tables name stability in plain words") {
  const PhaseModel m =
      make_model(make_lead_lag(1.0, 0.1), PdCharacteristic::sinusoidal(), 2.0, 0.8);
  const CsvTable t = equilibria_table(equilibria(m));
  REQUIRE(t.rows.size() == 2);
  std::ostringstream out;
  write_csv(out, t);
  CHECK(count_occurrences(out.str(), ",stable,") == 1);
  CHECK(count_occurrences(out.str(), ",saddle,") == 1);
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

TEST_CASE("portraits with only equilibria draw one dot per visible lift") {
  const PhaseModel m =
      make_model(make_lead_lag(1.0, 0.1), PdCharacteristic::sinusoidal(), 2.0, 0.64);
  const std::vector<Equilibrium> eqs = equilibria(m);
  REQUIRE(eqs.size() == 2);
  const std::string svg = render_portrait_svg(m, {}, {}, eqs);

  CHECK(svg.rfind("<svg xmlns=", 0) == 0);
  CHECK(svg.find("</svg>\n") != std::string::npos);
  CHECK(count_occurrences(svg, "<circle") == 2);
  CHECK(count_occurrences(svg, "eq-stable") >= 1);  // style block + one dot
  CHECK(count_occurrences(svg, "class=\"eq-saddle\"") == 1);
}

TEST_CASE("portraits include trajectories and all four separatrix branches") {
  const PhaseModel m =
      make_model(make_lead_lag(0.0633, 0.0225), PdCharacteristic::sinusoidal(), 250.0,
                 40.0);
  const std::vector<Equilibrium> eqs = equilibria(m);
  const Equilibrium* saddle = nullptr;
  for (const auto& eq : eqs)
    if (eq.stability == Stability::Saddle) saddle = &eq;
  REQUIRE(saddle != nullptr);
  const std::vector<Separatrix> branches = trace_separatrices(m, *saddle);
  REQUIRE(branches.size() == 4);

  IntegrationConfig icfg;
  icfg.t_max = 2.0;
  const std::vector<Trajectory> trajs = {integrate(m, {0.3, 0.5}, icfg),
                                         integrate(m, {-0.3, 1.5}, icfg)};
  const std::string svg = render_portrait_svg(m, trajs, branches, eqs);

  CHECK(count_occurrences(svg, "class=\"separatrix\"") >= 4);
  CHECK(count_occurrences(svg, "class=\"trajectory\"") >= 2);
  CHECK(count_occurrences(svg, "<circle") >= 2);
}

TEST_CASE("domain shading fills locked and undecided cells only") {
  const PhaseModel m =
      make_model(make_lead_lag(1.0, 0.1), PdCharacteristic::sinusoidal(), 2.0, 0.3);
  const std::vector<DomainGridRow> shading = {
      {-1.0, -0.5, DomainVerdict::Inside},
      {-1.0, 0.5, DomainVerdict::Outside},
      {1.0, -0.5, DomainVerdict::Undecided},
      {1.0, 0.5, DomainVerdict::Inside},
  };
  SvgOptions opt;
  opt.shading = &shading;
  const std::string svg = render_portrait_svg(m, {}, {}, equilibria(m), opt);
  CHECK(count_occurrences(svg, "class=\"cell-inside\"") == 2);
  CHECK(count_occurrences(svg, "class=\"cell-undecided\"") == 1);
}

TEST_CASE("identical portrait inputs give byte-identical output") {
  const PhaseModel m =
      make_model(make_active_pi(1.0, 0.5), PdCharacteristic::sinusoidal(), 2.0, 0.4);
  IntegrationConfig icfg;
  icfg.t_max = 3.0;
  const std::vector<Trajectory> trajs = {integrate(m, {0.4, 1.0}, icfg)};
  const std::vector<Equilibrium> eqs = equilibria(m);
  CHECK(render_portrait_svg(m, trajs, {}, eqs) == render_portrait_svg(m, trajs, {}, eqs));
}

TEST_CASE("viewports smaller than their margins are rejected") {
  const PhaseModel m =
      make_model(make_active_pi(1.0, 0.5), PdCharacteristic::sinusoidal(), 2.0, 0.0);
  SvgOptions opt;
  opt.width = 50.0;  // margin defaults to 40 per side
  REQUIRE_THROWS_AS(render_portrait_svg(m, {}, {}, {}, opt), ParameterError);
}

// ---------------------------------------------------------------------------
// Configuration files
// ---------------------------------------------------------------------------

TEST_CASE("config files load, validate, and yield to explicit flags") {
  TempFile cfg("estimate.json");
  std::ofstream(cfg.path) << R"({"filter":"activepi","tau1":1.0,"tau2":0.0,"k_vco":2.0})";

  const CliResult from_file = cli({"estimate", "-c", cfg.str()});
  CHECK(from_file.code == 0);
  CHECK(from_file.out == "1.33333\n");

  // A flag passed on top of the file wins.
  const CliResult overridden = cli({"estimate", "-c", cfg.str(), "--kvco", "8"});
  CHECK(overridden.code == 0);
  CHECK(overridden.out == "3.33333\n");
}

TEST_CASE("unknown configuration keys are rejected by name") {
  TempFile cfg("typo.json");
  std::ofstream(cfg.path) << R"({"filtre":"activepi"})";
  const CliResult r = cli({"estimate", "-c", cfg.str()});
  CHECK(r.code == 2);
  CHECK(r.err.find("filtre") != std::string::npos);
}

TEST_CASE("broken or missing configuration files fail cleanly") {
  TempFile cfg("broken.json");
  std::ofstream(cfg.path) << "{";
  const CliResult broken = cli({"estimate", "-c", cfg.str()});
  CHECK(broken.code == 2);
  CHECK(broken.err.find("not valid JSON") != std::string::npos);

  const CliResult missing = cli({"estimate", "-c", "/nonexistent/nowhere.json"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("cannot open") != std::string::npos);
}

TEST_CASE("wrongly typed configuration values name the offending key") {
  TempFile cfg("typed.json");
  std::ofstream(cfg.path) << R"({"tau1":"fast"})";
  const CliResult r = cli({"estimate", "-c", cfg.str()});
  CHECK(r.code == 2);
  CHECK(r.err.find("tau1") != std::string::npos);
  CHECK(r.err.find("number") != std::string::npos);
}

// ---------------------------------------------------------------------------
// Command-line front end
// ---------------------------------------------------------------------------

TEST_CASE("estimate prints the closed-form value") {
  const CliResult r =
      cli({"estimate", "--tau1", "1", "--tau2", "0", "--kvco", "2"});
  CHECK(r.code == 0);
  CHECK(r.out == "1.33333\n");
}

TEST_CASE("invalid filter parameters exit with the configuration code") {
  const CliResult r = cli({"lockin", "--filter", "leadlag", "--tau1", "1", "--tau2", "1",
                           "--kvco", "2"});
  CHECK(r.code == 2);
  CHECK(r.err.find("tau2") != std::string::npos);
}

TEST_CASE("parse failures exit with the configuration code") {
  CHECK(cli({}).code == 2);                          // a subcommand is required
  CHECK(cli({"frobnicate"}).code == 2);              // unknown subcommand
  CHECK(cli({"estimate", "--no-such-flag"}).code == 2);
  CHECK(cli({"sweep", "--filter", "activepi", "--axis", "1"}).code == 2);  // no family
}

TEST_CASE("numerical failures exit with the error code") {
  // Saddle-node parameters: both equilibria merge into one degenerate point,
  // so there is no hyperbolic saddle to trace from.
  const CliResult r = cli({"separatrix", "--filter", "leadlag", "--tau1", "1", "--tau2",
                           "0.5", "--kvco", "2", "--omega", "1"});
  CHECK(r.code == 3);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("simulate reports the run and writes the trajectory table") {
  TempFile out_csv("traj.csv");
  const CliResult r =
      cli({"simulate", "--filter", "activepi", "--tau1", "1", "--tau2", "1", "--kvco",
           "1", "--x0", "0.2", "--theta0", "0.5", "--tmax", "5", "--out", out_csv.str()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("simulated to t=5") != std::string::npos);
  CHECK(r.out.find("no cycle slip") != std::string::npos);
  CHECK(r.out.find("final state:") != std::string::npos);

  std::ifstream in(out_csv.path);
  const CsvTable table = parse_csv(in);
  REQUIRE(table.columns == std::vector<std::string>{"t", "x", "theta_e"});
  REQUIRE(table.rows.size() >= 2);
  CHECK(table.rows.front() == std::vector<std::string>{"0", "0.2", "0.5"});
}

TEST_CASE("equilibria lists both points or explains the empty band") {
  const CliResult two = cli({"equilibria", "--filter", "leadlag", "--tau1", "1", "--tau2",
                             "0.1", "--kvco", "2", "--omega", "0.8"});
  REQUIRE(two.code == 0);
  CHECK(count_occurrences(two.out, "\n") == 3);  // header + two rows
  CHECK(two.out.find("stable") != std::string::npos);
  CHECK(two.out.find("saddle") != std::string::npos);

  const CliResult none = cli({"equilibria", "--filter", "leadlag", "--tau1", "1",
                              "--tau2", "0.1", "--kvco", "2", "--omega", "1.5"});
  CHECK(none.code == 0);
  CHECK(none.out.find("no equilibria") != std::string::npos);
}

TEST_CASE("separatrix emits the four named branches as CSV") {
  const CliResult r = cli({"separatrix", "--filter", "leadlag", "--tau1", "1", "--tau2",
                           "0.1", "--kvco", "2", "--omega", "0.3"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("branch,theta,x\n", 0) == 0);
  for (const char* name :
       {"stable_upper", "stable_lower", "unstable_left", "unstable_right"})
    CHECK(r.out.find(name) != std::string::npos);
}

TEST_CASE("domain classifies a small grid to CSV") {
  const CliResult r =
      cli({"domain", "--filter", "leadlag", "--tau1", "1", "--tau2", "0.1", "--kvco",
           "2", "--omega", "0.3", "--grid-theta", "6", "--grid-x", "6"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("theta,x,verdict\n", 0) == 0);
  CHECK(count_occurrences(r.out, "\n") == 37);  // header + 36 cells
  CHECK(count_occurrences(r.out, "inside") + count_occurrences(r.out, "outside") +
            count_occurrences(r.out, "undecided") >=
        36);
}

TEST_CASE("lockin prints a bracketed frequency and honors the method flag") {
  const std::vector<std::string> base = {"lockin", "--filter", "leadlag", "--tau1", "1",
                                         "--tau2", "0.1",      "--kvco",  "2"};
  const CliResult step = cli(base);
  REQUIRE(step.code == 0);
  CHECK(step.out.find("lock-in frequency:") != std::string::npos);
  CHECK(step.out.find("bracket [") != std::string::npos);

  std::vector<std::string> sep = base;
  sep.insert(sep.end(), {"--method", "separatrix"});
  REQUIRE(cli(sep).code == 0);

  std::vector<std::string> bad = base;
  bad.insert(bad.end(), {"--method", "analytic"});
  CHECK(cli(bad).code == 2);  // analytic is an estimate, not a lockin method
}

TEST_CASE("pullin reports the unbounded PI verdict") {
  const CliResult r = cli({"pullin", "--filter", "activepi", "--tau1", "0.0633",
                           "--tau2", "0.0225", "--kvco", "250"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("unbounded") != std::string::npos);
}

TEST_CASE("sweep writes one CSV row per grid point") {
  const CliResult r = cli({"sweep", "--filter", "activepi", "--axis", "1,4", "--family",
                           "0", "--method", "analytic"});
  REQUIRE(r.code == 0);
  std::istringstream in(r.out);
  const CsvTable table = parse_csv(in);
  REQUIRE(table.columns ==
          std::vector<std::string>{"axis", "family", "omega_lockin", "omega_normalized"});
  REQUIRE(table.rows.size() == 2);
  CHECK(std::stod(table.rows[0][2]) ==
        Catch::Approx(analytic_lock_in_estimate(1.0, 0.0, 1.0)).epsilon(1e-8));
  CHECK(std::stod(table.rows[1][2]) ==
        Catch::Approx(analytic_lock_in_estimate(1.0, 0.0, 4.0)).epsilon(1e-8));
}

TEST_CASE("portrait renders a deterministic SVG file") {
  TempFile svg1("portrait1.svg"), svg2("portrait2.svg");
  const std::vector<std::string> base = {
      "portrait", "--filter", "leadlag", "--tau1", "1",   "--tau2", "0.1",
      "--kvco",   "2",        "--omega", "0.3",    "--x0", "0.4",    "--theta0",
      "1.0",      "--tmax",   "5"};

  std::vector<std::string> first = base;
  first.insert(first.end(), {"--svg-out", svg1.str()});
  REQUIRE(cli(first).code == 0);

  std::vector<std::string> second = base;
  second.insert(second.end(), {"--svg-out", svg2.str()});
  REQUIRE(cli(second).code == 0);

  const std::string a = slurp(svg1.path);
  CHECK(a.rfind("<svg xmlns=", 0) == 0);
  CHECK(a.find("</svg>") != std::string::npos);
  CHECK(a == slurp(svg2.path));

  CHECK(cli({"portrait", "--filter", "leadlag", "--tau1", "1", "--tau2", "0.1",
             "--kvco", "2"})
            .code == 2);  // needs an output path
}
