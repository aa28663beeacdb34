// thinobs: command-line front end for the epiperimetric verifiers, the gap
// certificates and the thin-obstacle solver.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "thinobs/competitors.hpp"
#include "thinobs/gap_certifier.hpp"
#include "thinobs/parallel.hpp"
#include "thinobs/signorini_solver.hpp"
#include "thinobs/spectral_basis.hpp"
#include "thinobs/special_solutions.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace thinobs;

namespace {

enum Exit { ok = 0, usage = 1, violation = 2, nonconvergence = 3 };

struct Globals {
  std::string out = "out";
  std::uint64_t seed = 7;
  std::optional<double> tol;
  bool json_logs = false;
};

Globals G;

void log(const std::string& event, const std::string& msg, const json& extra = json::object()) {
  if (G.json_logs) {
    json j = extra;
    j["event"] = event;
    j["message"] = msg;
    std::cerr << j.dump() << "\n";
  } else {
    std::cerr << "[" << event << "] " << msg << "\n";
  }
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot read " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

json read_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("malformed JSON in " + path + ": " + e.what());
  }
}

fs::path out_path(const std::string& name) {
  fs::create_directories(G.out);
  return fs::path(G.out) / name;
}

void write_text(const std::string& name, const std::string& text) {
  std::ofstream o(out_path(name), std::ios::binary);
  if (!o) throw std::runtime_error("cannot write " + name);
  o << text;
}

void write_json(const std::string& name, const json& j) { write_text(name, j.dump(2) + "\n"); }

/// Run description: command, options and input digests. Its hash tags every output.
json make_spec(const std::string& command, json options) {
  options["command"] = command;
  options["seed"] = G.seed;
  options["tol"] = G.tol ? json(*G.tol) : json(nullptr);
  return options;
}

std::string spec_hash(const json& spec) { return sha256_hex(spec.dump()); }

// ---------------------------------------------------------------------------
// epi

struct EpiOptions {
  std::string kind;
  int d = 2;
  int m = 1;
  std::string trace;
  std::size_t fuzz = 0;
  std::optional<double> eps;
  double delta = 0.05;
  int K = -1;
};

int cmd_epi(const EpiOptions& o) {
  const std::string& k = o.kind;
  if (k == "half-integer" && o.d != 2) throw std::invalid_argument("half-integer case requires --d 2");
  if (o.trace.empty() == (o.fuzz == 0)) throw std::invalid_argument("give exactly one of --trace or --fuzz N");

  json options{{"case", k}, {"d", o.d}, {"m", o.m}, {"fuzz", o.fuzz}, {"delta", o.delta}, {"K", o.K}};
  options["eps"] = o.eps ? json(*o.eps) : json(nullptr);
  std::vector<TraceExpansion> traces;
  if (!o.trace.empty()) {
    std::string text = read_file(o.trace);
    options["trace_sha256"] = sha256_hex(text);
    json tj;
    try {
      tj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw std::invalid_argument("malformed trace file " + o.trace + ": " + e.what());
    }
    TraceExpansion c = trace_from_json(tj, o.K);
    if (c.d() != o.d) throw std::invalid_argument("trace dimension does not match --d");
    traces.push_back(c);
  }
  json spec = make_spec("epi", options);
  const std::string hash = spec_hash(spec);

  json param = json::object();
  double eps = 0.0;
  if (k == "singular") {
    if (o.eps) {
      eps = *o.eps;
      param["eps_source"] = "override";
    } else {
      EpsilonCalibration cal = reference_singular_epsilon(o.d, o.m);
      eps = cal.eps;
      param["eps_source"] = "reference calibration";
      param["calibration"] = cal.to_json();
    }
    param["eps"] = eps;
  } else if (k == "negative") {
    eps = o.eps ? *o.eps : certify_negative_gap(o.d, o.m).eps;
    param["eps"] = eps;
    param["eps_source"] = o.eps ? "override" : "gap certificate";
  } else if (k == "half-integer") {
    param["delta"] = o.delta;
    param["kappa"] = 1.0 / (8.0 * o.m - 1.0);
  } else if (k != "regular") {
    throw std::invalid_argument("unknown case " + k);
  }

  const std::size_t n = traces.empty() ? o.fuzz : 1;
  auto rows = parallel_map<CampaignRow>(n, [&](std::size_t i) {
    CampaignRow row;
    row.seed = G.seed;
    row.index = i;
    row.report.kind = k;
    row.report.d = o.d;
    row.report.m = o.m;
    try {
      if (k == "regular") {
        TraceExpansion c = traces.empty() ? fuzz_regular_trace(o.d, G.seed, i) : traces[0];
        row.report = verify_regular(c);
      } else if (k == "singular") {
        TraceExpansion c = traces.empty() ? fuzz_singular_trace(o.d, o.m, G.seed, i) : traces[0];
        row.report = verify_singular(c, o.m, eps);
      } else if (k == "negative") {
        TraceExpansion c = traces.empty() ? fuzz_negative_trace(o.d, o.m, G.seed, i) : traces[0];
        row.report = verify_negative(c, o.m, eps);
      } else {
        TraceExpansion c = traces.empty() ? fuzz_half_integer_trace(o.m, o.delta, G.seed, i) : traces[0];
        row.report = verify_half_integer(c, o.m, o.delta);
      }
      if (G.tol) apply_tolerance(row.report, *G.tol);
    } catch (const CompetitorError& e) {
      switch (e.kind) {
        case CompetitorError::Kind::delta_too_large: row.error = "delta too large"; break;
        case CompetitorError::Kind::epsilon_too_large: row.error = "epsilon too large"; break;
        case CompetitorError::Kind::singular_system: row.error = "singular projection system"; break;
      }
    } catch (const InvalidTrace& e) {
      row.error = std::string("inadmissible trace: ") + e.what();
    } catch (const std::invalid_argument& e) {
      row.error = std::string("invalid trace: ") + e.what();
    }
    return row;
  });

  std::size_t fail1 = 0, fail2 = 0, errors = 0;
  std::string csv = "# spec_hash: " + hash + "\n" + campaign_csv_header();
  json reports = json::array();
  for (const auto& row : rows) {
    csv += campaign_csv_row(row);
    json r = row.error.empty() ? row.report.to_json() : json{{"case", k}, {"error", row.error}};
    r["index"] = row.index;
    reports.push_back(r);
    if (!row.error.empty()) {
      ++errors;
      log("epi", "item " + std::to_string(row.index) + ": " + row.error, {{"index", row.index}, {"error", row.error}});
      continue;
    }
    if (!row.report.pass) ++fail1;
    if (!row.report.pass2) ++fail2;
  }
  std::string stem = "epi_" + k + "_d" + std::to_string(o.d) + "_m" + std::to_string(o.m);
  write_text(stem + ".csv", csv);
  json summary{{"spec", spec},      {"spec_hash", hash},      {"parameters", param}, {"items", n},
               {"violations", fail1}, {"violations_secondary", fail2}, {"errors", errors}, {"reports", reports}};
  write_json(stem + ".json", summary);
  std::cout << stem << ": items=" << n << " violations=" << fail1 << " secondary_violations=" << fail2 << " errors=" << errors
            << "\n";
  return fail1 + fail2 + errors > 0 ? violation : ok;
}

// ---------------------------------------------------------------------------
// gap

struct GapOptions {
  int d = 3;
  int m = 2;
  std::vector<int> grid;
  bool check_paper = false;
};

GapCertificate full_certificate(int d, int m) {
  GapCertificate g = certify_negative_gap(d, m);
  if (d == 2 || d == 3) attach_positive_gap(g, reference_singular_epsilon(d, m).eps);
  return g;
}

int cmd_gap(const GapOptions& o) {
  std::vector<std::pair<int, int>> cases;
  if (!o.grid.empty()) {
    for (int d = 2; d <= o.grid[0]; ++d)
      for (int m = 1; m <= o.grid[1]; ++m) cases.emplace_back(d, m);
    if (cases.empty()) throw std::invalid_argument("--grid needs DMAX >= 2 and MMAX >= 1");
  } else {
    cases.emplace_back(o.d, o.m);
  }
  json options{{"cases", cases}, {"check_paper", o.check_paper}};
  json spec = make_spec("gap", options);
  const std::string hash = spec_hash(spec);
  int status = ok;
  for (auto [d, m] : cases) {
    GapCertificate g = full_certificate(d, m);
    json j = g.to_json();
    j["spec_hash"] = hash;
    j["spec"] = spec;
    write_json("gap_d" + std::to_string(d) + "_m" + std::to_string(m) + ".json", j);
    std::cout << "gap d=" << d << " m=" << m << " C1=" << g.C1 << " C2=" << rational_string(g.C2)
              << " c_minus=" << format_double(g.c_minus) << " c_plus=" << (g.eps_singular > 0.0 ? format_double(g.c_plus) : "n/a")
              << "\n";
  }
  if (o.check_paper) {
    GapCertificate g = certify_negative_gap(3, 2);
    bool pass = g.C1 == 16 && g.C2 == Rational(15, 4) && g.c_minus >= 0.0015 && g.c_minus <= 0.0025;
    std::cout << "check-paper (d=3, m=2): C1=" << g.C1 << " C2=" << rational_string(g.C2) << " c_minus=" << format_double(g.c_minus)
              << (pass ? " PASS" : " FAIL") << "\n";
    if (!pass) status = violation;
  }
  return status;
}

// ---------------------------------------------------------------------------
// solve

struct AnalysisOptions {
  std::vector<Point> points;
  bool auto_points = true;
  std::size_t max_points = 8;
  std::optional<double> lambda;
  std::vector<double> radii;
  int n_radii = 8;
  bool decay = true;

  static AnalysisOptions from_json(const json& j, int d) {
    AnalysisOptions a;
    if (j.contains("points")) {
      a.auto_points = false;
      for (const auto& p : j.at("points")) {
        auto v = p.get<std::vector<double>>();
        if (static_cast<int>(v.size()) != d - 1 && static_cast<int>(v.size()) != d)
          throw std::invalid_argument("analysis.points: give d-1 plane coordinates");
        Point x{0.0, 0.0, 0.0};
        for (int i = 0; i < d - 1; ++i) x[i] = v[i];
        a.points.push_back(x);
      }
    }
    a.max_points = j.value("max_points", a.max_points);
    if (j.contains("lambda")) a.lambda = j.at("lambda").get<double>();
    if (j.contains("radii")) a.radii = j.at("radii").get<std::vector<double>>();
    a.n_radii = j.value("n_radii", a.n_radii);
    a.decay = j.value("decay", a.decay);
    return a;
  }
};

/// Default ladder about x0: r_max = dist/2, r_min = max(r_max/5, 3h).
std::vector<double> default_radii(const GridSolution& s, const Point& x0, int n) {
  double dist = 1.0 - norm(x0), top = 0.5 * dist, bottom = std::max(0.2 * top, 3.0 * s.h);
  if (bottom >= top) return {};
  return geometric_radii(bottom, top, n);
}

int cmd_solve(const std::string& config_path) {
  std::string text = read_file(config_path);
  json cj;
  try {
    cj = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("malformed config " + config_path + ": " + e.what());
  }
  SolveConfig cfg = SolveConfig::from_json(cj);
  if (G.tol) cfg.tol = *G.tol;
  AnalysisOptions an = AnalysisOptions::from_json(cj.value("analysis", json::object()), cfg.d);
  json spec = make_spec("solve", {{"config", cj}, {"config_sha256", sha256_hex(text)}});
  const std::string hash = spec_hash(spec);

  auto s = solve(cfg);
  log("solve", "h=" + format_double(s->h) + " iterations=" + std::to_string(s->total_iterations) +
                   (s->converged ? " converged" : " NOT converged"),
      solution_summary(*s));
  write_solution_dump(*s, out_path("solution.bin").string(), out_path("solution.json").string());

  auto fb = detect_free_boundary(*s);
  std::string fcsv = "# spec_hash: " + hash + "\nx,y,z,boundary_touching,isolated\n";
  for (const auto& p : fb)
    fcsv += format_double(p.x[0]) + "," + format_double(p.x[1]) + "," + format_double(p.x[2]) + "," +
            (p.boundary_touching ? "1" : "0") + "," + (p.isolated ? "1" : "0") + "\n";
  write_text("free_boundary.csv", fcsv);

  std::vector<Point> points = an.points;
  if (an.auto_points) {
    std::vector<Point> interior;
    for (const auto& p : fb)
      if (!p.boundary_touching) interior.push_back(p.x);
    std::stable_sort(interior.begin(), interior.end(), [](const Point& a, const Point& b) { return norm(a) < norm(b); });
    if (interior.size() > an.max_points) interior.resize(an.max_points);
    points = interior;
  }

  json table = json::array();
  json plots{{"spec_hash", hash}, {"plots", json::array()}};
  std::string ccsv = "# spec_hash: " + hash + "\npoint,x,y,label,N_hat,unstable,nondegenerate,monotone,decay_ok\n";
  bool monotone_all = true;
  for (std::size_t k = 0; k < points.size(); ++k) {
    const Point& x0 = points[k];
    json entry{{"point", k}, {"x0", std::vector<double>(x0.begin(), x0.begin() + cfg.d)}};
    std::vector<double> radii = an.radii.empty() ? default_radii(*s, x0, an.n_radii) : an.radii;
    if (radii.size() < 6) {
      entry["skipped"] = "radius ladder does not fit between 2h and the sphere";
      table.push_back(entry);
      continue;
    }
    try {
      FrequencyProfile f = frequency_profile(*s, x0, an.lambda.value_or(1.5), radii);
      Classification c = classify_point(f);
      if (!an.lambda) f = frequency_profile(*s, x0, c.lambda_label, radii);
      entry["profile"] = f.to_json();
      entry["classification"] = c.to_json();
      monotone_all = monotone_all && f.monotone();
      std::string pname = "profile_" + std::to_string(k) + ".csv";
      write_text(pname, "# spec_hash: " + hash + "\n" + profile_csv(f));
      plots["plots"].push_back({{"file", pname}, {"x", "r"}, {"y", {"N", "W_lambda"}}, {"point", k}});
      std::string decay_ok = "";
      if (an.decay && c.m > 0) {
        try {
          DecayReport d = decay_check(*s, x0, c.m);
          entry["decay"] = d.to_json();
          decay_ok = d.decay_ok ? "1" : "0";
        } catch (const std::exception& e) {
          entry["decay"] = {{"skipped", e.what()}};
        }
      }
      ccsv += std::to_string(k) + "," + format_double(x0[0]) + "," + format_double(x0[1]) + "," + c.label + "," +
              format_double(c.N_hat) + "," + (c.unstable ? "1" : "0") + "," + (c.nondegenerate ? "1" : "0") + "," +
              (f.monotone() ? "1" : "0") + "," + decay_ok + "\n";
    } catch (const std::invalid_argument& e) {
      entry["skipped"] = e.what();
    }
    table.push_back(entry);
  }
  write_text("classification.csv", ccsv);
  plots["plots"].push_back({{"file", "free_boundary.csv"}, {"x", "x"}, {"y", "y"}, {"kind", "scatter"}});
  write_json("plots.json", plots);

  json summary{{"spec", spec},
               {"spec_hash", hash},
               {"solution", solution_summary(*s)},
               {"free_boundary_points", fb.size()},
               {"points", table},
               {"monotone", monotone_all}};
  write_json("summary.json", summary);
  std::cout << "solve: converged=" << (s->converged ? 1 : 0) << " free_boundary_points=" << fb.size();
  for (const auto& e : table)
    if (e.contains("classification"))
      std::cout << " [" << e["classification"]["label"].get<std::string>() << " N_hat=" << format_double(e["classification"]["N_hat"]) << "]";
  std::cout << " monotone=" << (monotone_all ? 1 : 0) << "\n";
  if (!s->converged) return nonconvergence;
  return monotone_all ? ok : violation;
}

// ---------------------------------------------------------------------------
// modes, norms

int cmd_modes(int d, int K, bool slit) {
  json spec = make_spec("modes", {{"d", d}, {"K", K}, {"slit", slit}});
  json j = mode_table_to_json(*make_table(d, K, slit));
  j["spec_hash"] = spec_hash(spec);
  std::string name = "modes_d" + std::to_string(d) + "_K" + std::to_string(K) + (slit ? "_slit" : "") + ".json";
  write_json(name, j);
  std::cout << name << ": " << make_table(d, K, slit)->size() << " modes\n";
  return ok;
}

int cmd_norms(int d, int mmax) {
  json spec = make_spec("norms", {{"d", d}, {"mmax", mmax}});
  json j{{"spec_hash", spec_hash(spec)}, {"d", d}};
  ModelSolution he = make_he(d, {1.0, 0.0, 0.0}), u0 = make_u0(d);
  j["h_e"] = l2_sphere_norm_sq([&](const Point& x) { return he.value(x); }, d);
  j["u_0"] = l2_sphere_norm_sq([&](const Point& x) { return u0.value(x); }, d);
  j["h_2m"] = json::array();
  for (int m = 1; m <= mmax; ++m) {
    json e{{"m", m}, {"norm_sq", h2m_norm_sq(d, m)}, {"coefficients", build_h2m(d, m).to_json()["C"]}};
    if (d == 3) e["norm_sq_exact"] = rational_string(h2m_norm_sq_over_pi_d3(build_h2m(3, m))) + "*pi";
    j["h_2m"].push_back(e);
  }
  if (d == 2) {
    j["h_2m_minus_half"] = json::array();
    for (int m = 1; m <= mmax; ++m) {
      ModelSolution s = make_half_integer(m);
      j["h_2m_minus_half"].push_back({{"m", m}, {"norm_sq", l2_sphere_norm_sq([&](const Point& x) { return s.value(x); }, 2)}});
    }
  }
  write_json("norms_d" + std::to_string(d) + ".json", j);
  std::cout << j.dump(2) << "\n";
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thinobs: epiperimetric verifiers, frequency-gap certificates and a thin-obstacle solver"};
  app.require_subcommand(1);
  app.add_option("--out", G.out, "Output directory")->capture_default_str();
  app.add_option("--seed", G.seed, "Campaign seed")->capture_default_str();
  app.add_option("--tol", G.tol, "Tolerance override (relative inequality slack for epi, solver tol for solve)");
  app.add_flag("--json-logs", G.json_logs, "Log to stderr as JSON lines");

  EpiOptions eo;
  auto* epi = app.add_subcommand("epi", "Verify an epiperimetric inequality on a trace file or a fuzz campaign");
  epi->add_option("--case", eo.kind, "regular | singular | negative | half-integer")
      ->required()
      ->check(CLI::IsMember({"regular", "singular", "negative", "half-integer"}));
  epi->add_option("--d", eo.d, "Dimension")->check(CLI::IsMember({2, 3}))->capture_default_str();
  epi->add_option("--m", eo.m, "Index m of the homogeneity 2m or 2m - 1/2")->check(CLI::PositiveNumber)->capture_default_str();
  auto* trace_opt = epi->add_option("--trace", eo.trace, "Trace JSON file");
  auto* fuzz_opt = epi->add_option("--fuzz", eo.fuzz, "Number of fuzzed traces")->check(CLI::PositiveNumber);
  trace_opt->excludes(fuzz_opt);
  epi->add_option("--eps", eo.eps, "Epsilon override (singular, negative)");
  epi->add_option("--delta", eo.delta, "Perturbation radius (half-integer)")->capture_default_str();
  epi->add_option("--K", eo.K, "Table order for sampled traces");

  GapOptions go;
  auto* gap = app.add_subcommand("gap", "Frequency-gap certificates");
  gap->add_option("--d", go.d, "Dimension")->capture_default_str();
  gap->add_option("--m", go.m, "Index m")->check(CLI::PositiveNumber)->capture_default_str();
  gap->add_option("--grid", go.grid, "DMAX MMAX: all d in [2, DMAX], m in [1, MMAX]")->expected(2);
  gap->add_flag("--check-paper", go.check_paper, "Assert C1 = 16, C2 = 15/4 and 0.0015 <= c_minus <= 0.0025 for d = 3, m = 2");

  std::string config;
  auto* slv = app.add_subcommand("solve", "Solve the thin-obstacle problem and analyse free-boundary points");
  slv->add_option("config", config, "Solver config JSON")->required();

  int md = 2, mK = 4, nd = 3, nm = 4;
  bool slit = false;
  auto* modes = app.add_subcommand("modes", "Dump a mode table");
  modes->add_option("--d", md, "Dimension")->check(CLI::IsMember({2, 3}))->capture_default_str();
  modes->add_option("--K", mK, "Maximal homogeneity")->check(CLI::NonNegativeNumber)->capture_default_str();
  modes->add_flag("--slit", slit, "Half-integer slit table (d = 2)");
  auto* norms = app.add_subcommand("norms", "Model-solution norms on the unit sphere");
  norms->add_option("--d", nd, "Dimension")->check(CLI::IsMember({2, 3}))->capture_default_str();
  norms->add_option("--mmax", nm, "Largest m for h_2m")->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return usage;
  }

  try {
    if (*epi) return cmd_epi(eo);
    if (*gap) return cmd_gap(go);
    if (*slv) return cmd_solve(config);
    if (*modes) return cmd_modes(md, mK, slit);
    if (*norms) return cmd_norms(nd, nm);
  } catch (const std::invalid_argument& e) {
    log("error", e.what());
    return usage;
  } catch (const InvalidTrace& e) {
    log("error", e.what());
    return violation;
  } catch (const std::exception& e) {
    log("error", e.what());
    return usage;
  }
  return usage;
}
