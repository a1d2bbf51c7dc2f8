#include "cmj/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cmj/config.hpp"
#include "cmj/errors.hpp"

namespace cmj {
namespace {

void put(std::string& line, double x) { line += format_real(x); }
void put(std::string& line, std::int64_t x) { line += std::to_string(x); }
void put(std::string& line, std::uint64_t x) { line += std::to_string(x); }

std::vector<std::string_view> fields(std::string_view line) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = line.find(',');
    out.push_back(line.substr(0, comma));
    if (comma == std::string_view::npos) break;
    line.remove_prefix(comma + 1);
  }
  return out;
}

void expect_header(std::istream& in, std::string_view header) {
  std::string line;
  if (!std::getline(in, line) || line != header)
    throw ConfigError("unexpected CSV header '" + line + "', wanted '" + std::string(header) + "'");
}

std::string check_bound(double x) { return std::isfinite(x) ? format_real(x) : (x > 0 ? "inf" : "-inf"); }

}  // namespace

void write_paths_csv(std::ostream& out, const Ensemble& ensemble) {
  out << "replica,t,W_t,Q_t,N_t,frontier_count,extinct,guard_tripped\n";
  std::string line;
  for (const auto& p : ensemble.replicas) {
    for (std::size_t i = 0; i < ensemble.grid.size(); ++i) {
      line.clear();
      put(line, p.replica_index);
      line += ',';
      put(line, ensemble.grid[i]);
      line += ',';
      put(line, p.w[i]);
      line += ',';
      put(line, p.q[i]);
      line += ',';
      put(line, p.births[i]);
      line += ',';
      put(line, p.frontier[i]);
      line += p.extinct ? ",1" : ",0";
      line += p.guard_tripped ? ",1\n" : ",0\n";
      out << line;
    }
  }
}

void write_generations_csv(std::ostream& out, const Ensemble& ensemble) {
  out << "replica,n,Z_n,complete\n";
  std::string line;
  for (const auto& p : ensemble.replicas) {
    for (std::size_t n = 0; n < p.z.size(); ++n) {
      line.clear();
      put(line, p.replica_index);
      line += ',';
      put(line, static_cast<std::uint64_t>(n));
      line += ',';
      put(line, p.z[n]);
      line += n < p.complete_generations ? ",1\n" : ",0\n";
      out << line;
    }
  }
}

Ensemble read_ensemble_csv(std::istream& paths, std::istream& generations, double horizon) {
  Ensemble e;
  e.horizon = horizon;
  expect_header(paths, "replica,t,W_t,Q_t,N_t,frontier_count,extinct,guard_tripped");
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(paths, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = fields(line);
    if (f.size() != 8) throw ConfigError("paths.csv line " + std::to_string(line_no) + ": expected 8 fields");
    const auto replica = parse_integer(f[0], "replica");
    const double t = parse_real(f[1], "t");
    if (e.replicas.empty() || e.replicas.back().replica_index != replica) {
      e.replicas.emplace_back();
      e.replicas.back().replica_index = replica;
    }
    auto& p = e.replicas.back();
    // The first replica fixes the grid.
    if (e.replicas.size() == 1) e.grid.push_back(t);
    else if (p.w.size() >= e.grid.size() || e.grid[p.w.size()] != t)
      throw ConfigError("paths.csv line " + std::to_string(line_no) + ": grid differs between replicas");
    p.w.push_back(parse_real(f[2], "W_t"));
    p.q.push_back(parse_real(f[3], "Q_t"));
    p.births.push_back(static_cast<std::int64_t>(parse_integer(f[4], "N_t")));
    p.frontier.push_back(static_cast<std::int64_t>(parse_integer(f[5], "frontier_count")));
    p.extinct = f[6] == "1";
    p.guard_tripped = f[7] == "1";
  }
  for (const auto& p : e.replicas)
    if (p.w.size() != e.grid.size()) throw ConfigError("paths.csv: replica " + std::to_string(p.replica_index) + " is short");

  expect_header(generations, "replica,n,Z_n,complete");
  std::size_t cursor = 0;
  while (std::getline(generations, line)) {
    if (line.empty()) continue;
    const auto f = fields(line);
    if (f.size() != 4) throw ConfigError("generations.csv: expected 4 fields");
    const auto replica = parse_integer(f[0], "replica");
    while (cursor < e.replicas.size() && e.replicas[cursor].replica_index != replica) ++cursor;
    if (cursor == e.replicas.size()) throw ConfigError("generations.csv: unknown or unordered replica");
    auto& p = e.replicas[cursor];
    const auto n = parse_integer(f[1], "n");
    if (n != p.z.size()) throw ConfigError("generations.csv: generations out of order");
    p.z.push_back(parse_real(f[2], "Z_n"));
    if (f[3] == "1") p.complete_generations = p.z.size();
  }
  return e;
}

double read_manifest_horizon(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw ConfigError("cannot open " + manifest.string());
  std::string line;
  while (std::getline(in, line))
    if (line.rfind("horizon = ", 0) == 0) return parse_real(line.substr(10), "horizon");
  throw ConfigError(manifest.string() + " has no horizon entry");
}

void write_manifest(std::ostream& out, const ManifestInfo& info, const ModelConstants& constants,
                    const Ensemble& ensemble) {
  out << "[config]\n" << info.config_echo;
  out << "\n[run]\n";
  out << "horizon = " << format_real(info.horizon) << "\n";
  out << "age_cap = " << check_bound(info.age_cap) << "\n";
  out << "truncation_bias_bound = " << format_real(info.truncation_bound) << "\n";
  out << "wall_seconds = " << format_real(info.wall_seconds) << "\n";
  out << "\n[constants]\n";
  write_constants_text(out, constants.fields());
  out << "lattice = " << (constants.lattice ? 1 : 0) << "\n";
  out << "degenerate = " << (constants.degenerate ? 1 : 0) << "\n";
  out << "a5 = " << (constants.a5.holds ? 1 : 0) << "  # " << constants.a5.justification << "\n";

  std::size_t extinct = 0;
  std::size_t guard = 0;
  std::uint64_t births = 0;
  for (const auto& p : ensemble.replicas) {
    extinct += p.extinct ? 1 : 0;
    guard += p.guard_tripped ? 1 : 0;
    births += p.total_births;
  }
  const double usable = static_cast<double>(ensemble.replicas.size() - guard);
  out << "\n[exclusions]\n";
  out << "replicas = " << ensemble.replicas.size() << "\n";
  out << "extinct = " << extinct << "\n";
  out << "guard_tripped = " << guard << "\n";
  if (usable > 0) {
    const double frac = static_cast<double>(extinct) / usable;
    out << "extinct_fraction = " << format_real(frac) << "\n";
    out << "extinct_fraction_se = " << format_real(std::sqrt(frac * (1.0 - frac) / usable)) << "\n";
  }
  out << "total_births = " << births << "\n";

  out << "\n[seeds]\n";
  out << "master = " << info.master_seed << "\n";
  for (const auto& p : ensemble.replicas) out << "replica." << p.replica_index << " = " << p.seed << "\n";
}

void write_constants_text(std::ostream& out, const std::vector<SourcedValue>& values) {
  for (const auto& v : values) {
    out << v.name << " = " << format_real(v.value) << "  # " << to_string(v.source);
    if (v.standard_error > 0.0) out << ", error " << format_real(v.standard_error);
    out << "\n";
  }
}

void write_constants_csv(std::ostream& out, const std::vector<SourcedValue>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << values[i].name;
  out << "\n";
  for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << format_real(values[i].value);
  out << "\n";
}

void write_report_text(std::ostream& out, const VerificationReport& report, const std::string& config_echo) {
  out << "suite = " << report.suite << "\n";
  out << "verdict = " << (report.passed() ? "pass" : "fail") << "\n";
  out << "strength = " << (report.weak ? "weak (qualitative band check)" : "quantitative") << "\n";
  out << "\n[exclusions]\n";
  out << "total = " << report.exclusions.total << "\n";
  out << "extinct = " << report.exclusions.extinct << "\n";
  out << "guard_tripped = " << report.exclusions.guard_tripped << "\n";
  out << "low_w = " << report.exclusions.low_w << "\n";
  out << "retained = " << report.exclusions.retained << "\n";
  out << "\n[constants]\n";
  write_constants_text(out, report.constants);
  out << "\n[checks]\n";
  for (const auto& c : report.checks)
    out << c.name << " = " << format_real(c.value) << "  # [" << check_bound(c.lower) << ", " << check_bound(c.upper)
        << "] " << (c.passed ? "pass" : "FAIL") << "\n";
  out << "\n[statistics]\n";
  for (const auto& [k, v] : report.statistics) out << k << " = " << format_real(v) << "\n";
  if (!config_echo.empty()) out << "\n[config]\n" << config_echo;
}

void write_report_csv(std::ostream& out, const VerificationReport& report) {
  out << "kind,name,value,lower,upper,passed\n";
  for (const auto& c : report.checks)
    out << "check," << c.name << ',' << format_real(c.value) << ',' << check_bound(c.lower) << ','
        << check_bound(c.upper) << ',' << (c.passed ? 1 : 0) << "\n";
  for (const auto& [k, v] : report.statistics) out << "statistic," << k << ',' << format_real(v) << ",,,\n";
}

std::vector<std::filesystem::path> write_gnuplot(const std::filesystem::path& dir, const VerificationReport& report) {
  std::vector<std::filesystem::path> written;
  const std::string stem = report.suite;
  if (!report.residuals.empty()) {
    const auto data = dir / (stem + "_residuals.dat");
    std::ofstream d(data);
    for (double r : report.residuals) d << format_real(r) << "\n";
    written.push_back(data);
    const auto script = dir / (stem + "_residuals.gp");
    std::ofstream s(script);
    s << "# gnuplot " << script.filename().string() << "\n"
      << "set terminal pngcairo size 800,600\n"
      << "set output '" << stem << "_residuals.png'\n"
      << "binwidth = 0.1\n"
      << "bin(x) = binwidth * floor(x / binwidth) + binwidth / 2\n"
      << "n = " << report.residuals.size() << "\n"
      << "set xrange [-5:5]\n"
      << "plot '" << data.filename().string()
      << "' using (bin($1)):(1.0 / (n * binwidth)) smooth frequency with boxes title 'residuals', \\\n"
      << "     exp(-x * x / 2) / sqrt(2 * pi) with lines title 'N(0,1)'\n";
    written.push_back(script);
  }
  if (!report.matrix.empty()) {
    const auto data = dir / (stem + "_cov.dat");
    std::ofstream d(data);
    d << "# j k s_j s_k empirical target bootstrap_se\n";
    for (std::size_t j = 0; j < report.matrix.size(); ++j) {
      for (std::size_t k = 0; k < report.matrix.size(); ++k)
        d << j << ' ' << k << ' ' << format_real(report.times[j]) << ' ' << format_real(report.times[k]) << ' '
          << format_real(report.matrix[j][k]) << ' ' << format_real(report.target[j][k]) << ' '
          << format_real(report.matrix_se[j][k]) << "\n";
      d << "\n";
    }
    written.push_back(data);
    const auto script = dir / (stem + "_cov.gp");
    std::ofstream s(script);
    s << "set terminal pngcairo size 1000,450\n"
      << "set output '" << stem << "_cov.png'\n"
      << "set multiplot layout 1,2\n"
      << "set view map\n"
      << "set title 'empirical'\n"
      << "splot '" << data.filename().string() << "' using 1:2:5 with image notitle\n"
      << "set title 'target'\n"
      << "splot '" << data.filename().string() << "' using 1:2:6 with image notitle\n"
      << "unset multiplot\n";
    written.push_back(script);
  }
  return written;
}

void write_variance_curve_csv(std::ostream& out, const VarianceCurve& curve) {
  out << "t,v_t,se\n";
  for (std::size_t i = 0; i < curve.times.size(); ++i)
    out << format_real(curve.times[i]) << ',' << format_real(curve.v[i]) << ',' << format_real(curve.se[i]) << "\n";
}

void write_c_delta_csv(std::ostream& out, const CDeltaTable& table) {
  out << "delta,c_delta,mc_se,quadrature_bound,curve_se,extrapolated_fraction\n";
  for (const auto& e : table.entries)
    out << format_real(e.delta) << ',' << format_real(e.value) << ',' << format_real(e.mc_se) << ','
        << format_real(e.quadrature_bound) << ',' << format_real(e.curve_se) << ','
        << format_real(e.extrapolated_fraction) << "\n";
}

}  // namespace cmj
