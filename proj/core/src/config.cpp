#include "cmj/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cmj/errors.hpp"

namespace cmj {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = s.find(',');
    const auto piece = trim(s.substr(0, comma));
    if (!piece.empty()) out.push_back(piece);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

bool valid_key(std::string_view key) {
  return !key.empty() && std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.';
  });
}

AgeDistribution parse_age(const KeyValueFile& f, const std::string& key) {
  const std::string kind = f.text(key);
  if (kind == "exponential") return ExponentialAge{f.real(key + ".mean")};
  if (kind == "fixed") return FixedAge{f.real(key + ".age")};
  if (kind == "uniform") return UniformAge{f.real(key + ".lo"), f.real(key + ".hi")};
  throw ConfigError(key + ": unknown age distribution '" + kind + "' (exponential, fixed, uniform)");
}

CountDistribution parse_count(const KeyValueFile& f, const std::string& key) {
  const std::string kind = f.text(key);
  if (kind == "poisson") return PoissonCount{f.real(key + ".mean")};
  if (kind == "geometric") return GeometricCount{f.real(key + ".mean")};
  if (kind == "fixed") {
    const auto n = f.integer(key + ".n");
    if (n > 1'000'000) throw ConfigError(key + ".n is unreasonably large");
    return FixedCount{static_cast<unsigned>(n)};
  }
  throw ConfigError(key + ": unknown count distribution '" + kind + "' (poisson, geometric, fixed)");
}

void reject_unconsumed(const KeyValueFile& f) {
  const auto extra = f.unconsumed();
  if (extra.empty()) return;
  std::string msg = "unknown key";
  msg += extra.size() > 1 ? "s: " : ": ";
  for (std::size_t i = 0; i < extra.size(); ++i) msg += (i ? ", " : "") + extra[i];
  throw ConfigError(msg);
}

std::string join(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? ", " : "") + format_real(xs[i]);
  return s;
}

}  // namespace

std::string format_real(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

double parse_real(std::string_view s, std::string_view what) {
  s = trim(s);
  if (s == "inf" || s == "+inf") return kInfinity;
  double x = 0.0;
  const auto* begin = s.data() + (!s.empty() && s.front() == '+' ? 1 : 0);
  const auto res = std::from_chars(begin, s.data() + s.size(), x);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || std::isnan(x))
    throw ConfigError(std::string(what) + ": '" + std::string(s) + "' is not a number");
  return x;
}

std::uint64_t parse_integer(std::string_view s, std::string_view what) {
  s = trim(s);
  std::uint64_t x = 0;
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  }
  const auto res = std::from_chars(s.data(), s.data() + s.size(), x, base);
  if (res.ec == std::errc{} && res.ptr == s.data() + s.size()) return x;
  // Accept integral reals such as 1e7.
  double d = 0.0;
  const auto r2 = std::from_chars(s.data(), s.data() + s.size(), d);
  if (base == 10 && r2.ec == std::errc{} && r2.ptr == s.data() + s.size() && d >= 0.0 && d < 1.8e19 &&
      std::floor(d) == d)
    return static_cast<std::uint64_t>(d);
  throw ConfigError(std::string(what) + ": '" + std::string(s) + "' is not a nonnegative integer");
}

// ---------------------------------------------------------------------------

KeyValueFile KeyValueFile::parse(std::string_view text, std::string_view origin) {
  KeyValueFile f;
  f.origin_ = origin;
  std::string section;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text.remove_prefix(nl == std::string_view::npos ? text.size() : nl + 1);
    ++line_no;
    const auto where = [&] { return std::string(origin) + ":" + std::to_string(line_no) + ": "; };

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "unterminated section header");
      section = std::string(trim(line.substr(1, line.size() - 2)));
      if (!valid_key(section)) throw ConfigError(where() + "bad section name '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where() + "expected key = value");
    const auto key_part = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (!valid_key(key_part)) throw ConfigError(where() + "bad key '" + std::string(key_part) + "'");
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const std::string key = section.empty() ? std::string(key_part) : section + "." + std::string(key_part);
    if (!f.entries_.emplace(key, std::string(value)).second) throw ConfigError(where() + "duplicate key " + key);
  }
  return f;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string& KeyValueFile::raw(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(origin_ + ": missing key " + key);
  consumed_[key] = true;
  return it->second;
}

std::string KeyValueFile::text(const std::string& key) const { return raw(key); }
std::string KeyValueFile::text(const std::string& key, const std::string& fallback) const {
  return has(key) ? raw(key) : fallback;
}
double KeyValueFile::real(const std::string& key) const { return parse_real(raw(key), key); }
double KeyValueFile::real(const std::string& key, double fallback) const {
  return has(key) ? real(key) : fallback;
}
std::uint64_t KeyValueFile::integer(const std::string& key) const { return parse_integer(raw(key), key); }
std::uint64_t KeyValueFile::integer(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? integer(key) : fallback;
}

std::vector<double> KeyValueFile::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto piece : split_list(raw(key))) out.push_back(parse_real(piece, key));
  return out;
}

std::vector<std::string> KeyValueFile::words(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto piece : split_list(raw(key))) out.emplace_back(piece);
  return out;
}

std::vector<std::string> KeyValueFile::unconsumed() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_)
    if (!consumed_.count(k)) out.push_back(k);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<double> GridSpec::resolve(double horizon) const {
  std::vector<double> out = list;
  const bool ranged = start || stop || step;
  if (ranged) {
    if (!(start && stop && step)) throw ConfigError("run.grid needs all of start, stop and step");
    if (!list.empty()) throw ConfigError("run.grid: give either a range or a list, not both");
    if (!(*step > 0.0)) throw ConfigError("run.grid.step must be positive");
    if (*stop < *start) throw ConfigError("run.grid.stop is below run.grid.start");
    const auto n = static_cast<std::size_t>(std::floor((*stop - *start) / *step + 1e-9));
    for (std::size_t k = 0; k <= n; ++k) {
      const double raw_point = *start + static_cast<double>(k) * *step;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.12g", raw_point);
      out.push_back(std::strtod(buf, nullptr));
    }
  }
  out.insert(out.end(), extra.begin(), extra.end());
  if (out.empty()) throw ConfigError("run.grid is empty");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.front() < 0.0 || out.back() > horizon)
    throw ConfigError("run.grid must lie inside [0, horizon = " + format_real(horizon) + "]");
  return out;
}

ReproductionLaw parse_law(const KeyValueFile& f) {
  const std::string variant = f.text("law.variant");
  if (variant == "poisson_ages") return ReproductionLaw::poisson_ages(f.real("law.rate"));
  if (variant == "deterministic_ages") return ReproductionLaw::deterministic_ages(f.reals("law.ages"));
  if (variant == "bernoulli_split") return ReproductionLaw::bernoulli_split(f.real("law.p"), parse_age(f, "law.lifetime"));
  if (variant == "iid_litter")
    return ReproductionLaw::iid_litter(parse_count(f, "law.count"), parse_age(f, "law.age"));
  throw ConfigError("law.variant: unknown variant '" + variant +
                    "' (poisson_ages, deterministic_ages, bernoulli_split, iid_litter)");
}

RunConfig parse_run_config(const KeyValueFile& f) {
  RunConfig c;
  c.law = parse_law(f);

  auto& r = c.run;
  r.horizon = f.real("run.horizon");
  if (!(r.horizon > 0.0) || !std::isfinite(r.horizon)) throw ConfigError("run.horizon must be positive and finite");
  if (f.has("run.grid.start")) r.grid.start = f.real("run.grid.start");
  if (f.has("run.grid.stop")) r.grid.stop = f.real("run.grid.stop");
  if (f.has("run.grid.step")) r.grid.step = f.real("run.grid.step");
  if (f.has("run.grid.list")) r.grid.list = f.reals("run.grid.list");
  if (f.has("run.grid.extra")) r.grid.extra = f.reals("run.grid.extra");
  r.grid.resolve(r.horizon);
  const std::string cap = f.text("run.age_cap", "auto");
  if (cap != "auto") {
    r.age_cap = parse_real(cap, "run.age_cap");
    if (!(*r.age_cap > 0.0)) throw ConfigError("run.age_cap must be positive or auto");
  }
  r.replicas = f.integer("run.replicas");
  if (r.replicas == 0) throw ConfigError("run.replicas must be positive");
  r.seed = f.integer("run.seed", 1);
  r.max_births = f.integer("run.max_births", r.max_births);
  if (r.max_births == 0) throw ConfigError("run.max_births must be positive");
  const auto jobs = f.integer("run.jobs", 1);
  if (jobs == 0 || jobs > 1024) throw ConfigError("run.jobs must be in [1, 1024]");
  r.jobs = static_cast<unsigned>(jobs);

  auto& v = c.verify;
  if (f.has("verify.suites")) {
    v.suites = f.words("verify.suites");
    for (const auto& s : v.suites)
      if (std::find(known_suites().begin(), known_suites().end(), s) == known_suites().end())
        throw ConfigError("verify.suites: unknown suite '" + s + "'");
  }
  v.t = f.real("verify.t", v.t);
  v.T = f.real("verify.T", v.T);
  if (f.has("verify.lln.t")) v.lln_t = f.real("verify.lln.t");
  if (f.has("verify.s_grid")) v.s_grid = f.reals("verify.s_grid");
  if (f.has("verify.deltas")) v.deltas = f.reals("verify.deltas");
  if (f.has("verify.window")) {
    const auto w = f.reals("verify.window");
    if (w.size() != 2) throw ConfigError("verify.window needs two values t0, t1");
    v.window_t0 = w[0];
    v.window_t1 = w[1];
  }
  v.window_step = f.real("verify.window_step", v.window_step);
  v.c_delta_samples = f.integer("verify.c_delta.samples", v.c_delta_samples);
  v.c_delta_seed = f.integer("verify.c_delta.seed", v.c_delta_seed);

  // Threshold overrides.
  v.lln.w_threshold = f.real("verify.lln.w_threshold", v.lln.w_threshold);
  v.lln.min_replicas = f.integer("verify.lln.min_replicas", v.lln.min_replicas);
  v.clt.w_min = f.real("verify.w_min", v.clt.w_min);
  v.fclt.w_min = v.clt.w_min;
  v.lil.w_min = v.clt.w_min;
  v.clt.min_retained = f.integer("verify.clt.min_retained", v.clt.min_retained);
  v.fclt.min_retained = f.integer("verify.fclt.min_retained", v.fclt.min_retained);
  v.fclt.bootstrap = f.integer("verify.fclt.bootstrap", v.fclt.bootstrap);
  v.fclt.bootstrap_seed = f.integer("verify.fclt.bootstrap_seed", v.fclt.bootstrap_seed);
  v.lil.min_retained = f.integer("verify.lil.min_retained", v.lil.min_retained);
  v.meansq.min_replicas = f.integer("verify.meansq.min_replicas", v.meansq.min_replicas);
  v.curve_min_replicas = f.integer("verify.curve.min_replicas", v.curve_min_replicas);
  if (v.fclt.bootstrap < 2) throw ConfigError("verify.fclt.bootstrap must be at least 2");
  if (v.c_delta_samples < 2) throw ConfigError("verify.c_delta.samples must be at least 2");

  reject_unconsumed(f);
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c = parse_run_config(KeyValueFile::load(path));
  c.source = path.string();
  return c;
}

std::string RunConfig::echo() const {
  std::ostringstream os;
  os << "law = " << law.describe() << "\n";
  os << "run.horizon = " << format_real(run.horizon) << "\n";
  os << "run.grid = " << join(run.grid.resolve(run.horizon)) << "\n";
  os << "run.age_cap = " << (run.age_cap ? format_real(*run.age_cap) : std::string("auto")) << "\n";
  os << "run.replicas = " << run.replicas << "\n";
  os << "run.seed = " << run.seed << "\n";
  os << "run.max_births = " << run.max_births << "\n";
  os << "verify.t = " << format_real(verify.t) << "\n";
  os << "verify.T = " << format_real(verify.T) << "\n";
  os << "verify.lln.t = " << format_real(verify.lln_t.value_or(verify.t)) << "\n";
  os << "verify.s_grid = " << join(verify.s_grid) << "\n";
  os << "verify.deltas = " << join(verify.deltas) << "\n";
  os << "verify.window = " << format_real(verify.window_t0) << ", " << format_real(verify.window_t1) << "\n";
  os << "verify.window_step = " << format_real(verify.window_step) << "\n";
  os << "verify.c_delta.samples = " << verify.c_delta_samples << "\n";
  os << "verify.c_delta.seed = " << verify.c_delta_seed << "\n";
  os << "verify.w_min = " << format_real(verify.clt.w_min) << "\n";
  return os.str();
}

}  // namespace cmj
