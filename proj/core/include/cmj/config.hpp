#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cmj/analysis.hpp"
#include "cmj/reproduction.hpp"

namespace cmj {

// Flat sectioned key=value text:
//
//   # comment
//   [law]
//   variant = bernoulli_split
//   p = 0.75
//   lifetime = exponential
//   lifetime.mean = 1
//
// A key inside [section] is stored as "section.key"; keys outside any
// section must carry the prefix themselves ("law.variant = ..."). Values may
// be double-quoted. Lists are comma separated. A key may appear once.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text, std::string_view origin = "<string>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return entries_; }

  // Typed accessors; each marks the key consumed. Throw ConfigError on a
  // missing key (required) or a malformed value.
  std::string text(const std::string& key) const;
  std::string text(const std::string& key, const std::string& fallback) const;
  double real(const std::string& key) const;
  double real(const std::string& key, double fallback) const;
  std::uint64_t integer(const std::string& key) const;
  std::uint64_t integer(const std::string& key, std::uint64_t fallback) const;
  std::vector<double> reals(const std::string& key) const;
  std::vector<std::string> words(const std::string& key) const;

  // Keys never read by an accessor; the schema check rejects them.
  std::vector<std::string> unconsumed() const;

 private:
  const std::string& raw(const std::string& key) const;

  std::map<std::string, std::string> entries_;
  mutable std::map<std::string, bool> consumed_;
  std::string origin_;
};

double parse_real(std::string_view s, std::string_view what);
std::uint64_t parse_integer(std::string_view s, std::string_view what);

struct GridSpec {
  // Either a {start, stop, step} range or an explicit list; `extra` points
  // are merged into either form.
  std::optional<double> start;
  std::optional<double> stop;
  std::optional<double> step;
  std::vector<double> list;
  std::vector<double> extra;

  // Sorted, deduplicated grid inside [0, horizon]. Range points are
  // start + k * step rounded to 12 significant digits, so 0.1-steps land on
  // the decimal values a user types.
  std::vector<double> resolve(double horizon) const;
};

struct RunSection {
  double horizon = 0.0;
  GridSpec grid;
  std::optional<double> age_cap;  // nullopt = auto
  std::size_t replicas = 0;
  std::uint64_t seed = 0;
  std::uint64_t max_births = 10'000'000;
  unsigned jobs = 1;
};

struct VerifySection {
  std::vector<std::string> suites;
  double t = 6.0;
  double T = 18.0;
  std::optional<double> lln_t;  // lln defaults to t
  std::vector<double> s_grid{0.0, 1.0, 2.0};
  std::vector<double> deltas{0.001, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 12.0, 14.0, 20.0};
  double window_t0 = 8.0;
  double window_t1 = 14.0;
  double window_step = 0.1;
  std::size_t c_delta_samples = 200'000;
  std::uint64_t c_delta_seed = 0xC0FFEE;

  LlnParams lln;
  CltParams clt;
  FcltParams fclt;
  LilParams lil;
  MeanSquareParams meansq;
  CurveParams curve;
  std::size_t curve_min_replicas = 100;
};

struct RunConfig {
  ReproductionLaw law = ReproductionLaw::poisson_ages(1.0);
  RunSection run;
  VerifySection verify;
  std::string source;  // where it came from, for the echo

  // Canonical key=value lines of every resolved value, in a fixed order.
  std::string echo() const;
};

inline const std::vector<std::string>& known_suites() {
  static const std::vector<std::string> suites{"lln", "clt", "fclt", "lil", "meansq", "cdelta"};
  return suites;
}

// Schema validation happens here, before any computation.
RunConfig parse_run_config(const KeyValueFile& file);
RunConfig load_run_config(const std::filesystem::path& path);

// Law section alone, e.g. for the constants command.
ReproductionLaw parse_law(const KeyValueFile& file);

// Shortest round-trip decimal form of x.
std::string format_real(double x);

}  // namespace cmj
