#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cmj/analysis.hpp"
#include "cmj/engine.hpp"
#include "cmj/malthusian.hpp"

namespace cmj {

// paths.csv: replica,t,W_t,Q_t,N_t,frontier_count,extinct,guard_tripped
void write_paths_csv(std::ostream& out, const Ensemble& ensemble);
// generations.csv: replica,n,Z_n,complete  (complete = n < complete_generations)
void write_generations_csv(std::ostream& out, const Ensemble& ensemble);

// Inverse of the two writers. The horizon is not in the CSVs and is passed in.
Ensemble read_ensemble_csv(std::istream& paths, std::istream& generations, double horizon);

// Reads the `horizon` entry of a manifest written by write_manifest.
double read_manifest_horizon(const std::filesystem::path& manifest);

struct ManifestInfo {
  std::string config_echo;
  double horizon = 0.0;
  double age_cap = 0.0;
  double truncation_bound = 0.0;
  std::uint64_t master_seed = 0;
  double wall_seconds = 0.0;
};

void write_manifest(std::ostream& out, const ManifestInfo& info, const ModelConstants& constants,
                    const Ensemble& ensemble);

// Constants as `name = value  # provenance` lines, then one CSV header + row.
void write_constants_text(std::ostream& out, const std::vector<SourcedValue>& values);
void write_constants_csv(std::ostream& out, const std::vector<SourcedValue>& values);

// Flat key=value block: suite, verdict, exclusions, constants, checks, statistics.
void write_report_text(std::ostream& out, const VerificationReport& report, const std::string& config_echo);
// kind,name,value,lower,upper,passed
void write_report_csv(std::ostream& out, const VerificationReport& report);
// Histogram script + data for residual suites, heat map for fclt. Returns
// the files written.
std::vector<std::filesystem::path> write_gnuplot(const std::filesystem::path& dir, const VerificationReport& report);

void write_variance_curve_csv(std::ostream& out, const VarianceCurve& curve);
void write_c_delta_csv(std::ostream& out, const CDeltaTable& table);

}  // namespace cmj
