#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcrfm/config.hpp"
#include "mcrfm/datahub.hpp"

namespace mcrfm::cli {

inline constexpr const char* kConsolidatedSchema = "mcrfm-consolidated";
inline constexpr int kConsolidatedVersion = 1;

/// Entry point behind tools/mcrfm_cli. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// One training run inside an output directory laid out as
/// reports/, checkpoints/, episodes/ and logs/.
struct RunJob {
  std::string name;  // file stem shared by report, checkpoint and log
  Config config;
  int shots = 4;
  std::optional<data::Episode> episode;  // sampled/persisted per seed when empty
};

/// Loads or creates the persisted episode for (shots, seed).
data::Episode episode_for(const std::string& out_dir, const data::FeatureCache& cache, int shots, std::uint64_t seed);

/// Trains one job and writes its artifacts; returns the report.
nlohmann::json run_job(const std::string& out_dir, const data::FeatureCache& cache, const RunJob& job);

/// Runs jobs on up to `jobs` threads; report order follows `list`.
std::vector<nlohmann::json> run_jobs(const std::string& out_dir, const data::FeatureCache& cache,
                                     const std::vector<RunJob>& list, int jobs);

/// Mean and sample standard deviation (0 for a single value).
std::pair<double, double> mean_std(const std::vector<double>& v);

/// Consolidated table over variants x seeds. `reports` is grouped by
/// variant in the order of `variants`, seeds innermost.
nlohmann::json consolidate_ablation(const std::vector<std::string>& variants, const std::vector<std::uint64_t>& seeds,
                                    const std::vector<nlohmann::json>& reports, const nlohmann::json& metadata);

/// Report file stem for a variant, shot count and seed.
std::string run_name(const std::string& variant, int shots, std::uint64_t seed);

}  // namespace mcrfm::cli
