#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcrfm/config.hpp"
#include "mcrfm/datahub.hpp"
#include "mcrfm/model.hpp"
#include "mcrfm/objective.hpp"

namespace mcrfm::train {

inline constexpr const char* kReportSchema = "mcrfm-run-report/1";

/// Projected support, prototype bank and task context on one tape.
struct SupportState {
  projector::Projection proj;
  task::PrototypeBank bank;
  ad::Var ctx;
};

/// Prototype values held fixed across the batches of an epoch.
struct FrozenBank {
  Matrix p_h, p_e;
};

/// Projects the support rows and builds prototypes and context. With
/// `frozen`, the bank is a tape constant holding those values.
SupportState encode_support(const BoundAdapter& b, ad::Tape& tape, const Matrix& support_x,
                            const std::vector<int>& labels, std::size_t num_classes, const Config& cfg,
                            const FrozenBank* frozen = nullptr);

struct StepOutput {
  objective::Total total;
  double mean_g = 0.5;
  double mean_beta = 0.5;
  std::vector<double> gaps;  // transported hyperbolic states, when recorded
};

/// Full objective for the support rows `rows` at times `t` (rows.size() x 1):
/// interpolation toward the class prototypes, chart-space targets, gated flow
/// matching, nfe-step transport of z_0 and smoothed cross-entropy on the
/// hybrid logits at z_T.
StepOutput batch_objective(const BoundAdapter& b, const SupportState& s, const std::vector<int>& labels,
                           const std::vector<std::size_t>& rows, const Matrix& t, int epoch,
                           const Config& cfg, bool record_gaps);

/// Convenience for gradient checks: a fresh tape, the whole objective, and
/// optionally backward into the parameter grads (zeroed first).
double loss_value(AdapterParams& params, const Matrix& support_x, const std::vector<int>& labels,
                  const std::vector<std::size_t>& rows, const Matrix& t, int epoch, const Config& cfg,
                  bool with_grad);

/// Times in [eps_t, 1 - eps_t] for batch `batch` of epoch `epoch`.
Matrix sample_times(std::uint64_t seed, int epoch, int batch, std::size_t n, double eps_t);
/// Support visiting order for one epoch.
std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n);

struct Inference {
  std::vector<int> predictions;
  Matrix logits;
  std::vector<double> gaps;
  double mean_g = 0.5;
  double mean_beta = 0.5;
};

/// Prototypes and context from the support only; queries are transported
/// and classified in independent chunks.
Inference infer(AdapterParams& params, const Matrix& support_x, const std::vector<int>& support_y,
                const Matrix& query_x, const Config& cfg, bool record_gaps = true);

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

/// Mean |v - u*|^2 over support rows on the grid t = 0.1, ..., 0.9.
double fm_grid_residual(AdapterParams& params, const Matrix& support_x, const std::vector<int>& labels,
                        const Config& cfg);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double grad_norm = 0.0;  // pre-clip, mean over batches
  objective::LossBreakdown loss;  // batch means
  std::optional<double> ratio_median;  // median L_fm_h / L_fm_e over batches
  double mean_g = 0.5;
};

struct StabilityReport {
  std::optional<double> gap_min, gap_median;
  std::vector<std::optional<double>> ratio_per_epoch;
  std::optional<double> ratio_median;
  bool gate_learned = false;
  bool ratio_applicable = false;
  bool collapse = false;
  bool boundary_risk = false;
  bool loss_imbalance = false;
};

StabilityReport diagnostics(const std::vector<EpochRecord>& epochs, const std::vector<double>& gaps,
                            const Config& cfg);
nlohmann::json to_json(const StabilityReport& s);

struct TrainOptions {
  std::string checkpoint_stem;        // written when non-empty
  std::string checkpoint_label;       // path recorded in the report
  std::ostream* log = nullptr;        // JSON lines, one per epoch
};

struct TrainResult {
  nlohmann::json report;
  AdapterParams params;
  Config config;  // with feature_dim filled in
};

/// Trains one adapter on the episode's support set and evaluates on its queries.
TrainResult train_episode(const data::FeatureCache& cache, const data::Episode& episode, const Config& cfg,
                          const TrainOptions& options = {});

/// Metadata stored in checkpoints written by train_episode.
nlohmann::json checkpoint_metadata(const Config& cfg, std::size_t num_classes, const std::string& cache_hash);
/// Rebuilds parameters from a checkpoint; returns the stored config too.
TrainResult load_checkpoint(const std::string& stem);

}  // namespace mcrfm::train
