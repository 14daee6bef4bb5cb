#pragma once

#include "fpp/errors.hpp"
#include "fpp/fpp_sim.hpp"
#include "fpp/mom.hpp"
#include "fpp/neural.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace fpp {

struct TrainSpec {
    double split_fraction{0.8};        // train share; the rest is the test partition
    double validation_fraction{0.1};   // carved from the train share for checkpointing
    std::size_t epochs{100};
    double lr{1e-3};
    std::size_t batch_size{64};
    std::uint64_t shuffle_seed{0};
    std::size_t early_metrics_cadence{1};  // epochs between progress callbacks
    double max_grad_norm{0.0};             // 0 disables clipping
    unsigned threads{1};

    void validate() const;
};

/// Disjoint row indices. Deterministic in (n, split_fraction, validation_fraction, shuffle_seed).
struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
    std::vector<std::size_t> test;
};

[[nodiscard]] Split make_split(std::size_t n, const TrainSpec& spec);

struct EpochRecord {
    std::size_t epoch{};
    double train_loss{};
    double val_loss{};
};

/// Training stopped because the loss became non-finite.
class TrainingDiverged : public NumericalError {
public:
    TrainingDiverged(const std::string& what, std::size_t epoch, std::size_t batch)
        : NumericalError(what), epoch_(epoch), batch_(batch) {}
    [[nodiscard]] std::size_t epoch() const noexcept { return epoch_; }
    [[nodiscard]] std::size_t batch() const noexcept { return batch_; }

private:
    std::size_t epoch_;
    std::size_t batch_;
};

struct TrainResult {
    LstmWeights best;           // lowest validation loss
    LstmWeights final_weights;  // after the last epoch
    AdamState optimizer;        // state matching final_weights
    std::vector<EpochRecord> curve;
    std::size_t best_epoch{};
    double wall_clock_seconds{};
    Split split;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch Adam on the MSE loss. Per-sample gradients are reduced in
/// row order, so results do not depend on spec.threads.
[[nodiscard]] TrainResult train(const LabeledDataset& data, const TrainSpec& spec,
                                const ModelConfig& config, const EpochCallback& on_epoch = {});

struct Metrics {
    double mse{};
    double rmse{};
    double mae{};
    double r2{};
};

struct EvalReport {
    Metrics overall;  // pooled over both parameters on raw scales
    Metrics mu;
    Metrics beta;
    double wall_clock_train{};
    double wall_clock_infer_per_batch{};
    std::size_t infer_batch_size{};
    std::size_t n_test{};
};

/// Maps an (n x seq_len) window matrix to an (n x 2) prediction matrix.
using Predictor = std::function<Matrix(const Matrix&)>;

[[nodiscard]] Predictor lstm_predictor(const LstmWeights& weights, unsigned threads = 1);

/// Metrics only; R^2 is per parameter against its label variance, and pooled
/// as 1 - (sum of residual squares) / (sum of per-parameter total squares).
[[nodiscard]] EvalReport evaluate_predictions(const Matrix& predictions, const Matrix& labels);

/// Metrics plus median inference time per batch of `batch_size` rows.
[[nodiscard]] EvalReport evaluate(const Predictor& model, const LabeledDataset& test_set,
                                  std::size_t batch_size = 64, std::size_t timing_reps = 20);

struct ComparisonReport {
    std::size_t n_rows{};
    std::size_t n_mom_valid{};
    std::size_t n_mom_invalid{};
    bool baseline_failed{false};
    double lstm_mse_all{};     // pooled, every test row
    double lstm_mse{};         // pooled, rows where MOM is valid
    double mom_mse{};          // pooled, rows where MOM is valid
    Metrics lstm_mu, lstm_beta, mom_mu, mom_beta;  // on the MOM-valid rows
    double improvement{};      // 1 - lstm_mse / mom_mse
    double lstm_seconds{};     // median over repetitions, whole timing batch
    double mom_seconds{};
    std::size_t timing_rows{};
    std::size_t timing_reps{};
    double speed_ratio{};      // mom_seconds / lstm_seconds
};

/// Both estimators see identical windows; timing is single-threaded.
[[nodiscard]] ComparisonReport compare_with_mom(const Predictor& model, const LabeledDataset& test_set,
                                                const ClipPolicy& clip = {},
                                                std::size_t timing_rows = 2000,
                                                std::size_t timing_reps = 20);

struct ColumnSummary {
    std::size_t n{};
    double mean_mu{};
    double mean_beta{};
    std::optional<double> sd_mu;  // absent when n < 2
    std::optional<double> sd_beta;
};

struct SamplingStudy {
    FppParams truth;
    std::size_t n_paths{};
    std::size_t seq_len{};
    ColumnSummary mom;
    std::size_t mom_excluded{};  // rows without usable MOM numbers
    std::optional<ColumnSummary> lstm;
};

/// n_paths independent windows at `truth`; path k uses stream derive_seed(seed, k).
/// MOM column keeps every row with finite numbers (clamped rows included).
[[nodiscard]] SamplingStudy sampling_distribution_study(const FppParams& truth, std::size_t n_paths,
                                                        std::size_t seq_len, std::uint64_t seed,
                                                        const LstmWeights* model = nullptr,
                                                        const ClipPolicy& clip = {});

enum class AblationAxis { epochs, samples, seq_len, lr, hidden, batch };

[[nodiscard]] std::string to_string(AblationAxis a);
[[nodiscard]] AblationAxis parse_axis(const std::string& name);
[[nodiscard]] std::vector<double> default_ablation_values(AblationAxis a);

struct AblationBase {
    DatasetSpec data;
    TrainSpec train;
    ModelConfig model;
};

struct AblationCell {
    double value{};
    EvalReport report;
};

struct AblationGrid {
    AblationAxis axis{};
    std::vector<double> values;
    std::vector<AblationCell> cells;
};

/// One train/evaluate run per value with everything else held at `base`.
/// Throws ConfigError for non-increasing or out-of-domain values.
[[nodiscard]] AblationGrid run_ablation(AblationAxis axis, const std::vector<double>& values,
                                        const AblationBase& base,
                                        const std::function<void(const AblationCell&)>& on_cell = {});

// Output files. Column orders are fixed:
//   loss_curve.csv     epoch,train_loss,val_loss
//   ablation_<axis>.csv value,rmse,mae,r2
[[nodiscard]] std::string loss_curve_csv(const std::vector<EpochRecord>& curve);
[[nodiscard]] std::string ablation_csv(const AblationGrid& grid);
[[nodiscard]] std::string report_json(const EvalReport& report);
[[nodiscard]] std::string comparison_json(const ComparisonReport& report);
[[nodiscard]] std::string study_json(const SamplingStudy& study);

}  // namespace fpp
