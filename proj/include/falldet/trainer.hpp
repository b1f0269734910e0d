#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "falldet/dataset.hpp"
#include "falldet/metrics.hpp"
#include "falldet/nn.hpp"
#include "falldet/synth.hpp"

namespace falldet::tr {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 32;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    uint64_t seed = 1;
    nn::LossConfig loss;
    bool augment = true;
    ds::AugmentConfig aug;
    // 0 sweeps the full training set every epoch; > 0 draws a class-balanced
    // subsample of at most this many windows per epoch (compute budgeting).
    int max_windows_per_epoch = 0;
    // > 1 parallelizes augmentation and tensor preparation across the batch;
    // the optimization order is unchanged, so results are bit-identical.
    int workers = 1;
    bool verbose = false;

    void validate() const;  // SpecError on non-positive fields
};

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    int best_epoch = -1;  // 0-based; the model holds these weights on return
    double best_val_loss = std::numeric_limits<double>::infinity();
};

// Decoupled-weight-decay Adam over a parameter store, step order = parameter
// order. Weight decay skips biases and other [1,N] rows.
struct AdamW {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8, weight_decay = 1e-4;
    int64_t t = 0;
    std::vector<std::vector<double>> m, v;

    void init(const nn::ParamStore& ps);
    void step(nn::ParamStore& ps, double lr_now);
};

// Cosine decay from base to 0 across the epoch count.
double cosine_lr(double base, int epoch, int total_epochs);

// Optimizes total_loss over the training windows; per-epoch validation loss;
// the best-validation weights (tie -> earlier epoch) are restored into the
// model before returning. Deterministic given (model seed, cfg.seed).
// Throws DivergenceError when the loss stops being finite.
TrainResult train(nn::FallModel& model, const std::vector<ds::WindowRecord>& train_set,
                  const std::vector<ds::WindowRecord>& val_set, const ds::NormStats& stats,
                  const TrainConfig& cfg);

// Fall probability per window, no-grad, parallel across windows with a
// deterministic output order.
std::vector<double> predict(const nn::FallModel& model, const std::vector<ds::WindowRecord>& set,
                            const ds::NormStats& stats);

// predict + compute_metrics with the set's labels and scenario tags.
ev::MetricsReport evaluate(const nn::FallModel& model, const std::vector<ds::WindowRecord>& set,
                           const ds::NormStats& stats, double threshold = 0.5);

// Trains one architecture variant per seed and evaluates each on the test
// split; headline rates are seed averages (AUC averaged when defined for
// every seed).
struct AblationOutcome {
    nn::AblationToggles toggles;
    std::vector<ev::MetricsReport> per_seed;
    double accuracy = 0.0;
    double balanced_accuracy = 0.0;
    double macro_f1 = 0.0;
    double fall_precision = 0.0;
    double fall_recall = 0.0;
    std::optional<double> auc;
};
AblationOutcome run_ablation(const nn::AblationToggles& toggles,
                             const std::vector<ds::WindowRecord>& train_set,
                             const std::vector<ds::WindowRecord>& val_set,
                             const std::vector<ds::WindowRecord>& test_set,
                             const TrainConfig& cfg, const std::vector<uint64_t>& seeds = {1, 2, 3});

// Clean, +-150 ms radar shift, 30% radar dropout, 30% vibration dropout.
struct RobustnessRow {
    std::string condition;
    ev::MetricsReport report;
};
std::vector<RobustnessRow> robustness_suite(const nn::FallModel& model,
                                            const std::vector<ds::WindowRecord>& test_set,
                                            const ds::NormStats& stats, uint64_t seed = 7);

// Wall-clock per-window costs of the online path (prepare_window) and the
// forward pass, medians and p95 over n_windows (>= 50), plus the analytic
// MAC count and the parameter count.
struct LatencyReport {
    double pre_ms_median = 0.0, pre_ms_p95 = 0.0;
    double inf_ms_median = 0.0, inf_ms_p95 = 0.0;
    double end_ms_median = 0.0, end_ms_p95 = 0.0;
    uint64_t macs = 0;
    uint64_t params = 0;
    int windows = 0;
};
LatencyReport latency_bench(const nn::FallModel& model, const synth::Recording& rec,
                            const ds::NormStats& stats, int n_windows);

}  // namespace falldet::tr
