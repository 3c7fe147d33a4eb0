#pragma once

// Orchestration: cross-validation over fresh per-fold models, the
// feature-space normalization-shift analysis, the patient-specific
// sliding-window task, and the config-driven preprocessing pipeline.

#include <cstddef>
#include <string>
#include <vector>

#include "neuroclip/config.hpp"
#include "neuroclip/dataset.hpp"
#include "neuroclip/folds.hpp"
#include "neuroclip/metrics.hpp"
#include "neuroclip/model.hpp"
#include "neuroclip/train.hpp"

namespace neuroclip::harness {

// Trains a fresh two-stage model per fold and evaluates on the fold's test
// rows. LOSO plans are leakage-checked (hard failure). Fold work may run on
// `workers` threads; results are deterministic for fixed (ds, plan, cfg).
metrics::MetricsReport crossval(const Dataset& ds, const train::TaskView& view,
                                const folds::FoldPlan& plan,
                                const train::TrainConfig& cfg, std::size_t workers = 1);

struct ShiftReport {
    double mean_dist_mbt = 0.0;  // mean distance of MBT embeddings to the HC centroid
    double mean_dist_mat = 0.0;
    double ratio = 0.0;  // mean_dist_mat / mean_dist_mbt
    std::size_t n_hc = 0, n_mbt = 0, n_mat = 0;
};

ShiftReport normalization_shift(const model::ModelParams& m,
                                const std::vector<MultimodalEpoch>& mbt,
                                const std::vector<MultimodalEpoch>& mat,
                                const std::vector<MultimodalEpoch>& hc,
                                bool zscore_inputs = true);
ShiftReport normalization_shift(const model::ModelParams& m, const Dataset& ds,
                                bool zscore_inputs = true);

// Sliding-window augmentation (50% overlap) of one subject's pre/post epochs;
// windows from the same source epoch never split across train and test.
struct PatientTaskResult {
    int subject = -1;
    metrics::Metrics test_metrics;
    std::size_t n_train_windows = 0, n_test_windows = 0;
};
PatientTaskResult run_patient_task(const Dataset& ds, model::ModelParams& backbone,
                                   int subject, double window_seconds,
                                   const train::TrainConfig& cfg,
                                   double test_fraction = 0.25);

// Applies the configured filter/downsample/MBLL/ROI/z-score chain.
Dataset preprocess_dataset(const Dataset& in, const Config& cfg);

}  // namespace neuroclip::harness
