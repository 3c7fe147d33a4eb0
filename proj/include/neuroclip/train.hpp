#pragma once

// Progressive training: stage 1 aligns the two encoders contrastively,
// stage 2 trains fusion, gating, and a task decoder head. Unimodal
// classifiers (single encoder + decoder head) back the saliency analysis
// and the single-modality baselines.

#include <cstdint>
#include <string>
#include <vector>

#include "neuroclip/dataset.hpp"
#include "neuroclip/metrics.hpp"
#include "neuroclip/model.hpp"

namespace neuroclip::train {

struct TrainConfig {
    std::size_t batch_size = 16;
    double lr_stage1 = 0.02;
    double lr_stage2 = 0.005;
    double encoder_lr_mult_stage2 = 0.1;
    double momentum = 0.9;
    double clip_norm = 5.0;  // global gradient-norm clip; 0 disables
    std::size_t epochs_stage1 = 20;
    std::size_t epochs_stage2 = 30;
    std::uint64_t seed = 0;
    bool freeze_encoders_stage2 = false;
    bool zscore_inputs = true;
    std::string task_id = "hc_mbt";

    void validate() const;
};

// A task is a labeled subset of the dataset's epochs.
struct TaskView {
    std::string task_id;
    std::string head_id;
    std::vector<std::size_t> epoch_indices;  // into Dataset::epochs
    std::vector<std::size_t> labels;         // aligned with epoch_indices
    std::size_t n_classes = 2;
    std::size_t positive_class = 1;

    TaskView subset(const std::vector<std::size_t>& rows) const;
    std::vector<int> subjects(const Dataset& ds) const;
};

// Known tasks: "hc_mbt" (group HC vs MBT), "craving" (3-way on MBT meth
// epochs), "mbt_mat" (pre vs post treatment; optionally one subject).
TaskView make_task_view(const Dataset& ds, const std::string& task_id,
                        int subject_filter = -1);

model::ModelParams make_model_for(const Dataset& ds, std::uint64_t seed);

// Stage 1 on the paired epochs at `indices` (contrastive objective).
// Returns the per-step loss curve. Throws TrainingError on divergence.
std::vector<double> train_alignment(model::ModelParams& m, const Dataset& ds,
                                    const std::vector<std::size_t>& indices,
                                    const TrainConfig& cfg);

// Stage 2: cross-entropy through fuse+gate+head on the view's rows.
std::vector<double> train_task(model::ModelParams& m, const Dataset& ds,
                               const TaskView& view, const TrainConfig& cfg);

// Single-modality classifier: encoder + decoder head only.
std::vector<double> train_unimodal(model::ModelParams& m, const Dataset& ds,
                                   const TaskView& view, model::Modality mod,
                                   const TrainConfig& cfg);

std::vector<std::size_t> predict_full(const model::ModelParams& m, const Dataset& ds,
                                      const TaskView& view, bool zscore_inputs);
std::vector<std::size_t> predict_unimodal(const model::ModelParams& m, const Dataset& ds,
                                          const TaskView& view, model::Modality mod,
                                          bool zscore_inputs);

metrics::Metrics evaluate_full(const model::ModelParams& m, const Dataset& ds,
                               const TaskView& view, bool zscore_inputs);
metrics::Metrics evaluate_unimodal(const model::ModelParams& m, const Dataset& ds,
                                   const TaskView& view, model::Modality mod,
                                   bool zscore_inputs);

// Per-epoch-per-channel z-score, the form the encoders train on.
MultimodalEpoch preprocess_epoch(const MultimodalEpoch& e, bool zscore);

}  // namespace neuroclip::train
