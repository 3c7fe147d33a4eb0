#include "neuroclip/train.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <set>

#include "neuroclip/dsp.hpp"
#include "neuroclip/errors.hpp"

namespace neuroclip::train {

using ad::NodePtr;
using model::ModelParams;

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (lr_stage1 < 0.0 || lr_stage2 < 0.0)
        throw ConfigError("train: learning rates must be >= 0");
    if (encoder_lr_mult_stage2 < 0.0)
        throw ConfigError("train: encoder lr multiplier must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ConfigError("train: momentum must be in [0, 1)");
    if (clip_norm < 0.0) throw ConfigError("train: clip_norm must be >= 0");
}

TaskView TaskView::subset(const std::vector<std::size_t>& rows) const {
    TaskView v;
    v.task_id = task_id;
    v.head_id = head_id;
    v.n_classes = n_classes;
    v.positive_class = positive_class;
    for (std::size_t r : rows) {
        v.epoch_indices.push_back(epoch_indices.at(r));
        v.labels.push_back(labels.at(r));
    }
    return v;
}

std::vector<int> TaskView::subjects(const Dataset& ds) const {
    std::vector<int> out;
    out.reserve(epoch_indices.size());
    for (std::size_t i : epoch_indices) out.push_back(ds.epochs[i].subject_id);
    return out;
}

TaskView make_task_view(const Dataset& ds, const std::string& task_id,
                        int subject_filter) {
    TaskView v;
    v.task_id = task_id;
    v.head_id = task_id;
    if (task_id == "hc_mbt") {
        v.n_classes = 2;
        v.positive_class = 1;  // MBT
        for (std::size_t i = 0; i < ds.epochs.size(); ++i) {
            const auto& e = ds.epochs[i];
            if (subject_filter >= 0 && e.subject_id != subject_filter) continue;
            if (e.group_label == GroupLabel::HC) {
                v.epoch_indices.push_back(i);
                v.labels.push_back(0);
            } else if (e.group_label == GroupLabel::MBT) {
                v.epoch_indices.push_back(i);
                v.labels.push_back(1);
            }
        }
    } else if (task_id == "craving") {
        v.n_classes = 3;
        v.positive_class = 2;  // high craving
        for (std::size_t i = 0; i < ds.epochs.size(); ++i) {
            const auto& e = ds.epochs[i];
            if (subject_filter >= 0 && e.subject_id != subject_filter) continue;
            if (e.group_label != GroupLabel::MBT || e.cue_label != CueLabel::meth ||
                !e.craving_level)
                continue;
            v.epoch_indices.push_back(i);
            v.labels.push_back(static_cast<std::size_t>(*e.craving_level));
        }
    } else if (task_id == "mbt_mat") {
        v.n_classes = 2;
        v.positive_class = 1;  // MAT
        for (std::size_t i = 0; i < ds.epochs.size(); ++i) {
            const auto& e = ds.epochs[i];
            if (subject_filter >= 0 && e.subject_id != subject_filter) continue;
            if (e.group_label == GroupLabel::MBT) {
                v.epoch_indices.push_back(i);
                v.labels.push_back(0);
            } else if (e.group_label == GroupLabel::MAT) {
                v.epoch_indices.push_back(i);
                v.labels.push_back(1);
            }
        }
    } else {
        throw DataError("unknown task '" + task_id + "'");
    }
    std::set<std::size_t> present(v.labels.begin(), v.labels.end());
    if (present.size() < 2)
        throw DataError("task '" + task_id + "': fewer than 2 classes present");
    return v;
}

model::ModelParams make_model_for(const Dataset& ds, std::uint64_t seed) {
    if (ds.epochs.empty()) throw DataError("cannot size a model from an empty dataset");
    model::ModelDims dims;
    dims.eeg_channels = ds.epochs[0].eeg.rows();
    dims.fnirs_channels = ds.epochs[0].fnirs.rows();
    return model::make_model(dims, seed);
}

MultimodalEpoch preprocess_epoch(const MultimodalEpoch& e, bool zscore) {
    if (!zscore) return e;
    MultimodalEpoch out = e;
    out.eeg = dsp::zscore_epoch(e.eeg);
    out.fnirs = dsp::zscore_epoch(e.fnirs);
    return out;
}

namespace {

void check_finite_loss(double loss, std::size_t step) {
    if (!std::isfinite(loss))
        throw TrainingError("training diverged (non-finite loss) at step " +
                            std::to_string(step));
}

std::vector<MultimodalEpoch> preprocess_all(const Dataset& ds,
                                            const std::vector<std::size_t>& indices,
                                            bool zscore) {
    std::vector<MultimodalEpoch> out;
    out.reserve(indices.size());
    for (std::size_t i : indices) out.push_back(preprocess_epoch(ds.epochs[i], zscore));
    return out;
}

}  // namespace

std::vector<double> train_alignment(ModelParams& m, const Dataset& ds,
                                    const std::vector<std::size_t>& indices,
                                    const TrainConfig& cfg) {
    cfg.validate();
    if (indices.size() < 2)
        throw DataError("train_alignment: need at least 2 paired epochs");
    const auto epochs = preprocess_all(ds, indices, cfg.zscore_inputs);

    ad::SgdMomentum opt(cfg.lr_stage1, cfg.momentum, cfg.clip_norm);
    for (const auto& p : m.encoder_params()) opt.add_param(p);
    opt.add_param(m.align.tau);
    opt.add_param(m.align.beta);

    std::vector<std::size_t> order(epochs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> curve;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs_stage1; ++epoch) {
        std::mt19937_64 rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL + epoch));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            if (end - start < 2) continue;  // a 1-sample batch has no negatives
            std::vector<NodePtr> eeg_rows, fnirs_rows;
            for (std::size_t i = start; i < end; ++i) {
                const auto& ep = epochs[order[i]];
                eeg_rows.push_back(model::encode(m.eeg_enc, ep.eeg).pooled);
                fnirs_rows.push_back(model::encode(m.fnirs_enc, ep.fnirs).pooled);
            }
            NodePtr s = model::similarity_logits(ad::concat(eeg_rows, 0),
                                                 ad::concat(fnirs_rows, 0), m.align);
            NodePtr loss = model::contrastive_loss(s);
            check_finite_loss(loss->value.flat()[0], step);
            curve.push_back(loss->value.flat()[0]);
            opt.zero_grad();
            ad::backward(loss);
            opt.step();
            ++step;
        }
    }
    return curve;
}

namespace {

std::vector<double> train_classifier(
    const Dataset& ds, const TaskView& view, const TrainConfig& cfg, double lr,
    const std::vector<std::pair<NodePtr, double>>& opt_params,
    const std::function<NodePtr(const MultimodalEpoch&)>& logits_of) {
    cfg.validate();
    if (view.epoch_indices.empty()) throw DataError("training task has no epochs");
    const auto epochs = preprocess_all(ds, view.epoch_indices, cfg.zscore_inputs);

    ad::SgdMomentum opt(lr, cfg.momentum, cfg.clip_norm);
    for (const auto& [p, mult] : opt_params) opt.add_param(p, mult);

    std::vector<std::size_t> order(epochs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<double> curve;
    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
        std::mt19937_64 rng(cfg.seed ^ (0xc2b2ae3d27d4eb4fULL + epoch));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<NodePtr> logit_rows;
            std::vector<std::size_t> labels;
            for (std::size_t i = start; i < end; ++i) {
                logit_rows.push_back(logits_of(epochs[order[i]]));
                labels.push_back(view.labels[order[i]]);
            }
            NodePtr loss =
                ad::cross_entropy_logits(ad::concat(logit_rows, 0), labels);
            check_finite_loss(loss->value.flat()[0], step);
            curve.push_back(loss->value.flat()[0]);
            opt.zero_grad();
            ad::backward(loss);
            opt.step();
            ++step;
        }
    }
    return curve;
}

}  // namespace

std::vector<double> train_task(ModelParams& m, const Dataset& ds, const TaskView& view,
                               const TrainConfig& cfg) {
    if (!m.heads.count(view.head_id))
        model::add_head(m, view.head_id, view.n_classes, cfg.seed ^ 0xabcdef);

    std::vector<std::pair<NodePtr, double>> params;
    for (const auto& p : m.fusion_params()) params.emplace_back(p, 1.0);
    for (const auto& p : m.head_params(view.head_id)) params.emplace_back(p, 1.0);
    if (!cfg.freeze_encoders_stage2)
        for (const auto& p : m.encoder_params())
            params.emplace_back(p, cfg.encoder_lr_mult_stage2);

    return train_classifier(ds, view, cfg, cfg.lr_stage2, params,
                            [&](const MultimodalEpoch& ep) {
                                return model::forward_full(m, ep, view.head_id).logits;
                            });
}

std::vector<double> train_unimodal(ModelParams& m, const Dataset& ds,
                                   const TaskView& view, model::Modality mod,
                                   const TrainConfig& cfg) {
    if (!m.heads.count(view.head_id))
        model::add_head(m, view.head_id, view.n_classes, cfg.seed ^ 0xfedcba);

    const std::string prefix = mod == model::Modality::eeg ? "eeg." : "fnirs.";
    std::vector<std::pair<NodePtr, double>> params;
    for (const auto& [name, p] : m.named_params)
        if (name.rfind(prefix, 0) == 0) params.emplace_back(p, 1.0);
    for (const auto& p : m.head_params(view.head_id)) params.emplace_back(p, 1.0);

    return train_classifier(
        ds, view, cfg, cfg.lr_stage2, params, [&](const MultimodalEpoch& ep) {
            const Matrix& x = mod == model::Modality::eeg ? ep.eeg : ep.fnirs;
            return model::forward_unimodal(m, x, mod, view.head_id).logits;
        });
}

namespace {

std::size_t argmax_row(const ad::Tensor& t) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < t.cols(); ++c)
        if (t.at(0, c) > t.at(0, best)) best = c;
    return best;
}

}  // namespace

std::vector<std::size_t> predict_full(const ModelParams& m, const Dataset& ds,
                                      const TaskView& view, bool zscore_inputs) {
    std::vector<std::size_t> preds;
    preds.reserve(view.epoch_indices.size());
    for (std::size_t i : view.epoch_indices) {
        const auto ep = preprocess_epoch(ds.epochs[i], zscore_inputs);
        preds.push_back(argmax_row(model::forward_full(m, ep, view.head_id).logits->value));
    }
    return preds;
}

std::vector<std::size_t> predict_unimodal(const ModelParams& m, const Dataset& ds,
                                          const TaskView& view, model::Modality mod,
                                          bool zscore_inputs) {
    std::vector<std::size_t> preds;
    preds.reserve(view.epoch_indices.size());
    for (std::size_t i : view.epoch_indices) {
        const auto ep = preprocess_epoch(ds.epochs[i], zscore_inputs);
        const Matrix& x = mod == model::Modality::eeg ? ep.eeg : ep.fnirs;
        preds.push_back(
            argmax_row(model::forward_unimodal(m, x, mod, view.head_id).logits->value));
    }
    return preds;
}

metrics::Metrics evaluate_full(const ModelParams& m, const Dataset& ds,
                               const TaskView& view, bool zscore_inputs) {
    return metrics::compute_metrics(predict_full(m, ds, view, zscore_inputs), view.labels,
                                    view.positive_class, view.n_classes);
}

metrics::Metrics evaluate_unimodal(const ModelParams& m, const Dataset& ds,
                                   const TaskView& view, model::Modality mod,
                                   bool zscore_inputs) {
    return metrics::compute_metrics(predict_unimodal(m, ds, view, mod, zscore_inputs),
                                    view.labels, view.positive_class, view.n_classes);
}

}  // namespace neuroclip::train
