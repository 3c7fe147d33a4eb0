#include "neuroclip/harness.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "neuroclip/dsp.hpp"
#include "neuroclip/errors.hpp"

namespace neuroclip::harness {

using metrics::Metrics;
using model::ModelParams;
using train::TaskView;
using train::TrainConfig;

metrics::MetricsReport crossval(const Dataset& ds, const TaskView& view,
                                const folds::FoldPlan& plan, const TrainConfig& cfg,
                                std::size_t workers) {
    if (plan.assignment.size() != view.epoch_indices.size())
        throw DataError("crossval: plan covers " + std::to_string(plan.assignment.size()) +
                        " items, task has " + std::to_string(view.epoch_indices.size()));
    if (plan.scheme == folds::Scheme::loso)
        folds::assert_no_subject_leakage(plan, view.subjects(ds));

    std::vector<Metrics> fold_metrics(plan.n_folds);
    std::vector<std::exception_ptr> errors(plan.n_folds);

    auto run_fold = [&](std::size_t f) {
        try {
            const auto train_rows = plan.train_indices(f);
            const auto test_rows = plan.test_indices(f);
            if (train_rows.empty() || test_rows.empty())
                throw DataError("crossval: fold " + std::to_string(f) +
                                " has an empty train or test set");
            TaskView train_view = view.subset(train_rows);
            TaskView test_view = view.subset(test_rows);

            TrainConfig fold_cfg = cfg;
            fold_cfg.seed = cfg.seed + 1000003ULL * (f + 1);
            ModelParams m = train::make_model_for(ds, fold_cfg.seed);
            train::train_alignment(m, ds, train_view.epoch_indices, fold_cfg);
            train::train_task(m, ds, train_view, fold_cfg);
            fold_metrics[f] = train::evaluate_full(m, ds, test_view, cfg.zscore_inputs);
        } catch (...) {
            errors[f] = std::current_exception();
        }
    };

    workers = std::max<std::size_t>(1, workers);
    if (workers == 1) {
        for (std::size_t f = 0; f < plan.n_folds; ++f) run_fold(f);
    } else {
        std::vector<std::thread> pool;
        const std::size_t n_threads = std::min(workers, plan.n_folds);
        for (std::size_t w = 0; w < n_threads; ++w)
            pool.emplace_back([&, w]() {
                for (std::size_t f = w; f < plan.n_folds; f += n_threads) run_fold(f);
            });
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return metrics::aggregate_folds(fold_metrics);
}

namespace {

std::vector<double> embedding_of(const ModelParams& m, const MultimodalEpoch& e,
                                 bool zscore) {
    const auto ep = train::preprocess_epoch(e, zscore);
    auto node = model::fused_embedding(m, ep);
    return node->value.flat();
}

double euclidean(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace

ShiftReport normalization_shift(const ModelParams& m,
                                const std::vector<MultimodalEpoch>& mbt,
                                const std::vector<MultimodalEpoch>& mat,
                                const std::vector<MultimodalEpoch>& hc,
                                bool zscore_inputs) {
    if (mbt.empty() || mat.empty() || hc.empty())
        throw DataError("normalization_shift: every group must be nonempty");

    std::vector<std::vector<double>> hc_emb;
    hc_emb.reserve(hc.size());
    for (const auto& e : hc) hc_emb.push_back(embedding_of(m, e, zscore_inputs));
    std::vector<double> centroid(hc_emb[0].size(), 0.0);
    for (const auto& v : hc_emb)
        for (std::size_t i = 0; i < v.size(); ++i) centroid[i] += v[i];
    for (auto& c : centroid) c /= static_cast<double>(hc_emb.size());

    auto mean_dist = [&](const std::vector<MultimodalEpoch>& group) {
        double acc = 0.0;
        for (const auto& e : group)
            acc += euclidean(embedding_of(m, e, zscore_inputs), centroid);
        return acc / static_cast<double>(group.size());
    };

    ShiftReport r;
    r.n_hc = hc.size();
    r.n_mbt = mbt.size();
    r.n_mat = mat.size();
    r.mean_dist_mbt = mean_dist(mbt);
    r.mean_dist_mat = mean_dist(mat);
    r.ratio = r.mean_dist_mbt > 0.0 ? r.mean_dist_mat / r.mean_dist_mbt
                                    : std::numeric_limits<double>::quiet_NaN();
    return r;
}

ShiftReport normalization_shift(const ModelParams& m, const Dataset& ds,
                                bool zscore_inputs) {
    std::vector<MultimodalEpoch> mbt, mat, hc;
    for (const auto& e : ds.epochs) {
        switch (e.group_label) {
            case GroupLabel::HC: hc.push_back(e); break;
            case GroupLabel::MBT: mbt.push_back(e); break;
            case GroupLabel::MAT: mat.push_back(e); break;
        }
    }
    return normalization_shift(m, mbt, mat, hc, zscore_inputs);
}

PatientTaskResult run_patient_task(const Dataset& ds, ModelParams& backbone, int subject,
                                   double window_seconds, const TrainConfig& cfg,
                                   double test_fraction) {
    if (!(test_fraction > 0.0) || test_fraction >= 1.0)
        throw ConfigError("patient task: test_fraction must be in (0, 1)");
    TaskView source = train::make_task_view(ds, "mbt_mat", subject);

    const auto we = static_cast<std::size_t>(std::llround(window_seconds * ds.fs_eeg));
    const auto wf = static_cast<std::size_t>(std::llround(window_seconds * ds.fs_fnirs));
    if (we < 2 || wf < 2)
        throw ConfigError("patient task: window too short at the dataset rates");

    // Window every source epoch; windows inherit the source epoch's identity.
    Dataset windows;
    windows.fs_eeg = ds.fs_eeg;
    windows.fs_fnirs = ds.fs_fnirs;
    windows.epoch_seconds = window_seconds;
    windows.roi_names = ds.roi_names;
    windows.provenance = ds.provenance;
    std::vector<std::size_t> source_of_window;
    std::vector<std::size_t> window_labels;
    for (std::size_t row = 0; row < source.epoch_indices.size(); ++row) {
        const auto& src = ds.epochs[source.epoch_indices[row]];
        auto eeg_w = dsp::sliding_windows(src.eeg, we);
        auto fn_w = dsp::sliding_windows(src.fnirs, wf);
        const std::size_t n = std::min(eeg_w.size(), fn_w.size());
        for (std::size_t k = 0; k < n; ++k) {
            MultimodalEpoch w = src;
            w.eeg = std::move(eeg_w[k]);
            w.fnirs = std::move(fn_w[k]);
            windows.epochs.push_back(std::move(w));
            source_of_window.push_back(row);
            window_labels.push_back(source.labels[row]);
        }
    }
    if (windows.epochs.empty())
        throw DataError("patient task: no windows produced for subject " +
                        std::to_string(subject));

    // Split at the source-epoch level, stratified by label.
    std::map<std::size_t, std::vector<std::size_t>> rows_by_label;
    for (std::size_t row = 0; row < source.epoch_indices.size(); ++row)
        rows_by_label[source.labels[row]].push_back(row);
    std::set<std::size_t> test_rows;
    std::mt19937_64 rng(cfg.seed ^ 0x5bd1e995);
    for (auto& [label, rows] : rows_by_label) {
        std::shuffle(rows.begin(), rows.end(), rng);
        const auto n_test = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(test_fraction * rows.size())));
        for (std::size_t i = 0; i < n_test && i < rows.size() - 1; ++i)
            test_rows.insert(rows[i]);
    }

    TaskView all_windows;
    all_windows.task_id = "mbt_mat";
    all_windows.head_id = "mbt_mat_s" + std::to_string(subject);
    all_windows.n_classes = 2;
    all_windows.positive_class = 1;
    for (std::size_t w = 0; w < windows.epochs.size(); ++w) {
        all_windows.epoch_indices.push_back(w);
        all_windows.labels.push_back(window_labels[w]);
    }

    std::vector<std::size_t> train_sel, test_sel;
    for (std::size_t w = 0; w < windows.epochs.size(); ++w)
        (test_rows.count(source_of_window[w]) ? test_sel : train_sel).push_back(w);
    // No source epoch may straddle the split.
    for (std::size_t w : train_sel)
        if (test_rows.count(source_of_window[w]))
            throw DataError("patient task: window split leaks a source epoch");

    TaskView train_view = all_windows.subset(train_sel);
    TaskView test_view = all_windows.subset(test_sel);

    train::train_task(backbone, windows, train_view, cfg);

    PatientTaskResult res;
    res.subject = subject;
    res.n_train_windows = train_sel.size();
    res.n_test_windows = test_sel.size();
    res.test_metrics =
        train::evaluate_full(backbone, windows, test_view, cfg.zscore_inputs);
    return res;
}

namespace {

Matrix mbll_epoch(const Matrix& fnirs, const dsp::MbllParams& params) {
    if (fnirs.rows() % 2 != 0)
        throw DataError("mbll preprocessing expects wavelength-interleaved channel "
                        "pairs; channel count is odd");
    const std::size_t C = fnirs.rows() / 2, T = fnirs.cols();
    Matrix wl1(C, T), wl2(C, T);
    std::vector<double> base1(C), base2(C);
    for (std::size_t c = 0; c < C; ++c) {
        double m1 = 0.0, m2 = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            wl1(c, t) = fnirs(2 * c, t);
            wl2(c, t) = fnirs(2 * c + 1, t);
            m1 += wl1(c, t);
            m2 += wl2(c, t);
        }
        base1[c] = m1 / static_cast<double>(T);
        base2[c] = m2 / static_cast<double>(T);
    }
    return dsp::mbll_convert(wl1, wl2, base1, base2, params);
}

}  // namespace

Dataset preprocess_dataset(const Dataset& in, const Config& cfg) {
    Dataset out = in;

    const bool eeg_bp = cfg.get_bool("eeg.bandpass.enabled", true);
    dsp::FilterSpec eeg_spec;
    eeg_spec.low_hz = cfg.get_double("eeg.bandpass.low_hz", 4.0);
    eeg_spec.high_hz = cfg.get_double("eeg.bandpass.high_hz", 45.0);
    eeg_spec.order = static_cast<int>(cfg.get_int("eeg.bandpass.order", 4));
    const double eeg_down = cfg.get_double("eeg.downsample_to", 0.0);
    const bool eeg_z = cfg.get_bool("eeg.zscore", true);

    const bool mbll = cfg.get_bool("fnirs.mbll.enabled", false);
    dsp::MbllParams mbll_params;
    if (cfg.has("fnirs.mbll.extinction")) {
        const auto e = cfg.get_doubles("fnirs.mbll.extinction");
        if (e.size() != 4)
            throw ConfigError("fnirs.mbll.extinction needs 4 comma-separated values");
        mbll_params.extinction = {{{e[0], e[1]}, {e[2], e[3]}}};
    }
    if (cfg.has("fnirs.mbll.dpf")) {
        const auto d = cfg.get_doubles("fnirs.mbll.dpf");
        if (d.size() != 2) throw ConfigError("fnirs.mbll.dpf needs 2 values");
        mbll_params.dpf = {d[0], d[1]};
    }
    mbll_params.distance_cm = cfg.get_double("fnirs.mbll.distance_cm", 3.0);

    const bool fnirs_bp = cfg.get_bool("fnirs.bandpass.enabled", true);
    dsp::FilterSpec fnirs_spec;
    fnirs_spec.low_hz = cfg.get_double("fnirs.bandpass.low_hz", 0.01);
    fnirs_spec.high_hz = cfg.get_double("fnirs.bandpass.high_hz", 0.2);
    fnirs_spec.order = static_cast<int>(cfg.get_int("fnirs.bandpass.order", 4));
    const bool fnirs_z = cfg.get_bool("fnirs.zscore", true);

    const bool roi = cfg.get_bool("fnirs.roi.enabled", false);
    dsp::RoiMap roi_map;
    if (roi) {
        if (cfg.has("fnirs.roi.names"))
            roi_map.roi_names = cfg.get_strings("fnirs.roi.names");
        if (cfg.has("fnirs.roi.channel_map")) {
            for (double v : cfg.get_doubles("fnirs.roi.channel_map"))
                roi_map.channel_to_roi.push_back(static_cast<std::size_t>(v));
        }
        if (cfg.has("fnirs.roi.excluded"))
            for (double v : cfg.get_doubles("fnirs.roi.excluded"))
                roi_map.excluded_rois.insert(static_cast<std::size_t>(v));
        if (cfg.has("fnirs.roi.bad_channels"))
            for (double v : cfg.get_doubles("fnirs.roi.bad_channels"))
                roi_map.bad_channels.insert(static_cast<std::size_t>(v));
        if (roi_map.roi_names.empty() || roi_map.channel_to_roi.empty())
            throw ConfigError(
                "fnirs.roi.enabled requires fnirs.roi.names and fnirs.roi.channel_map");
    }

    for (auto& e : out.epochs) {
        Matrix eeg = e.eeg;
        if (eeg_bp) eeg = dsp::bandpass_filter(eeg, eeg_spec, out.fs_eeg);
        if (eeg_down > 0.0) eeg = dsp::downsample(eeg, out.fs_eeg, eeg_down);
        if (eeg_z) eeg = dsp::zscore_epoch(eeg);
        e.eeg = std::move(eeg);

        Matrix fn = e.fnirs;
        if (mbll) fn = mbll_epoch(fn, mbll_params);
        if (fnirs_bp) fn = dsp::bandpass_filter(fn, fnirs_spec, out.fs_fnirs);
        if (roi) fn = dsp::map_rois(fn, roi_map);
        if (fnirs_z) fn = dsp::zscore_epoch(fn);
        e.fnirs = std::move(fn);
    }
    if (eeg_down > 0.0) out.fs_eeg = eeg_down;
    if (roi) {
        out.roi_names.clear();
        for (std::size_t r = 0; r < roi_map.roi_names.size(); ++r)
            if (!roi_map.excluded_rois.count(r)) out.roi_names.push_back(roi_map.roi_names[r]);
    }
    return out;
}

}  // namespace neuroclip::harness
