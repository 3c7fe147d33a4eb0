#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "neuroclip/config.hpp"
#include "neuroclip/errors.hpp"
#include "neuroclip/folds.hpp"
#include "neuroclip/harness.hpp"
#include "neuroclip/metrics.hpp"
#include "neuroclip/stats.hpp"
#include "neuroclip/train.hpp"

using namespace neuroclip;

namespace {

SynthConfig tiny_cfg(std::uint64_t seed = 5) {
    SynthConfig c;
    c.n_subjects_per_group = 3;
    c.epochs_per_subject = 8;
    c.fs_eeg = 16.0;
    c.fs_fnirs = 4.0;
    c.epoch_seconds = 7.0;
    c.fnirs_onset_delay = 1.5;
    c.stim_seconds = 0.5;
    c.hrf_peak_s = 0.25;
    c.hrf_undershoot_s = 16.0 / 6.0 * 0.25;
    c.noise_sd = 0.3;
    c.subject_effect_sd = 0.1;
    c.seed = seed;
    return c;
}

train::TrainConfig quick_train(std::uint64_t seed = 1) {
    train::TrainConfig t;
    t.epochs_stage1 = 2;
    t.epochs_stage2 = 3;
    t.batch_size = 8;
    t.seed = seed;
    return t;
}

// Independent Wilcoxon oracle: builds the exact W+ distribution by dynamic
// programming over rank inclusion (vs the implementation's bitmask sweep).
double oracle_wilcoxon_p(const std::vector<double>& ranks, double w) {
    std::map<long long, double> dist;  // key: W in half-units to stay exact
    dist[0] = 1.0;
    for (double r : ranks) {
        std::map<long long, double> next;
        const long long key = std::llround(2.0 * r);
        for (const auto& [sum, cnt] : dist) {
            next[sum] += cnt;
            next[sum + key] += cnt;
        }
        dist = std::move(next);
    }
    double total = 0.0, le = 0.0, ge = 0.0;
    const long long wk = std::llround(2.0 * w);
    for (const auto& [sum, cnt] : dist) {
        total += cnt;
        if (sum <= wk) le += cnt;
        if (sum >= wk) ge += cnt;
    }
    return std::min(1.0, 2.0 * std::min(le / total, ge / total));
}

std::vector<double> midranks(std::vector<double> absd) {
    std::vector<std::size_t> order(absd.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return absd[a] < absd[b]; });
    std::vector<double> ranks(absd.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && absd[order[j]] == absd[order[i]]) ++j;
        const double mid = (static_cast<double>(i + j - 1)) / 2.0 + 1.0;
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mid;
        i = j;
    }
    return ranks;
}

}  // namespace

TEST_CASE("metrics: perfect and fully wrong predictions") {
    auto all_right = metrics::compute_metrics({0, 1, 1, 0}, {0, 1, 1, 0}, 1, 2);
    CHECK(all_right.accuracy == doctest::Approx(1.0));
    CHECK(all_right.sensitivity == doctest::Approx(1.0));
    CHECK(all_right.f1 == doctest::Approx(1.0));

    auto all_wrong = metrics::compute_metrics({1, 0, 0, 1}, {0, 1, 1, 0}, 1, 2);
    CHECK(all_wrong.accuracy == doctest::Approx(0.0));
    CHECK(all_wrong.sensitivity == doctest::Approx(0.0));
}

TEST_CASE("metrics: hand-computed confusion counts") {
    // TP=3, FN=1, FP=2, TN=4
    std::vector<std::size_t> labels, preds;
    for (int i = 0; i < 3; ++i) { labels.push_back(1); preds.push_back(1); }
    labels.push_back(1); preds.push_back(0);
    for (int i = 0; i < 2; ++i) { labels.push_back(0); preds.push_back(1); }
    for (int i = 0; i < 4; ++i) { labels.push_back(0); preds.push_back(0); }
    auto m = metrics::compute_metrics(preds, labels, 1, 2);
    CHECK(m.sensitivity == doctest::Approx(0.75));
    CHECK(m.precision == doctest::Approx(0.6));
    CHECK(m.accuracy == doctest::Approx(0.7));
    CHECK(m.f1 == doctest::Approx(2.0 * 0.6 * 0.75 / 1.35));
}

TEST_CASE("metrics: micro accuracy equals one minus Hamming error") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::size_t> preds, labels;
        std::size_t wrong = 0;
        for (int i = 0; i < 60; ++i) {
            labels.push_back(rng() % 3);
            preds.push_back(rng() % 3);
            if (preds.back() != labels.back()) ++wrong;
        }
        auto m = metrics::compute_metrics(preds, labels, 2, 3);
        CHECK(m.accuracy ==
              doctest::Approx(1.0 - static_cast<double>(wrong) / 60.0).epsilon(1e-12));
        CHECK(m.micro_precision == doctest::Approx(m.accuracy));
        CHECK(m.micro_f1 == doctest::Approx(m.accuracy));
    }
}

TEST_CASE("metrics: label outside class set") {
    CHECK_THROWS_AS(metrics::compute_metrics({0, 3}, {0, 1}, 1, 2), DataError);
}

TEST_CASE("wilcoxon: five positive differences give W=15, p=0.0625 exactly") {
    auto r = stats::wilcoxon_signed_rank({0, 0, 0, 0, 0}, {1, 2, 3, 4, 5});
    CHECK(r.w_statistic == doctest::Approx(15.0));
    CHECK(r.p_two_sided == doctest::Approx(0.0625).epsilon(1e-15));
    CHECK(r.exact);
    CHECK(r.n_effective == 5);
}

TEST_CASE("wilcoxon: swapping pre and post leaves p unchanged") {
    std::vector<double> a{1.0, 4.0, 2.5, 7.0, 3.0, 8.0};
    std::vector<double> b{2.0, 3.5, 2.0, 9.0, 1.0, 9.5};
    auto r1 = stats::wilcoxon_signed_rank(a, b);
    auto r2 = stats::wilcoxon_signed_rank(b, a);
    CHECK(r1.p_two_sided == doctest::Approx(r2.p_two_sided).epsilon(1e-12));
}

TEST_CASE("wilcoxon: zero differences dropped; fully-zero data rejected") {
    auto r = stats::wilcoxon_signed_rank({1, 2, 3}, {1, 5, 0});
    CHECK(r.n_effective == 2);
    CHECK_THROWS_AS(stats::wilcoxon_signed_rank({1, 2}, {1, 2}), DataError);
}

TEST_CASE("wilcoxon: exact path agrees with dynamic-programming oracle") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 3 + rng() % 8;  // 3..10
        std::vector<double> pre(n, 0.0), post(n), diffs;
        for (std::size_t i = 0; i < n; ++i) {
            double d = 0.0;
            while (d == 0.0) d = static_cast<double>(static_cast<int>(rng() % 11)) - 5.0;
            post[i] = d;
            diffs.push_back(std::abs(d));
        }
        auto r = stats::wilcoxon_signed_rank(pre, post);
        const double oracle = oracle_wilcoxon_p(midranks(diffs), r.w_statistic);
        CHECK(std::abs(r.p_two_sided - oracle) < 1e-12);
    }
}

TEST_CASE("wilcoxon: large-n normal approximation is close to exact at n=20") {
    std::mt19937_64 rng(23);
    std::vector<double> pre(20, 0.0), post(20);
    for (auto& v : post) v = static_cast<double>(static_cast<int>(rng() % 9)) - 3.5;
    auto exact = stats::wilcoxon_signed_rank(pre, post);
    REQUIRE(exact.exact);
    // Push past the exact threshold by adding pairs with zero difference plus
    // new nonzero ones.
    std::vector<double> pre2 = pre, post2 = post;
    for (int i = 0; i < 5; ++i) {
        pre2.push_back(0.0);
        post2.push_back((i % 2 == 0 ? 1.0 : -1.0) * (4.5 + i));
    }
    auto approx = stats::wilcoxon_signed_rank(pre2, post2);
    CHECK(!approx.exact);
    CHECK(approx.p_two_sided > 0.0);
    CHECK(approx.p_two_sided <= 1.0);
}

TEST_CASE("craving labels reproduce the published stimulus categorization") {
    std::vector<std::pair<std::string, double>> scores = {
        {"Meth13", 94.14}, {"Meth11", 94.00}, {"Meth23", 93.93}, {"Meth43", 93.79},
        {"Meth77", 93.64}, {"Meth98", 93.21}, {"Meth62", 93.11}, {"Meth48", 92.54},
        {"Meth101", 92.50}, {"Meth68", 92.46}, {"Meth46", 92.40}, {"Meth94", 92.21},
        {"Meth73", 92.21}, {"Meth69", 92.18}, {"Meth01", 92.07}};
    auto labels = stats::craving_level_labels(scores);
    std::map<std::string, CravingLevel> by_id(labels.begin(), labels.end());
    CHECK(by_id["Meth13"] == CravingLevel::high);
    CHECK(by_id["Meth77"] == CravingLevel::high);
    CHECK(by_id["Meth98"] == CravingLevel::medium);
    CHECK(by_id["Meth68"] == CravingLevel::medium);
    CHECK(by_id["Meth46"] == CravingLevel::low);
    CHECK(by_id["Meth01"] == CravingLevel::low);
}

TEST_CASE("craving labels: three distinct scores, one per level") {
    auto labels = stats::craving_level_labels({{"a", 3.0}, {"b", 2.0}, {"c", 1.0}});
    CHECK(labels[0] == std::pair<std::string, CravingLevel>{"a", CravingLevel::high});
    CHECK(labels[1] == std::pair<std::string, CravingLevel>{"b", CravingLevel::medium});
    CHECK(labels[2] == std::pair<std::string, CravingLevel>{"c", CravingLevel::low});
}

TEST_CASE("craving labels: boundary tie broken by id, stable under input order") {
    std::vector<std::pair<std::string, double>> v1 = {{"A", 5}, {"B", 4}, {"C", 4},
                                                      {"D", 3}, {"E", 2}, {"F", 1}};
    auto v2 = v1;
    std::reverse(v2.begin(), v2.end());
    auto l1 = stats::craving_level_labels(v1);
    auto l2 = stats::craving_level_labels(v2);
    CHECK(l1 == l2);
    std::map<std::string, CravingLevel> m(l1.begin(), l1.end());
    CHECK(m["B"] == CravingLevel::high);   // tie at 4: B before C lexicographically
    CHECK(m["C"] == CravingLevel::medium);
}

TEST_CASE("craving labels: count not divisible by three") {
    CHECK_THROWS_AS(stats::craving_level_labels({{"a", 1.0}, {"b", 2.0}}), DataError);
}

TEST_CASE("kfold: 100 balanced items into 5 folds of 20") {
    std::vector<std::size_t> labels(100);
    for (std::size_t i = 0; i < 100; ++i) labels[i] = i % 2;
    auto plan = folds::make_kfold(labels, 5, 42);
    for (std::size_t f = 0; f < 5; ++f) {
        const auto test = plan.test_indices(f);
        CHECK(test.size() == 20);
        std::size_t pos = 0;
        for (auto i : test) pos += labels[i];
        CHECK(pos == 10);  // stratified
    }
}

TEST_CASE("loso: one fold per subject; leakage in a corrupted plan is fatal") {
    std::vector<int> subjects = {3, 3, 7, 7, 9, 9, 11, 11};
    auto plan = folds::make_loso(subjects);
    CHECK(plan.n_folds == 4);
    folds::assert_no_subject_leakage(plan, subjects);  // clean by construction

    plan.assignment[0] = 1;  // subject 3 now straddles folds 0 and 1
    CHECK_THROWS_WITH_AS(folds::assert_no_subject_leakage(plan, subjects),
                         doctest::Contains("leakage"), DataError);
}

TEST_CASE("config parser round trips and reports bad keys") {
    auto cfg = Config::from_string("a.b = 3\n# comment\nname = hello\nflag = true\n"
                                   "vals = 1, 2.5, 3\n");
    CHECK(cfg.get_int("a.b") == 3);
    CHECK(cfg.get_string("name") == "hello");
    CHECK(cfg.get_bool("flag"));
    CHECK(cfg.get_doubles("vals") == std::vector<double>{1.0, 2.5, 3.0});
    CHECK(cfg.get_double("missing", 9.5) == 9.5);
    CHECK_THROWS_WITH_AS(cfg.get_double("name"), doctest::Contains("name"), ConfigError);
    CHECK_THROWS_WITH_AS(cfg.get_int("nope"), doctest::Contains("nope"), ConfigError);
    CHECK_THROWS_AS(Config::from_string("just a line\n"), ConfigError);
}

TEST_CASE("alignment training: zero learning rate leaves parameters bit-exact") {
    Dataset ds = generate_synthetic_dataset(tiny_cfg());
    auto m = train::make_model_for(ds, 1);
    std::vector<double> before;
    for (const auto& [name, p] : m.named_params)
        for (double v : p->value.flat()) before.push_back(v);

    auto cfg = quick_train();
    cfg.lr_stage1 = 0.0;
    cfg.epochs_stage1 = 1;
    std::vector<std::size_t> idx(ds.epochs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    train::train_alignment(m, ds, idx, cfg);

    std::size_t k = 0;
    for (const auto& [name, p] : m.named_params)
        for (double v : p->value.flat()) CHECK(v == before[k++]);
}

TEST_CASE("alignment training: deterministic for a fixed seed") {
    Dataset ds = generate_synthetic_dataset(tiny_cfg());
    std::vector<std::size_t> idx(ds.epochs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

    auto run = [&]() {
        auto m = train::make_model_for(ds, 7);
        auto curve = train::train_alignment(m, ds, idx, quick_train(3));
        return curve.back();
    };
    CHECK(run() == run());
}

TEST_CASE("alignment training separates matched from mismatched pairs") {
    auto scfg = tiny_cfg(11);
    scfg.epochs_per_subject = 12;
    scfg.noise_sd = 0.2;
    Dataset ds = generate_synthetic_dataset(scfg);

    // Hold out the last 16 pairs.
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t i = 0; i + 16 < ds.epochs.size(); ++i) train_idx.push_back(i);
    for (std::size_t i = ds.epochs.size() - 16; i < ds.epochs.size(); ++i)
        test_idx.push_back(i);

    auto m = train::make_model_for(ds, 21);
    auto cfg = quick_train(21);
    cfg.epochs_stage1 = 8;
    train::train_alignment(m, ds, train_idx, cfg);

    std::vector<model::NodePtr> e_rows, f_rows;
    for (std::size_t i : test_idx) {
        auto ep = train::preprocess_epoch(ds.epochs[i], true);
        e_rows.push_back(model::encode(m.eeg_enc, ep.eeg).pooled);
        f_rows.push_back(model::encode(m.fnirs_enc, ep.fnirs).pooled);
    }
    auto s = model::similarity_logits(ad::concat(e_rows, 0), ad::concat(f_rows, 0),
                                      m.align);
    double diag = 0.0, off = 0.0;
    const std::size_t b = test_idx.size();
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < b; ++j)
            (i == j ? diag : off) += s->value.at(i, j);
    diag /= static_cast<double>(b);
    off /= static_cast<double>(b * b - b);
    CHECK(diag - off > 0.0);
}

TEST_CASE("task training: frozen encoders stay bit-identical") {
    Dataset ds = generate_synthetic_dataset(tiny_cfg(31));
    auto m = train::make_model_for(ds, 31);
    auto view = train::make_task_view(ds, "hc_mbt");

    std::vector<double> before;
    for (const auto& p : m.encoder_params())
        for (double v : p->value.flat()) before.push_back(v);

    auto cfg = quick_train(31);
    cfg.freeze_encoders_stage2 = true;
    train::train_task(m, ds, view, cfg);

    std::size_t k = 0;
    for (const auto& p : m.encoder_params())
        for (double v : p->value.flat()) CHECK(v == before[k++]);
}

TEST_CASE("task training reaches perfect accuracy on a separable toy task") {
    auto scfg = tiny_cfg(41);
    scfg.noise_sd = 0.05;
    scfg.epochs_per_subject = 10;
    Dataset ds = generate_synthetic_dataset(scfg);
    auto view = train::make_task_view(ds, "hc_mbt");
    auto m = train::make_model_for(ds, 41);
    auto cfg = quick_train(41);
    cfg.epochs_stage2 = 12;
    train::train_task(m, ds, view, cfg);
    auto metrics = train::evaluate_full(m, ds, view, cfg.zscore_inputs);
    CHECK(metrics.accuracy == doctest::Approx(1.0));
}

TEST_CASE("unknown task id is a lookup error") {
    Dataset ds = generate_synthetic_dataset(tiny_cfg());
    CHECK_THROWS_AS(train::make_task_view(ds, "bogus"), DataError);
}

TEST_CASE("divergent training reports the failing step") {
    Dataset ds = generate_synthetic_dataset(tiny_cfg(51));
    auto m = train::make_model_for(ds, 51);
    auto view = train::make_task_view(ds, "hc_mbt");
    auto cfg = quick_train(51);
    cfg.lr_stage2 = 1e18;
    cfg.epochs_stage2 = 30;
    CHECK_THROWS_AS(train::train_task(m, ds, view, cfg), TrainingError);
}

TEST_CASE("crossval: fold counts, determinism, loso leakage enforcement") {
    auto scfg = tiny_cfg(61);
    scfg.n_subjects_per_group = 3;
    scfg.epochs_per_subject = 6;
    Dataset ds = generate_synthetic_dataset(scfg);
    auto view = train::make_task_view(ds, "hc_mbt");

    auto plan = folds::make_kfold(view.labels, 3, 9);
    auto cfg = quick_train(61);
    cfg.epochs_stage1 = 1;
    cfg.epochs_stage2 = 2;
    auto r1 = harness::crossval(ds, view, plan, cfg);
    auto r2 = harness::crossval(ds, view, plan, cfg);
    CHECK(r1.per_fold.size() == 3);
    CHECK(r1.mean_accuracy == r2.mean_accuracy);
    CHECK(r1.sd_accuracy == r2.sd_accuracy);

    auto loso = folds::make_loso(view.subjects(ds));
    CHECK(loso.n_folds == 6);
    loso.assignment[0] = (loso.assignment[0] + 1) % loso.n_folds;  // leak a subject
    CHECK_THROWS_AS(harness::crossval(ds, view, loso, cfg), DataError);
}

TEST_CASE("crossval parallel workers match the sequential result") {
    auto scfg = tiny_cfg(71);
    scfg.n_subjects_per_group = 2;
    scfg.epochs_per_subject = 6;
    Dataset ds = generate_synthetic_dataset(scfg);
    auto view = train::make_task_view(ds, "hc_mbt");
    auto plan = folds::make_kfold(view.labels, 3, 5);
    auto cfg = quick_train(71);
    cfg.epochs_stage1 = 1;
    cfg.epochs_stage2 = 2;
    auto seq = harness::crossval(ds, view, plan, cfg, 1);
    auto par = harness::crossval(ds, view, plan, cfg, 2);
    CHECK(seq.mean_accuracy == par.mean_accuracy);
    CHECK(seq.mean_f1 == par.mean_f1);
}

TEST_CASE("normalization shift: MAT==MBT gives ratio 1; MAT==HC gives ratio < 1") {
    Dataset ds = generate_synthetic_dataset(tiny_cfg(81));
    auto m = train::make_model_for(ds, 81);

    std::vector<MultimodalEpoch> hc, mbt;
    for (const auto& e : ds.epochs) {
        if (e.group_label == GroupLabel::HC) hc.push_back(e);
        if (e.group_label == GroupLabel::MBT) mbt.push_back(e);
    }
    auto same = harness::normalization_shift(m, mbt, mbt, hc);
    CHECK(same.ratio == doctest::Approx(1.0).epsilon(1e-9));

    auto toward = harness::normalization_shift(m, mbt, hc, hc);
    CHECK(toward.ratio < 1.0);

    CHECK_THROWS_AS(harness::normalization_shift(m, {}, mbt, hc), DataError);
}

TEST_CASE("patient task: windows from one source epoch never straddle the split") {
    auto scfg = tiny_cfg(91);
    scfg.epochs_per_subject = 8;
    scfg.fs_eeg = 32.0;
    scfg.fs_fnirs = 8.0;
    Dataset ds = generate_synthetic_dataset(scfg);

    auto backbone = train::make_model_for(ds, 91);
    auto cfg = quick_train(91);
    cfg.epochs_stage2 = 2;
    const int subject = ds.subject_ids().back();
    auto res = harness::run_patient_task(ds, backbone, subject, 3.5, cfg);
    CHECK(res.subject == subject);
    CHECK(res.n_train_windows > 0);
    CHECK(res.n_test_windows > 0);
    CHECK(res.test_metrics.n == res.n_test_windows);
}

TEST_CASE("preprocess_dataset applies the configured chain") {
    auto scfg = tiny_cfg(99);
    scfg.fs_eeg = 64.0;
    scfg.fs_fnirs = 8.0;
    scfg.n_fnirs_channels = 8;
    Dataset ds = generate_synthetic_dataset(scfg);

    auto cfg = Config::from_string(
        "eeg.bandpass.enabled = true\n"
        "eeg.bandpass.low_hz = 1.0\n"
        "eeg.bandpass.high_hz = 12.0\n"
        "eeg.downsample_to = 32\n"
        "fnirs.bandpass.enabled = true\n"
        "fnirs.bandpass.low_hz = 0.01\n"
        "fnirs.bandpass.high_hz = 0.5\n"
        "fnirs.roi.enabled = true\n"
        "fnirs.roi.names = R0, R1, R2, R3\n"
        "fnirs.roi.channel_map = 0,0,1,1,2,2,3,3\n"
        "fnirs.roi.excluded = 3\n");
    Dataset out = harness::preprocess_dataset(ds, cfg);
    CHECK(out.fs_eeg == 32.0);
    CHECK(out.epochs[0].eeg.cols() == ds.epochs[0].eeg.cols() / 2);
    CHECK(out.epochs[0].fnirs.rows() == 3);
    CHECK(out.roi_names == std::vector<std::string>{"R0", "R1", "R2"});
    // z-scored output: per-channel mean ~ 0
    double mean = 0.0;
    for (std::size_t t = 0; t < out.epochs[0].eeg.cols(); ++t)
        mean += out.epochs[0].eeg(0, t);
    CHECK(std::abs(mean / out.epochs[0].eeg.cols()) < 1e-9);
}
