// Command-line front end: dataset synthesis, preprocessing, two-stage
// training, cross-validation, saliency export, paired statistics, and the
// treatment-shift report.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "neuroclip/config.hpp"
#include "neuroclip/dataset.hpp"
#include "neuroclip/errors.hpp"
#include "neuroclip/folds.hpp"
#include "neuroclip/harness.hpp"
#include "neuroclip/metrics.hpp"
#include "neuroclip/model.hpp"
#include "neuroclip/saliency.hpp"
#include "neuroclip/stats.hpp"
#include "neuroclip/train.hpp"

namespace fs = std::filesystem;
using namespace neuroclip;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    std::size_t workers = 1;
};

Config load_config(const GlobalOpts& g) {
    Config cfg = g.config_path.empty() ? Config() : Config::from_file(g.config_path);
    if (g.seed) cfg.set("seed", std::to_string(*g.seed));
    return cfg;
}

SynthConfig synth_from_config(const Config& c) {
    SynthConfig s;
    s.n_subjects_per_group =
        static_cast<int>(c.get_int("synth.n_subjects_per_group", s.n_subjects_per_group));
    s.epochs_per_subject =
        static_cast<int>(c.get_int("synth.epochs_per_subject", s.epochs_per_subject));
    s.fs_eeg = c.get_double("synth.fs_eeg", s.fs_eeg);
    s.fs_fnirs = c.get_double("synth.fs_fnirs", s.fs_fnirs);
    s.epoch_seconds = c.get_double("synth.epoch_seconds", s.epoch_seconds);
    s.fnirs_onset_delay = c.get_double("synth.fnirs_onset_delay", s.fnirs_onset_delay);
    s.class_effect_split = c.get_double("synth.class_effect_split", s.class_effect_split);
    s.noise_sd = c.get_double("synth.noise_sd", s.noise_sd);
    s.subject_effect_sd = c.get_double("synth.subject_effect_sd", s.subject_effect_sd);
    s.n_eeg_channels = static_cast<int>(c.get_int("synth.n_eeg_channels", s.n_eeg_channels));
    s.n_fnirs_channels =
        static_cast<int>(c.get_int("synth.n_fnirs_channels", s.n_fnirs_channels));
    s.stim_seconds = c.get_double("synth.stim_seconds", s.stim_seconds);
    s.hrf_peak_s = c.get_double("synth.hrf_peak_s", s.hrf_peak_s);
    s.hrf_undershoot_s = c.get_double("synth.hrf_undershoot_s", s.hrf_undershoot_s);
    s.hrf_ratio = c.get_double("synth.hrf_ratio", s.hrf_ratio);
    s.treatment_recovery = c.get_double("synth.treatment_recovery", s.treatment_recovery);
    s.response_gain = c.get_double("synth.response_gain", s.response_gain);
    s.osc_base = c.get_double("synth.osc_base", s.osc_base);
    s.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
    return s;
}

train::TrainConfig train_from_config(const Config& c) {
    train::TrainConfig t;
    t.batch_size = static_cast<std::size_t>(c.get_int("train.batch_size", 16));
    t.lr_stage1 = c.get_double("train.lr_stage1", t.lr_stage1);
    t.lr_stage2 = c.get_double("train.lr_stage2", t.lr_stage2);
    t.encoder_lr_mult_stage2 =
        c.get_double("train.encoder_lr_mult_stage2", t.encoder_lr_mult_stage2);
    t.momentum = c.get_double("train.momentum", t.momentum);
    t.clip_norm = c.get_double("train.clip_norm", t.clip_norm);
    t.epochs_stage1 = static_cast<std::size_t>(c.get_int("train.epochs_stage1", 20));
    t.epochs_stage2 = static_cast<std::size_t>(c.get_int("train.epochs_stage2", 30));
    t.freeze_encoders_stage2 = c.get_bool("train.freeze_encoders_stage2", false);
    t.zscore_inputs = c.get_bool("train.zscore_inputs", true);
    t.task_id = c.get_string("train.task", "hc_mbt");
    t.seed = static_cast<std::uint64_t>(c.get_int("seed", 0));
    t.validate();
    return t;
}

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path().empty() ? "." : p.parent_path());
    std::ofstream out(p);
    if (!out) throw DataError("cannot write '" + p.string() + "'");
    out << text;
}

void write_loss_curve(const fs::path& p, const std::vector<double>& curve) {
    std::ostringstream ss;
    ss << "step,loss\n";
    for (std::size_t i = 0; i < curve.size(); ++i) ss << i << "," << curve[i] << "\n";
    write_text(p, ss.str());
}

int run_synth(const GlobalOpts& g) {
    const Config cfg = load_config(g);
    Dataset ds = generate_synthetic_dataset(synth_from_config(cfg));
    write_dataset(ds, g.out_dir);
    std::cout << "wrote " << ds.epochs.size() << " epochs ("
              << ds.subject_ids().size() << " subjects) to " << g.out_dir << "\n";
    return 0;
}

int run_preprocess(const GlobalOpts& g, const std::string& input) {
    const Config cfg = load_config(g);
    Dataset ds = read_dataset(input);
    Dataset out = harness::preprocess_dataset(ds, cfg);
    write_dataset(out, g.out_dir);
    std::cout << "preprocessed " << out.epochs.size() << " epochs to " << g.out_dir
              << "\n";
    return 0;
}

int run_train_align(const GlobalOpts& g, const std::string& input) {
    const Config cfg = load_config(g);
    auto tcfg = train_from_config(cfg);
    Dataset ds = read_dataset(input);
    auto m = train::make_model_for(ds, tcfg.seed);
    std::vector<std::size_t> idx(ds.epochs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto curve = train::train_alignment(m, ds, idx, tcfg);
    model::save_checkpoint(m, g.out_dir);
    write_loss_curve(fs::path(g.out_dir) / "alignment_loss.csv", curve);
    std::cout << "stage-1 final loss " << (curve.empty() ? 0.0 : curve.back()) << "; "
              << "checkpoint in " << g.out_dir << "\n";
    return 0;
}

int run_train_task(const GlobalOpts& g, const std::string& input,
                   const std::string& checkpoint) {
    const Config cfg = load_config(g);
    auto tcfg = train_from_config(cfg);
    Dataset ds = read_dataset(input);
    model::ModelParams m = checkpoint.empty() ? train::make_model_for(ds, tcfg.seed)
                                              : model::load_checkpoint(checkpoint);
    auto view = train::make_task_view(ds, tcfg.task_id);
    auto curve = train::train_task(m, ds, view, tcfg);
    model::save_checkpoint(m, g.out_dir);
    write_loss_curve(fs::path(g.out_dir) / "task_loss.csv", curve);
    auto metric = train::evaluate_full(m, ds, view, tcfg.zscore_inputs);
    std::cout << "task '" << tcfg.task_id << "' train accuracy " << metric.accuracy
              << "; checkpoint in " << g.out_dir << "\n";
    return 0;
}

int run_crossval(const GlobalOpts& g, const std::string& input,
                 const std::string& scheme, std::size_t k) {
    const Config cfg = load_config(g);
    auto tcfg = train_from_config(cfg);
    Dataset ds = read_dataset(input);
    auto view = train::make_task_view(ds, tcfg.task_id);

    folds::FoldPlan plan;
    if (scheme == "kfold")
        plan = folds::make_kfold(view.labels, k, tcfg.seed);
    else if (scheme == "loso")
        plan = folds::make_loso(view.subjects(ds));
    else
        throw ConfigError("unknown crossval scheme '" + scheme + "'");

    auto report = harness::crossval(ds, view, plan, tcfg, g.workers);
    std::cout << metrics::to_text(report);
    write_text(fs::path(g.out_dir) / "crossval.csv", metrics::to_csv(report));
    return 0;
}

int run_saliency(const GlobalOpts& g, const std::string& input,
                 const std::string& checkpoint, const std::string& modality,
                 const std::string& head, std::size_t class_id, double threshold) {
    const Config cfg = load_config(g);
    auto tcfg = train_from_config(cfg);
    Dataset ds = read_dataset(input);
    model::ModelParams m = model::load_checkpoint(checkpoint);
    const auto mod = modality == "eeg" ? model::Modality::eeg : model::Modality::fnirs;

    auto view = train::make_task_view(ds, tcfg.task_id);
    std::vector<std::vector<double>> profiles;
    std::size_t t_in = 0, t_feat = 0;
    for (std::size_t row = 0; row < view.epoch_indices.size(); ++row) {
        if (view.labels[row] != class_id) continue;
        const auto ep =
            train::preprocess_epoch(ds.epochs[view.epoch_indices[row]], tcfg.zscore_inputs);
        const Matrix& x = mod == model::Modality::eeg ? ep.eeg : ep.fnirs;
        auto cap = saliency::capture(m, x, mod, head, class_id);
        t_in = x.cols();
        t_feat = cap.activations.cols();
        profiles.push_back(saliency::sample_saliency(cap));
    }
    if (profiles.empty()) throw DataError("saliency: no epochs with class " +
                                          std::to_string(class_id));
    const double fs = mod == model::Modality::eeg ? ds.fs_eeg : ds.fs_fnirs;
    const double fs_feature = fs * static_cast<double>(t_feat) / static_cast<double>(t_in);
    auto profile = saliency::group_profile(profiles, fs_feature, threshold);
    const auto csv = fs::path(g.out_dir) / ("saliency_" + modality + ".csv");
    saliency::write_profile_csv(profile, csv.string());
    auto cross = saliency::onset_delay(profile);
    std::cout << "profile over " << profile.n_samples << " samples; threshold "
              << threshold << " crossing: "
              << (cross ? std::to_string(*cross) + " s" : std::string("none")) << "; "
              << csv.string() << "\n";
    return 0;
}

int run_wilcoxon(const std::string& csv_path) {
    std::ifstream in(csv_path);
    if (!in) throw DataError("cannot open '" + csv_path + "'");
    std::vector<double> pre, post;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first && line.find_first_not_of("0123456789.,-+eE \t") != std::string::npos) {
            first = false;  // header
            continue;
        }
        first = false;
        std::istringstream ss(line);
        std::string a, b;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ','))
            throw DataError("wilcoxon: expected 'pre,post' rows, got '" + line + "'");
        pre.push_back(std::stod(a));
        post.push_back(std::stod(b));
    }
    auto r = stats::wilcoxon_signed_rank(pre, post);
    std::cout << "n_effective=" << r.n_effective << " W=" << r.w_statistic
              << " p=" << r.p_two_sided << (r.exact ? " (exact)" : " (normal approx)")
              << "\n";
    return 0;
}

int run_shift(const GlobalOpts& g, const std::string& input,
              const std::string& checkpoint) {
    const Config cfg = load_config(g);
    auto tcfg = train_from_config(cfg);
    Dataset ds = read_dataset(input);
    model::ModelParams m = model::load_checkpoint(checkpoint);
    auto r = harness::normalization_shift(m, ds, tcfg.zscore_inputs);
    std::ostringstream report;
    report << "n_hc=" << r.n_hc << " n_mbt=" << r.n_mbt << " n_mat=" << r.n_mat << "\n"
           << "mean_dist_mbt_to_hc_centroid=" << r.mean_dist_mbt << "\n"
           << "mean_dist_mat_to_hc_centroid=" << r.mean_dist_mat << "\n"
           << "shift_ratio=" << r.ratio << "\n";
    std::cout << report.str();
    write_text(fs::path(g.out_dir) / "shift.csv",
               "metric,value\nmean_dist_mbt," + std::to_string(r.mean_dist_mbt) +
                   "\nmean_dist_mat," + std::to_string(r.mean_dist_mat) +
                   "\nshift_ratio," + std::to_string(r.ratio) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multimodal EEG/fNIRS contrastive-learning laboratory"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "key = value configuration file");
    std::uint64_t seed_val = 0;
    auto* seed_opt = app.add_option("--seed", seed_val, "override config seed");
    app.add_option("--out", g.out_dir, "output directory");
    app.add_option("--workers", g.workers, "parallel fold workers");

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");

    std::string input;
    auto* preprocess = app.add_subcommand("preprocess", "filter/convert/z-score a dataset");
    preprocess->add_option("input", input, "dataset directory")->required();

    auto* train_align = app.add_subcommand("train-align", "stage-1 contrastive alignment");
    train_align->add_option("input", input, "dataset directory")->required();

    std::string checkpoint;
    auto* train_task_cmd = app.add_subcommand("train-task", "stage-2 task training");
    train_task_cmd->add_option("input", input, "dataset directory")->required();
    train_task_cmd->add_option("--checkpoint", checkpoint,
                               "stage-1 checkpoint to start from");

    std::string scheme = "kfold";
    std::size_t k = 5;
    auto* crossval = app.add_subcommand("crossval", "cross-validated evaluation");
    crossval->add_option("input", input, "dataset directory")->required();
    crossval->add_option("--scheme", scheme, "kfold | loso");
    crossval->add_option("-k", k, "fold count for kfold");

    std::string modality = "fnirs", head = "hc_mbt";
    std::size_t class_id = 1;
    double threshold = 0.4;
    auto* sal = app.add_subcommand("saliency", "temporal saliency profile CSV");
    sal->add_option("input", input, "dataset directory")->required();
    sal->add_option("--checkpoint", checkpoint, "trained unimodal checkpoint")->required();
    sal->add_option("--modality", modality, "eeg | fnirs");
    sal->add_option("--head", head, "decoder head id");
    sal->add_option("--class", class_id, "target class index");
    sal->add_option("--threshold", threshold, "crossing threshold");

    auto* stats_cmd = app.add_subcommand("stats", "statistical utilities");
    std::string csv_path;
    auto* wilcoxon = stats_cmd->add_subcommand("wilcoxon", "paired signed-rank test");
    wilcoxon->add_option("csv", csv_path, "CSV of pre,post pairs")->required();

    auto* shift = app.add_subcommand("shift", "treatment normalization-shift report");
    shift->add_option("input", input, "dataset directory")->required();
    shift->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();

    try {
        app.parse(argc, argv);
        if (*seed_opt) g.seed = seed_val;
        if (app.got_subcommand(synth)) return run_synth(g);
        if (app.got_subcommand(preprocess)) return run_preprocess(g, input);
        if (app.got_subcommand(train_align)) return run_train_align(g, input);
        if (app.got_subcommand(train_task_cmd)) return run_train_task(g, input, checkpoint);
        if (app.got_subcommand(crossval)) return run_crossval(g, input, scheme, k);
        if (app.got_subcommand(sal))
            return run_saliency(g, input, checkpoint, modality, head, class_id, threshold);
        if (app.got_subcommand(stats_cmd)) return run_wilcoxon(csv_path);
        if (app.got_subcommand(shift)) return run_shift(g, input, checkpoint);
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const TrainingError& e) {
        std::cerr << "training error: " << e.what() << "\n";
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
