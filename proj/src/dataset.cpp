#include "neuroclip/dataset.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "neuroclip/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset blobs are little-endian; big-endian hosts unsupported");

namespace neuroclip {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(GroupLabel g) {
    switch (g) {
        case GroupLabel::HC: return "HC";
        case GroupLabel::MBT: return "MBT";
        case GroupLabel::MAT: return "MAT";
    }
    return "?";
}
std::string to_string(CueLabel c) { return c == CueLabel::neutral ? "neutral" : "meth"; }
std::string to_string(CravingLevel l) {
    switch (l) {
        case CravingLevel::low: return "low";
        case CravingLevel::medium: return "medium";
        case CravingLevel::high: return "high";
    }
    return "?";
}
GroupLabel group_from_string(const std::string& s) {
    if (s == "HC") return GroupLabel::HC;
    if (s == "MBT") return GroupLabel::MBT;
    if (s == "MAT") return GroupLabel::MAT;
    throw DataError("unknown group label '" + s + "'");
}
CueLabel cue_from_string(const std::string& s) {
    if (s == "neutral") return CueLabel::neutral;
    if (s == "meth") return CueLabel::meth;
    throw DataError("unknown cue label '" + s + "'");
}
CravingLevel craving_from_string(const std::string& s) {
    if (s == "low") return CravingLevel::low;
    if (s == "medium") return CravingLevel::medium;
    if (s == "high") return CravingLevel::high;
    throw DataError("unknown craving level '" + s + "'");
}

std::vector<int> Dataset::subject_ids() const {
    std::set<int> ids;
    for (const auto& e : epochs) ids.insert(e.subject_id);
    return {ids.begin(), ids.end()};
}

void Dataset::validate() const {
    if (epochs.empty()) return;
    const auto te = static_cast<std::size_t>(std::llround(epoch_seconds * fs_eeg));
    const auto tf = static_cast<std::size_t>(std::llround(epoch_seconds * fs_fnirs));
    const std::size_t ce = epochs[0].eeg.rows(), cf = epochs[0].fnirs.rows();
    for (std::size_t i = 0; i < epochs.size(); ++i) {
        const auto& e = epochs[i];
        if (e.subject_id < 0)
            throw DataError("epoch " + std::to_string(i) + ": negative subject_id");
        if (e.eeg.rows() != ce || e.eeg.cols() != te || e.fnirs.rows() != cf ||
            e.fnirs.cols() != tf)
            throw DataError("epoch " + std::to_string(i) + ": shape " +
                            e.eeg.shape_str() + "/" + e.fnirs.shape_str() +
                            " inconsistent with dataset rates");
        for (double v : e.eeg.flat())
            if (!std::isfinite(v))
                throw DataError("epoch " + std::to_string(i) + ": non-finite EEG sample");
        for (double v : e.fnirs.flat())
            if (!std::isfinite(v))
                throw DataError("epoch " + std::to_string(i) + ": non-finite fNIRS sample");
    }
}

void SynthConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("synth config: " + field + " " + why);
    };
    if (n_subjects_per_group < 1) fail("n_subjects_per_group", "must be >= 1");
    if (epochs_per_subject < 1) fail("epochs_per_subject", "must be >= 1");
    if (!(fs_eeg > 0.0)) fail("fs_eeg", "must be > 0");
    if (!(fs_fnirs > 0.0)) fail("fs_fnirs", "must be > 0");
    if (!(epoch_seconds > 0.0)) fail("epoch_seconds", "must be > 0");
    if (!(fnirs_onset_delay >= 0.0) || fnirs_onset_delay >= epoch_seconds)
        fail("fnirs_onset_delay", "must be in [0, epoch_seconds)");
    if (class_effect_split < 0.0 || class_effect_split > 1.0)
        fail("class_effect_split", "must be in [0, 1]");
    if (noise_sd < 0.0) fail("noise_sd", "must be >= 0");
    if (subject_effect_sd < 0.0) fail("subject_effect_sd", "must be >= 0");
    if (n_eeg_channels < 1) fail("n_eeg_channels", "must be >= 1");
    if (n_fnirs_channels < 1) fail("n_fnirs_channels", "must be >= 1");
    if (!(stim_seconds > 0.0)) fail("stim_seconds", "must be > 0");
    if (!(hrf_peak_s > 0.0)) fail("hrf_peak_s", "must be > 0");
    if (!(hrf_undershoot_s > hrf_peak_s)) fail("hrf_undershoot_s", "must exceed hrf_peak_s");
    if (treatment_recovery < 0.0 || treatment_recovery > 1.0)
        fail("treatment_recovery", "must be in [0, 1]");
    if (response_gain < 0.0) fail("response_gain", "must be >= 0");
    if (osc_base < 0.0) fail("osc_base", "must be >= 0");
}

std::vector<double> double_gamma_hrf(double fs, double seconds, double peak_s,
                                     double undershoot_s, double ratio) {
    // Gamma-pdf pair with fixed shapes; scales chosen so modes land at the
    // requested peak/undershoot times. Peak-normalized over the sampled span.
    const double a1 = 7.0, a2 = 17.0;
    const double b1 = peak_s / (a1 - 1.0);
    const double b2 = undershoot_s / (a2 - 1.0);
    const auto n = static_cast<std::size_t>(std::llround(seconds * fs));
    auto log_gamma_pdf = [](double t, double a, double b) {
        return (a - 1.0) * std::log(t / b) - t / b - std::lgamma(a) - std::log(b);
    };
    std::vector<double> h(n, 0.0);
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / fs;
        if (t <= 0.0) continue;
        const double v = std::exp(log_gamma_pdf(t, a1, b1)) -
                         ratio * std::exp(log_gamma_pdf(t, a2, b2));
        h[i] = v;
        peak = std::max(peak, std::abs(v));
    }
    if (peak > 0.0)
        for (auto& v : h) v /= peak;
    return h;
}

namespace {

// Boxcar convolved with the kernel, truncated at epoch end, peak-normalized.
std::vector<double> response_envelope(const SynthConfig& cfg, double fs) {
    const auto n = static_cast<std::size_t>(std::llround(cfg.epoch_seconds * fs));
    const auto hrf = double_gamma_hrf(fs, cfg.epoch_seconds, cfg.hrf_peak_s,
                                      cfg.hrf_undershoot_s, cfg.hrf_ratio);
    const auto box_n = static_cast<std::size_t>(std::llround(cfg.stim_seconds * fs));
    std::vector<double> env(n, 0.0);
    double peak = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        double acc = 0.0;
        for (std::size_t k = 0; k <= t && k < box_n; ++k) acc += hrf[t - k];
        env[t] = acc;
        peak = std::max(peak, std::abs(acc));
    }
    if (peak > 0.0)
        for (auto& v : env) v /= peak;
    return env;
}

double shifted(const std::vector<double>& env, double idx) {
    if (idx < 0.0) return 0.0;
    const auto lo = static_cast<std::size_t>(idx);
    if (lo + 1 >= env.size()) return lo < env.size() ? env[lo] : 0.0;
    const double frac = idx - static_cast<double>(lo);
    return env[lo] * (1.0 - frac) + env[lo + 1] * frac;
}

double group_effect(GroupLabel g, double recovery) {
    switch (g) {
        case GroupLabel::HC: return 0.0;
        case GroupLabel::MBT: return 1.0;
        case GroupLabel::MAT: return 1.0 - recovery;
    }
    return 0.0;
}

double cue_factor(CueLabel c) { return c == CueLabel::neutral ? 0.25 : 1.0; }

double craving_boost(const std::optional<CravingLevel>& l) {
    if (!l) return 0.0;
    switch (*l) {
        case CravingLevel::low: return 0.0;
        case CravingLevel::medium: return 0.15;
        case CravingLevel::high: return 0.30;
    }
    return 0.0;
}

float f32(double v) { return static_cast<float>(v); }

}  // namespace

Dataset generate_synthetic_dataset(const SynthConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const auto te = static_cast<std::size_t>(std::llround(cfg.epoch_seconds * cfg.fs_eeg));
    const auto tf =
        static_cast<std::size_t>(std::llround(cfg.epoch_seconds * cfg.fs_fnirs));
    const auto env_e = response_envelope(cfg, cfg.fs_eeg);
    const auto env_f = response_envelope(cfg, cfg.fs_fnirs);
    const double delay_idx = cfg.fnirs_onset_delay * cfg.fs_fnirs;

    const double effect_eeg = cfg.response_gain * cfg.class_effect_split;
    const double effect_fnirs = cfg.response_gain * (1.0 - cfg.class_effect_split);

    Dataset ds;
    ds.fs_eeg = cfg.fs_eeg;
    ds.fs_fnirs = cfg.fs_fnirs;
    ds.epoch_seconds = cfg.epoch_seconds;
    ds.provenance = Provenance::synthetic;
    ds.seed = cfg.seed;
    ds.roi_names = {"DLPFC",        "FEF",           "Motor Cortex",  "Broca Left",
                    "Broca Right",  "Temporal Left", "Temporal Right"};

    // Fixed per-channel carriers in the alpha band; phases spread.
    std::vector<double> carrier_hz(cfg.n_eeg_channels), carrier_phase(cfg.n_eeg_channels);
    for (int c = 0; c < cfg.n_eeg_channels; ++c) {
        carrier_hz[c] = 9.0 + static_cast<double>(c % 4);
        carrier_phase[c] = 0.61803398875 * 2.0 * std::numbers::pi * c;
    }

    const int n = cfg.n_subjects_per_group;
    struct Session {
        int subject;
        GroupLabel group;
    };
    std::vector<Session> sessions;
    for (int s = 0; s < n; ++s) sessions.push_back({s, GroupLabel::HC});
    for (int s = 0; s < n; ++s) {
        sessions.push_back({n + s, GroupLabel::MBT});
        sessions.push_back({n + s, GroupLabel::MAT});
    }

    // Per-subject heterogeneity: one amplitude scale, per-channel offsets,
    // and a carrier phase shift, shared across that subject's sessions.
    std::vector<double> subj_scale(2 * n), subj_phase(2 * n);
    std::vector<std::vector<double>> subj_off_e(2 * n), subj_off_f(2 * n);
    for (int s = 0; s < 2 * n; ++s) {
        subj_scale[s] = std::max(0.1, 1.0 + cfg.subject_effect_sd * gauss(rng));
        subj_phase[s] = cfg.subject_effect_sd * gauss(rng);
        subj_off_e[s].resize(cfg.n_eeg_channels);
        subj_off_f[s].resize(cfg.n_fnirs_channels);
        for (auto& v : subj_off_e[s]) v = cfg.subject_effect_sd * gauss(rng);
        for (auto& v : subj_off_f[s]) v = cfg.subject_effect_sd * gauss(rng);
    }

    for (const auto& sess : sessions) {
        int meth_count = 0;
        for (int ei = 0; ei < cfg.epochs_per_subject; ++ei) {
            MultimodalEpoch ep;
            ep.subject_id = sess.subject;
            ep.group_label = sess.group;
            ep.epoch_index = ei;
            ep.cue_label = (ei % 2 == 0) ? CueLabel::neutral : CueLabel::meth;
            if (ep.cue_label == CueLabel::meth) {
                switch (meth_count % 3) {
                    case 0: ep.craving_level = CravingLevel::low; break;
                    case 1: ep.craving_level = CravingLevel::medium; break;
                    default: ep.craving_level = CravingLevel::high; break;
                }
                ++meth_count;
            }

            const double m = group_effect(sess.group, cfg.treatment_recovery) *
                             cue_factor(ep.cue_label) *
                             (1.0 + craving_boost(ep.craving_level));
            // Trial-level gain shared by both modalities; gives the
            // contrastive stage a pairing signal beyond the class labels.
            const double trial_gain = std::max(0.2, 1.0 + 0.15 * gauss(rng));
            const double scale = subj_scale[sess.subject] * trial_gain;
            const double eff_e = effect_eeg * m;
            const double eff_f = effect_fnirs * m;

            // EEG burst: background oscillation with class-modulated amplitude
            // plus a class-driven evoked deflection, both under the envelope.
            ep.eeg = Matrix(cfg.n_eeg_channels, te);
            for (int c = 0; c < cfg.n_eeg_channels; ++c) {
                const double phase = carrier_phase[c] + subj_phase[sess.subject];
                for (std::size_t t = 0; t < te; ++t) {
                    const double tt = static_cast<double>(t) / cfg.fs_eeg;
                    const double carrier =
                        std::sin(2.0 * std::numbers::pi * carrier_hz[c] * tt + phase);
                    const double burst = scale * env_e[t] *
                                         (cfg.osc_base * (1.0 + eff_e) * carrier + eff_e);
                    ep.eeg(c, t) = f32(burst + subj_off_e[sess.subject][c] +
                                       cfg.noise_sd * gauss(rng));
                }
            }
            ep.fnirs = Matrix(cfg.n_fnirs_channels, tf);
            for (int c = 0; c < cfg.n_fnirs_channels; ++c) {
                for (std::size_t t = 0; t < tf; ++t) {
                    const double resp =
                        scale * eff_f * shifted(env_f, static_cast<double>(t) - delay_idx);
                    ep.fnirs(c, t) = f32(resp + subj_off_f[sess.subject][c] +
                                         cfg.noise_sd * gauss(rng));
                }
            }
            ds.epochs.push_back(std::move(ep));
        }
    }
    ds.validate();
    return ds;
}

namespace {

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw DataError("sha256 computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string pack_blob(const Dataset& ds, bool eeg) {
    std::string bytes;
    for (const auto& ep : ds.epochs) {
        const Matrix& m = eeg ? ep.eeg : ep.fnirs;
        for (double v : m.flat()) {
            const float f = static_cast<float>(v);
            char buf[4];
            std::memcpy(buf, &f, 4);
            bytes.append(buf, 4);
        }
    }
    return bytes;
}

void write_file(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw DataError("cannot write '" + p.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to '" + p.string() + "'");
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open '" + p.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& dir) {
    ds.validate();
    fs::create_directories(dir);
    const fs::path root(dir);

    json manifest;
    manifest["format_version"] = 1;
    manifest["provenance"] = ds.provenance == Provenance::synthetic ? "synthetic" : "imported";
    manifest["seed"] = ds.seed;
    manifest["fs_eeg"] = ds.fs_eeg;
    manifest["fs_fnirs"] = ds.fs_fnirs;
    manifest["epoch_seconds"] = ds.epoch_seconds;
    manifest["n_epochs"] = ds.epochs.size();
    manifest["n_eeg_channels"] = ds.epochs.empty() ? 0 : ds.epochs[0].eeg.rows();
    manifest["n_eeg_samples"] = ds.epochs.empty() ? 0 : ds.epochs[0].eeg.cols();
    manifest["n_fnirs_channels"] = ds.epochs.empty() ? 0 : ds.epochs[0].fnirs.rows();
    manifest["n_fnirs_samples"] = ds.epochs.empty() ? 0 : ds.epochs[0].fnirs.cols();
    manifest["roi_names"] = ds.roi_names;

    json subjects = json::array();
    for (int id : ds.subject_ids()) subjects.push_back(id);
    manifest["subjects"] = subjects;

    json epochs = json::array();
    for (const auto& e : ds.epochs) {
        json rec;
        rec["subject_id"] = e.subject_id;
        rec["group"] = to_string(e.group_label);
        rec["cue"] = to_string(e.cue_label);
        if (e.craving_level)
            rec["craving"] = to_string(*e.craving_level);
        else
            rec["craving"] = nullptr;
        rec["epoch_index"] = e.epoch_index;
        epochs.push_back(rec);
    }
    manifest["epochs"] = epochs;

    const std::string eeg_blob = pack_blob(ds, true);
    const std::string fnirs_blob = pack_blob(ds, false);
    write_file(root / "manifest.json", manifest.dump(2) + "\n");
    write_file(root / "eeg.f32le", eeg_blob);
    write_file(root / "fnirs.f32le", fnirs_blob);
    write_file(root / "checksums.txt", sha256_hex(eeg_blob) + "  eeg.f32le\n" +
                                           sha256_hex(fnirs_blob) + "  fnirs.f32le\n");
}

Dataset read_dataset(const std::string& dir) {
    const fs::path root(dir);
    json manifest;
    try {
        manifest = json::parse(read_file(root / "manifest.json"));
    } catch (const json::exception& e) {
        throw DataError("corrupt dataset: bad manifest.json: " + std::string(e.what()));
    }

    Dataset ds;
    try {
        ds.provenance = manifest.at("provenance").get<std::string>() == "synthetic"
                            ? Provenance::synthetic
                            : Provenance::imported;
        ds.seed = manifest.at("seed").get<std::uint64_t>();
        ds.fs_eeg = manifest.at("fs_eeg").get<double>();
        ds.fs_fnirs = manifest.at("fs_fnirs").get<double>();
        ds.epoch_seconds = manifest.at("epoch_seconds").get<double>();
        ds.roi_names = manifest.at("roi_names").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw DataError("corrupt dataset: manifest field: " + std::string(e.what()));
    }

    const auto n_epochs = manifest.at("n_epochs").get<std::size_t>();
    const auto ce = manifest.at("n_eeg_channels").get<std::size_t>();
    const auto se = manifest.at("n_eeg_samples").get<std::size_t>();
    const auto cf = manifest.at("n_fnirs_channels").get<std::size_t>();
    const auto sf = manifest.at("n_fnirs_samples").get<std::size_t>();
    if (manifest.at("epochs").size() != n_epochs)
        throw DataError("corrupt dataset: epoch record count " +
                        std::to_string(manifest.at("epochs").size()) +
                        " disagrees with n_epochs " + std::to_string(n_epochs));

    const std::string eeg_blob = read_file(root / "eeg.f32le");
    const std::string fnirs_blob = read_file(root / "fnirs.f32le");
    if (eeg_blob.size() != n_epochs * ce * se * 4)
        throw DataError("corrupt dataset: eeg.f32le is " + std::to_string(eeg_blob.size()) +
                        " bytes, manifest implies " +
                        std::to_string(n_epochs * ce * se * 4));
    if (fnirs_blob.size() != n_epochs * cf * sf * 4)
        throw DataError("corrupt dataset: fnirs.f32le is " +
                        std::to_string(fnirs_blob.size()) + " bytes, manifest implies " +
                        std::to_string(n_epochs * cf * sf * 4));

    // checksums.txt lines: "<hex>  <filename>"
    std::istringstream sums(read_file(root / "checksums.txt"));
    std::string line;
    while (std::getline(sums, line)) {
        if (line.empty()) continue;
        const auto sp = line.find("  ");
        if (sp == std::string::npos)
            throw DataError("corrupt dataset: malformed checksums.txt line '" + line + "'");
        const std::string hex = line.substr(0, sp), name = line.substr(sp + 2);
        const std::string* blob = nullptr;
        if (name == "eeg.f32le") blob = &eeg_blob;
        if (name == "fnirs.f32le") blob = &fnirs_blob;
        if (!blob) throw DataError("corrupt dataset: checksum for unknown file '" + name + "'");
        if (sha256_hex(*blob) != hex)
            throw DataError("corrupt dataset: checksum mismatch for '" + name + "'");
    }

    auto unpack = [](const std::string& blob, std::size_t offset_floats, Matrix& m) {
        for (std::size_t i = 0; i < m.size(); ++i) {
            float f;
            std::memcpy(&f, blob.data() + (offset_floats + i) * 4, 4);
            m.flat()[i] = static_cast<double>(f);
        }
    };

    std::size_t eeg_off = 0, fnirs_off = 0;
    for (const auto& rec : manifest.at("epochs")) {
        MultimodalEpoch ep;
        try {
            ep.subject_id = rec.at("subject_id").get<int>();
            ep.group_label = group_from_string(rec.at("group").get<std::string>());
            ep.cue_label = cue_from_string(rec.at("cue").get<std::string>());
            if (!rec.at("craving").is_null())
                ep.craving_level = craving_from_string(rec.at("craving").get<std::string>());
            ep.epoch_index = rec.at("epoch_index").get<int>();
        } catch (const json::exception& e) {
            throw DataError("corrupt dataset: epoch record: " + std::string(e.what()));
        }
        ep.eeg = Matrix(ce, se);
        ep.fnirs = Matrix(cf, sf);
        unpack(eeg_blob, eeg_off, ep.eeg);
        unpack(fnirs_blob, fnirs_off, ep.fnirs);
        eeg_off += ce * se;
        fnirs_off += cf * sf;
        ds.epochs.push_back(std::move(ep));
    }
    ds.validate();
    return ds;
}

}  // namespace neuroclip
