#pragma once

// Dataset model, on-disk format, and the parametric synthetic generator.
//
// Directory layout: manifest.json (counts, rates, channel/ROI names, per-epoch
// metadata in order), eeg.f32le and fnirs.f32le (row-major
// [epoch][channel][time], little-endian 32-bit floats), checksums.txt
// (hex SHA-256 per blob).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neuroclip/matrix.hpp"

namespace neuroclip {

enum class GroupLabel { HC, MBT, MAT };
enum class CueLabel { neutral, meth };
enum class CravingLevel { low, medium, high };

std::string to_string(GroupLabel g);
std::string to_string(CueLabel c);
std::string to_string(CravingLevel l);
GroupLabel group_from_string(const std::string& s);
CueLabel cue_from_string(const std::string& s);
CravingLevel craving_from_string(const std::string& s);

// One time-aligned pair of EEG-like and fNIRS-like epochs plus labels.
struct MultimodalEpoch {
    Matrix eeg;    // [C_e x T_e]
    Matrix fnirs;  // [C_f x T_f]
    int subject_id = 0;
    GroupLabel group_label = GroupLabel::HC;
    CueLabel cue_label = CueLabel::neutral;
    std::optional<CravingLevel> craving_level;
    int epoch_index = 0;
};

enum class Provenance { synthetic, imported };

struct Dataset {
    std::vector<MultimodalEpoch> epochs;
    double fs_eeg = 0.0;
    double fs_fnirs = 0.0;
    double epoch_seconds = 0.0;
    std::vector<std::string> roi_names;
    Provenance provenance = Provenance::synthetic;
    std::uint64_t seed = 0;

    std::vector<int> subject_ids() const;  // sorted unique
    void validate() const;                 // shape/NaN/index invariants
};

struct SynthConfig {
    int n_subjects_per_group = 17;  // HC subjects and MUD subjects each
    int epochs_per_subject = 30;    // per session; MUD subjects get MBT and MAT sessions
    double fs_eeg = 250.0;
    double fs_fnirs = 10.0;
    double epoch_seconds = 7.0;
    double fnirs_onset_delay = 2.8;   // seconds; shift of the fNIRS response
    double class_effect_split = 0.5;  // fraction of discriminative signal in EEG
    double noise_sd = 0.5;
    double subject_effect_sd = 0.2;
    std::uint64_t seed = 0;

    int n_eeg_channels = 4;
    int n_fnirs_channels = 6;
    // Shared stimulus-response envelope: boxcar of stim_seconds convolved with
    // a double-gamma kernel (peak/undershoot/ratio), truncated at epoch end.
    double stim_seconds = 2.0;
    double hrf_peak_s = 6.0;
    double hrf_undershoot_s = 16.0;
    double hrf_ratio = 1.0 / 6.0;
    double treatment_recovery = 0.7;  // MAT effect = (1 - recovery) * MBT effect
    double response_gain = 2.0;       // total class-effect amplitude, split by class_effect_split
    double osc_base = 0.5;            // background oscillation amplitude inside the EEG burst

    void validate() const;
};

// Double-gamma kernel sampled at fs over [0, seconds), peak-normalized.
std::vector<double> double_gamma_hrf(double fs, double seconds, double peak_s,
                                     double undershoot_s, double ratio);

// Deterministic function of cfg; samples quantized to 32-bit floats so that
// serialization round-trips bit-exactly.
Dataset generate_synthetic_dataset(const SynthConfig& cfg);

void write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir);

}  // namespace neuroclip
