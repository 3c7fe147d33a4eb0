#pragma once

// Signal preprocessing: zero-phase maximally-flat (Butterworth) bandpass
// filtering, anti-aliased decimation, optical-density to hemoglobin
// conversion, per-epoch z-scoring, epoch segmentation, sliding windows,
// and fNIRS channel-to-ROI reduction.

#include <array>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "neuroclip/matrix.hpp"

namespace neuroclip::dsp {

enum class FilterFamily { maximally_flat };

struct FilterSpec {
    double low_hz = 0.0;   // 0 selects a pure low-pass at high_hz
    double high_hz = 0.0;
    int order = 4;         // even, >= 2
    FilterFamily family = FilterFamily::maximally_flat;
    bool zero_phase = true;
};

struct MbllParams {
    // extinction[w][c]: wavelength w in {760, 850} nm, chromophore c in {HbO, HbR},
    // units 1/(mM*cm). Defaults are standard table values; override via config.
    std::array<std::array<double, 2>, 2> extinction{{{0.586, 1.548}, {1.058, 0.691}}};
    std::array<double, 2> dpf{6.0, 6.0};
    double distance_cm = 3.0;
};

struct RoiMap {
    std::vector<std::string> roi_names;       // canonical order defines output order
    std::vector<std::size_t> channel_to_roi;  // one ROI index per fNIRS channel
    std::set<std::size_t> excluded_rois;      // produce no output rows
    std::set<std::size_t> bad_channels;       // imputed from ROI-mates before averaging

    static RoiMap default_eight(std::size_t n_channels);
};

// Cascaded biquad filter designed from the analog prototype via the bilinear
// transform. Exposed for reuse by the synthetic-data oracles.
struct BiquadSection {
    double b0, b1, b2, a1, a2;
};
std::vector<BiquadSection> design_butterworth_lowpass(int order, double cutoff_hz, double fs);
std::vector<BiquadSection> design_butterworth_bandpass(int order, double low_hz,
                                                       double high_hz, double fs);

// Single forward pass with steady-state initial conditions.
std::vector<double> sos_filter(const std::vector<BiquadSection>& sos,
                               const std::vector<double>& x);
// Forward-backward pass with odd-reflection padding of 3*order samples.
std::vector<double> filtfilt(const std::vector<BiquadSection>& sos,
                             const std::vector<double>& x, std::size_t pad);

Matrix bandpass_filter(const Matrix& signal, const FilterSpec& spec, double fs);
Matrix downsample(const Matrix& signal, double fs_in, double fs_out);
Matrix mbll_convert(const Matrix& intensity_wl1, const Matrix& intensity_wl2,
                    const std::vector<double>& baseline_wl1,
                    const std::vector<double>& baseline_wl2, const MbllParams& p);
Matrix zscore_epoch(const Matrix& epoch);
std::vector<Matrix> segment_epochs(const Matrix& continuous,
                                   const std::vector<std::size_t>& event_starts,
                                   double duration_s, double fs);
std::vector<Matrix> sliding_windows(const Matrix& signal, std::size_t window);
Matrix map_rois(const Matrix& fnirs, const RoiMap& map);

std::size_t sliding_window_count(std::size_t total, std::size_t window);

}  // namespace neuroclip::dsp
