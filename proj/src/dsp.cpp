#include "neuroclip/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "neuroclip/errors.hpp"

namespace neuroclip::dsp {

namespace {

using cplx = std::complex<double>;

// Unit-cutoff analog Butterworth poles, left half plane.
std::vector<cplx> prototype_poles(int order) {
    std::vector<cplx> poles;
    poles.reserve(order);
    for (int k = 1; k <= order; ++k) {
        const double theta =
            std::numbers::pi * (2.0 * k + order - 1.0) / (2.0 * order);
        poles.emplace_back(std::cos(theta), std::sin(theta));
    }
    return poles;
}

struct Zpk {
    std::vector<cplx> zeros;
    std::vector<cplx> poles;
    double gain;
};

// Bilinear transform z = (2fs + s)/(2fs - s); zeros at infinity map to z = -1.
Zpk bilinear(const Zpk& analog, double fs) {
    const double f2 = 2.0 * fs;
    Zpk digital;
    digital.zeros.reserve(analog.poles.size());
    cplx num(1.0, 0.0), den(1.0, 0.0);
    for (const auto& z : analog.zeros) {
        digital.zeros.push_back((f2 + z) / (f2 - z));
        num *= (f2 - z);
    }
    for (const auto& p : analog.poles) {
        digital.poles.push_back((f2 + p) / (f2 - p));
        den *= (f2 - p);
    }
    while (digital.zeros.size() < digital.poles.size())
        digital.zeros.emplace_back(-1.0, 0.0);
    digital.gain = analog.gain * (num / den).real();
    return digital;
}

double prewarp(double f_hz, double fs) {
    return 2.0 * fs * std::tan(std::numbers::pi * f_hz / fs);
}

// Pair conjugate poles/zeros into biquads; total gain folded into the first section.
std::vector<BiquadSection> to_sos(const Zpk& d) {
    const std::size_t n = d.poles.size();
    if (n % 2 != 0) throw ConfigError("filter design: internal odd section count");
    // Conjugates sit adjacent after sorting by imaginary part magnitude then real part.
    std::vector<cplx> poles = d.poles, zeros = d.zeros;
    auto key = [](const cplx& a, const cplx& b) {
        if (std::abs(a.real() - b.real()) > 1e-12) return a.real() < b.real();
        return std::abs(a.imag()) < std::abs(b.imag());
    };
    std::sort(poles.begin(), poles.end(), key);
    std::sort(zeros.begin(), zeros.end(), key);
    // Regroup so each section takes a conjugate pair (or two reals).
    auto take_pair = [](std::vector<cplx>& v) {
        cplx a = v.back();
        v.pop_back();
        // find the conjugate (or nearest real) partner
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const double dd = std::abs(v[i] - std::conj(a));
            if (dd < best_d) {
                best_d = dd;
                best = i;
            }
        }
        cplx b = v[best];
        v.erase(v.begin() + best);
        return std::make_pair(a, b);
    };
    std::vector<BiquadSection> sos;
    bool first = true;
    while (!poles.empty()) {
        auto [p1, p2] = take_pair(poles);
        auto [z1, z2] = take_pair(zeros);
        BiquadSection s;
        s.b0 = 1.0;
        s.b1 = -(z1 + z2).real();
        s.b2 = (z1 * z2).real();
        s.a1 = -(p1 + p2).real();
        s.a2 = (p1 * p2).real();
        if (first) {
            s.b0 *= d.gain;
            s.b1 *= d.gain;
            s.b2 *= d.gain;
            first = false;
        }
        sos.push_back(s);
    }
    return sos;
}

void check_order(int order) {
    if (order < 2 || order % 2 != 0)
        throw ConfigError("filter order must be even and >= 2, got " +
                          std::to_string(order));
}

}  // namespace

std::vector<BiquadSection> design_butterworth_lowpass(int order, double cutoff_hz,
                                                      double fs) {
    check_order(order);
    if (!(cutoff_hz > 0.0) || cutoff_hz >= fs / 2.0)
        throw ConfigError("low-pass cutoff " + std::to_string(cutoff_hz) +
                          " Hz outside (0, Nyquist) for fs " + std::to_string(fs));
    const double wc = prewarp(cutoff_hz, fs);
    Zpk analog;
    analog.poles = prototype_poles(order);
    for (auto& p : analog.poles) p *= wc;
    analog.gain = std::pow(wc, order);
    return to_sos(bilinear(analog, fs));
}

std::vector<BiquadSection> design_butterworth_bandpass(int order, double low_hz,
                                                       double high_hz, double fs) {
    check_order(order);
    if (!(low_hz > 0.0) || !(low_hz < high_hz) || high_hz >= fs / 2.0)
        throw ConfigError("band edges [" + std::to_string(low_hz) + ", " +
                          std::to_string(high_hz) + "] Hz invalid for fs " +
                          std::to_string(fs));
    const double wl = prewarp(low_hz, fs), wh = prewarp(high_hz, fs);
    const double w0 = std::sqrt(wl * wh), bw = wh - wl;
    Zpk analog;
    analog.gain = std::pow(bw, order);
    // Low-pass to band-pass: each prototype pole becomes a quadratic pair;
    // order zeros appear at s = 0.
    for (const auto& p : prototype_poles(order)) {
        const cplx bp = bw * p * 0.5;
        const cplx disc = std::sqrt(bp * bp - w0 * w0);
        analog.poles.push_back(bp + disc);
        analog.poles.push_back(bp - disc);
        analog.zeros.emplace_back(0.0, 0.0);
    }
    return to_sos(bilinear(analog, fs));
}

std::vector<double> sos_filter(const std::vector<BiquadSection>& sos,
                               const std::vector<double>& x) {
    std::vector<double> y = x;
    double level = y.empty() ? 0.0 : y.front();  // steady-state init at first sample
    for (const auto& s : sos) {
        const double denom = 1.0 + s.a1 + s.a2;
        const double gdc = denom != 0.0 ? (s.b0 + s.b1 + s.b2) / denom : 0.0;
        // State such that a constant input `level` produces constant output.
        double z2 = (s.b2 - s.a2 * gdc) * level;
        double z1 = (s.b1 + s.b2 - (s.a1 + s.a2) * gdc) * level;
        for (auto& v : y) {
            const double out = s.b0 * v + z1;
            z1 = s.b1 * v - s.a1 * out + z2;
            z2 = s.b2 * v - s.a2 * out;
            v = out;
        }
        level *= gdc;
    }
    return y;
}

std::vector<double> filtfilt(const std::vector<BiquadSection>& sos,
                             const std::vector<double>& x, std::size_t pad) {
    const std::size_t n = x.size();
    if (n <= pad)
        throw DataError("filtfilt: signal length " + std::to_string(n) +
                        " must exceed padding " + std::to_string(pad));
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) ext.push_back(2.0 * x[0] - x[pad - i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 0; i < pad; ++i)
        ext.push_back(2.0 * x[n - 1] - x[n - 2 - i]);

    // Forward-backward and backward-forward passes averaged: identical in
    // steady state, and makes the whole operation exactly symmetric under
    // time reversal (padding transients alone are not).
    std::vector<double> fb = sos_filter(sos, ext);
    std::reverse(fb.begin(), fb.end());
    fb = sos_filter(sos, fb);
    std::reverse(fb.begin(), fb.end());

    std::reverse(ext.begin(), ext.end());
    std::vector<double> bf = sos_filter(sos, ext);
    std::reverse(bf.begin(), bf.end());
    bf = sos_filter(sos, bf);

    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * (fb[pad + i] + bf[pad + i]);
    return out;
}

Matrix bandpass_filter(const Matrix& signal, const FilterSpec& spec, double fs) {
    if (spec.family != FilterFamily::maximally_flat)
        throw ConfigError("unsupported filter family");
    if (spec.low_hz < 0.0 || spec.low_hz >= spec.high_hz || spec.high_hz >= fs / 2.0)
        throw ConfigError("filter band [" + std::to_string(spec.low_hz) + ", " +
                          std::to_string(spec.high_hz) + "] Hz invalid for fs " +
                          std::to_string(fs));
    check_order(spec.order);
    const std::size_t pad = 3 * static_cast<std::size_t>(spec.order);
    if (signal.cols() <= pad)
        throw DataError("signal too short to filter: " + std::to_string(signal.cols()) +
                        " samples, need > " + std::to_string(pad));
    const auto sos = spec.low_hz > 0.0
                         ? design_butterworth_bandpass(spec.order, spec.low_hz,
                                                       spec.high_hz, fs)
                         : design_butterworth_lowpass(spec.order, spec.high_hz, fs);
    Matrix out(signal.rows(), signal.cols());
    std::vector<double> row(signal.cols());
    for (std::size_t r = 0; r < signal.rows(); ++r) {
        std::copy(signal.row_ptr(r), signal.row_ptr(r) + signal.cols(), row.begin());
        const auto filtered =
            spec.zero_phase ? filtfilt(sos, row, pad) : sos_filter(sos, row);
        std::copy(filtered.begin(), filtered.end(), out.row_ptr(r));
    }
    return out;
}

Matrix downsample(const Matrix& signal, double fs_in, double fs_out) {
    if (!(fs_out > 0.0) || !(fs_in > 0.0))
        throw ConfigError("downsample: sampling rates must be positive");
    const double ratio = fs_in / fs_out;
    const auto factor = static_cast<std::size_t>(std::llround(ratio));
    if (factor < 1 || std::abs(ratio - static_cast<double>(factor)) > 1e-9)
        throw ConfigError("downsample: fs_in/fs_out must be an integer, got " +
                          std::to_string(ratio));
    if (factor == 1) return signal;
    FilterSpec aa;
    aa.low_hz = 0.0;
    aa.high_hz = 0.4 * fs_out;
    aa.order = 8;
    aa.zero_phase = true;
    const Matrix smoothed = bandpass_filter(signal, aa, fs_in);
    const std::size_t Tout = (signal.cols() + factor - 1) / factor;
    Matrix out(signal.rows(), Tout);
    for (std::size_t r = 0; r < signal.rows(); ++r)
        for (std::size_t t = 0; t < Tout; ++t) out(r, t) = smoothed(r, t * factor);
    return out;
}

Matrix mbll_convert(const Matrix& intensity_wl1, const Matrix& intensity_wl2,
                    const std::vector<double>& baseline_wl1,
                    const std::vector<double>& baseline_wl2, const MbllParams& p) {
    const std::size_t C = intensity_wl1.rows(), T = intensity_wl1.cols();
    if (intensity_wl2.rows() != C || intensity_wl2.cols() != T)
        throw ShapeError("mbll: wavelength matrices differ: " +
                         intensity_wl1.shape_str() + " vs " + intensity_wl2.shape_str());
    if (baseline_wl1.size() != C || baseline_wl2.size() != C)
        throw ShapeError("mbll: baseline length must equal channel count");
    if (!(p.distance_cm > 0.0)) throw ConfigError("mbll: distance_cm must be > 0");
    if (!(p.dpf[0] > 0.0) || !(p.dpf[1] > 0.0))
        throw ConfigError("mbll: dpf must be > 0");
    const double det = p.extinction[0][0] * p.extinction[1][1] -
                       p.extinction[0][1] * p.extinction[1][0];
    if (std::abs(det) < 1e-12)
        throw ConfigError("mbll: extinction matrix is singular");
    for (std::size_t c = 0; c < C; ++c) {
        if (!(baseline_wl1[c] > 0.0) || !(baseline_wl2[c] > 0.0))
            throw DataError("mbll: non-positive baseline at channel " + std::to_string(c));
    }

    Matrix hbo(C, T);
    const double l1 = p.distance_cm * p.dpf[0];
    const double l2 = p.distance_cm * p.dpf[1];
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t t = 0; t < T; ++t) {
            const double i1 = intensity_wl1(c, t), i2 = intensity_wl2(c, t);
            if (!(i1 > 0.0) || !(i2 > 0.0))
                throw DataError("mbll: non-positive intensity at channel " +
                                std::to_string(c) + ", sample " + std::to_string(t));
            const double od1 = -std::log10(i1 / baseline_wl1[c]) / l1;
            const double od2 = -std::log10(i2 / baseline_wl2[c]) / l2;
            // Solve extinction * [dHbO, dHbR]^T = [od1, od2]^T
            hbo(c, t) = (od1 * p.extinction[1][1] - od2 * p.extinction[0][1]) / det;
        }
    }
    return hbo;
}

Matrix zscore_epoch(const Matrix& epoch) {
    if (epoch.cols() < 2)
        throw DataError("zscore: need at least 2 samples per channel, got " +
                        std::to_string(epoch.cols()));
    Matrix out(epoch.rows(), epoch.cols());
    const double n = static_cast<double>(epoch.cols());
    for (std::size_t r = 0; r < epoch.rows(); ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < epoch.cols(); ++c) mean += epoch(r, c);
        mean /= n;
        double ss = 0.0;
        for (std::size_t c = 0; c < epoch.cols(); ++c) {
            const double d = epoch(r, c) - mean;
            ss += d * d;
        }
        const double sd = std::sqrt(ss / (n - 1.0));  // sample (n-1) convention
        if (sd == 0.0) continue;                      // constant channel -> all zeros
        for (std::size_t c = 0; c < epoch.cols(); ++c)
            out(r, c) = (epoch(r, c) - mean) / sd;
    }
    return out;
}

std::vector<Matrix> segment_epochs(const Matrix& continuous,
                                   const std::vector<std::size_t>& event_starts,
                                   double duration_s, double fs) {
    const auto dur = static_cast<std::size_t>(std::llround(duration_s * fs));
    if (dur == 0) throw ConfigError("segment_epochs: zero-length window");
    std::vector<Matrix> epochs;
    epochs.reserve(event_starts.size());
    for (std::size_t e = 0; e < event_starts.size(); ++e) {
        const std::size_t start = event_starts[e];
        if (start + dur > continuous.cols())
            throw DataError("segment_epochs: event " + std::to_string(e) + " at sample " +
                            std::to_string(start) + " overruns recording of " +
                            std::to_string(continuous.cols()) + " samples");
        Matrix ep(continuous.rows(), dur);
        for (std::size_t r = 0; r < continuous.rows(); ++r)
            std::copy(continuous.row_ptr(r) + start, continuous.row_ptr(r) + start + dur,
                      ep.row_ptr(r));
        epochs.push_back(std::move(ep));
    }
    return epochs;
}

std::size_t sliding_window_count(std::size_t total, std::size_t window) {
    const std::size_t stride = window / 2;
    return (total - window) / stride + 1;
}

std::vector<Matrix> sliding_windows(const Matrix& signal, std::size_t window) {
    if (window == 0 || window > signal.cols())
        throw ConfigError("sliding_windows: window " + std::to_string(window) +
                          " invalid for " + std::to_string(signal.cols()) + " samples");
    const std::size_t stride = window / 2;
    const std::size_t count = sliding_window_count(signal.cols(), window);
    std::vector<Matrix> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::size_t start = i * stride;
        Matrix w(signal.rows(), window);
        for (std::size_t r = 0; r < signal.rows(); ++r)
            std::copy(signal.row_ptr(r) + start, signal.row_ptr(r) + start + window,
                      w.row_ptr(r));
        out.push_back(std::move(w));
    }
    return out;
}

RoiMap RoiMap::default_eight(std::size_t n_channels) {
    RoiMap m;
    m.roi_names = {"DLPFC",          "FEF",
                   "Motor Cortex",   "Broca Left",
                   "Broca Right",    "Temporal Left",
                   "Temporal Right", "Visual Cortex"};
    m.channel_to_roi.resize(n_channels);
    for (std::size_t c = 0; c < n_channels; ++c)
        m.channel_to_roi[c] = c % m.roi_names.size();
    m.excluded_rois = {7};  // Visual Cortex
    return m;
}

Matrix map_rois(const Matrix& fnirs, const RoiMap& map) {
    if (map.channel_to_roi.size() != fnirs.rows())
        throw ShapeError("map_rois: map covers " +
                         std::to_string(map.channel_to_roi.size()) + " channels, data has " +
                         std::to_string(fnirs.rows()));
    for (std::size_t c = 0; c < map.channel_to_roi.size(); ++c)
        if (map.channel_to_roi[c] >= map.roi_names.size())
            throw DataError("map_rois: channel " + std::to_string(c) +
                            " maps to unknown ROI index");

    std::vector<std::size_t> retained;
    for (std::size_t r = 0; r < map.roi_names.size(); ++r)
        if (!map.excluded_rois.count(r)) retained.push_back(r);

    Matrix out(retained.size(), fnirs.cols());
    for (std::size_t oi = 0; oi < retained.size(); ++oi) {
        const std::size_t roi = retained[oi];
        std::vector<std::size_t> good;
        std::size_t total = 0;
        for (std::size_t c = 0; c < fnirs.rows(); ++c) {
            if (map.channel_to_roi[c] != roi) continue;
            ++total;
            if (!map.bad_channels.count(c)) good.push_back(c);
        }
        if (total == 0)
            throw DataError("map_rois: ROI '" + map.roi_names[roi] + "' has no channels");
        if (good.empty())
            throw DataError("map_rois: ROI '" + map.roi_names[roi] +
                            "' has no good channels to impute from");
        // Imputing a bad channel with the ROI mean and then averaging equals
        // averaging the good channels directly.
        for (std::size_t t = 0; t < fnirs.cols(); ++t) {
            double acc = 0.0;
            for (auto c : good) acc += fnirs(c, t);
            out(oi, t) = acc / static_cast<double>(good.size());
        }
    }
    return out;
}

}  // namespace neuroclip::dsp
