#include "neuroclip/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "neuroclip/autodiff.hpp"
#include "neuroclip/errors.hpp"

namespace neuroclip::saliency {

ActivationCapture capture(const model::ModelParams& m, const Matrix& epoch,
                          model::Modality mod, const std::string& head_id,
                          std::size_t class_id) {
    auto fwd = model::forward_unimodal(m, epoch, mod, head_id);
    if (class_id >= fwd.logits->value.cols())
        throw DataError("capture: class " + std::to_string(class_id) +
                        " out of range for head '" + head_id + "'");
    ad::NodePtr y = ad::slice(fwd.logits, 0, 1, class_id, class_id + 1);
    ad::backward(y);

    ActivationCapture cap;
    cap.class_id = class_id;
    const auto& av = fwd.activations->value;
    cap.activations = Matrix(av.rows(), av.cols());
    cap.activations.flat() = av.flat();
    cap.gradients = Matrix(av.rows(), av.cols());
    cap.gradients.flat() = fwd.activations->grad_ref().flat();
    m.zero_all_grads();  // capture must not leak gradient state into training
    return cap;
}

std::vector<double> sample_saliency(const ActivationCapture& cap) {
    const std::size_t nk = cap.activations.rows(), tp = cap.activations.cols();
    if (cap.gradients.rows() != nk || cap.gradients.cols() != tp)
        throw ShapeError("sample_saliency: activation/gradient shapes differ");
    std::vector<double> out(tp, 0.0);
    for (std::size_t k = 0; k < nk; ++k) {
        double w = 0.0;
        for (std::size_t t = 0; t < tp; ++t) w += cap.gradients(k, t);
        w /= static_cast<double>(tp);
        for (std::size_t t = 0; t < tp; ++t)
            out[t] += std::max(0.0, w * cap.activations(k, t));
    }
    for (auto& v : out) v /= static_cast<double>(nk);
    return out;
}

SaliencyProfile group_profile(const std::vector<std::vector<double>>& samples,
                              double fs_feature, double threshold) {
    if (samples.empty()) throw DataError("group_profile: no sample profiles");
    const std::size_t tp = samples[0].size();
    for (const auto& s : samples)
        if (s.size() != tp)
            throw ShapeError("group_profile: sample profile lengths differ");

    SaliencyProfile p;
    p.n_samples = samples.size();
    p.fs_feature = fs_feature;
    p.threshold = threshold;
    p.profile.assign(tp, 0.0);
    for (const auto& s : samples)
        for (std::size_t t = 0; t < tp; ++t) p.profile[t] += s[t];
    double mx = 0.0;
    for (auto& v : p.profile) {
        v /= static_cast<double>(samples.size());
        mx = std::max(mx, v);
    }
    if (mx > 0.0)
        for (auto& v : p.profile) v /= mx;
    else
        p.degenerate = true;
    return p;
}

std::optional<double> onset_delay(const SaliencyProfile& p) {
    for (std::size_t i = 0; i < p.profile.size(); ++i) {
        if (p.profile[i] < p.threshold) continue;
        if (i == 0) return 0.0;
        const double prev = p.profile[i - 1], cur = p.profile[i];
        const double frac = (p.threshold - prev) / (cur - prev);
        return (static_cast<double>(i - 1) + frac) / p.fs_feature;
    }
    return std::nullopt;
}

void write_profile_csv(const SaliencyProfile& p, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write saliency CSV '" + path + "'");
    out << "time_s,saliency\n";
    for (std::size_t i = 0; i < p.profile.size(); ++i)
        out << (static_cast<double>(i) + 0.5) / p.fs_feature << "," << p.profile[i]
            << "\n";
    const auto cross = onset_delay(p);
    out << "# threshold=" << p.threshold << ",crossing_s="
        << (cross ? std::to_string(*cross) : std::string("none"))
        << ",n_samples=" << p.n_samples << (p.degenerate ? ",degenerate" : "") << "\n";
    if (!out) throw DataError("short write to '" + path + "'");
}

}  // namespace neuroclip::saliency
