#pragma once

// Gradient-based temporal saliency over the encoders' final convolutional
// activations, plus threshold-crossing onset estimation.

#include <optional>
#include <string>
#include <vector>

#include "neuroclip/matrix.hpp"
#include "neuroclip/model.hpp"

namespace neuroclip::saliency {

struct ActivationCapture {
    Matrix activations;  // A, [N_K x T']
    Matrix gradients;    // dy_c/dA, same shape
    std::size_t class_id = 0;
};

struct SaliencyProfile {
    std::vector<double> profile;  // max-normalized; all-zero when degenerate
    std::size_t n_samples = 0;
    double fs_feature = 0.0;  // Hz of the feature axis
    double threshold = 0.4;
    bool degenerate = false;
};

// Runs the unimodal forward, backpropagates from the pre-softmax score of
// class_id, and grabs activations and gradients at the tap point.
ActivationCapture capture(const model::ModelParams& m, const Matrix& epoch,
                          model::Modality mod, const std::string& head_id,
                          std::size_t class_id);

// Channel weights = temporal gradient means; per-channel ReLU(w * A); channel mean.
std::vector<double> sample_saliency(const ActivationCapture& cap);

SaliencyProfile group_profile(const std::vector<std::vector<double>>& samples,
                              double fs_feature, double threshold = 0.4);

// First threshold crossing with linear interpolation between bracketing
// samples, in seconds; nullopt when never crossed.
std::optional<double> onset_delay(const SaliencyProfile& p);

// CSV rows (time_s, saliency) with frame-centered times, then a summary line.
void write_profile_csv(const SaliencyProfile& p, const std::string& path);

}  // namespace neuroclip::saliency
