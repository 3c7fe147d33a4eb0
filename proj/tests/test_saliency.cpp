#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "neuroclip/errors.hpp"
#include "neuroclip/saliency.hpp"

using namespace neuroclip;
using namespace neuroclip::saliency;

namespace {

Matrix random_epoch(std::size_t c, std::size_t t, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix m(c, t);
    for (auto& v : m.flat()) v = g(rng);
    return m;
}

model::ModelParams tiny_model(std::uint64_t seed) {
    model::ModelDims d;
    d.eeg_channels = 2;
    d.fnirs_channels = 3;
    auto m = model::make_model(d, seed);
    model::add_head(m, "bin", 2, seed + 1);
    return m;
}

}  // namespace

TEST_CASE("capture: zeroed head weights give zero gradients") {
    auto m = tiny_model(1);
    auto& h = m.heads.at("bin");
    for (auto* p : {&h.w1, &h.b1, &h.w2, &h.b2})
        std::fill((*p)->value.flat().begin(), (*p)->value.flat().end(), 0.0);
    auto cap = capture(m, random_epoch(2, 32, 9), model::Modality::eeg, "bin", 1);
    for (double g : cap.gradients.flat()) CHECK(g == 0.0);
}

TEST_CASE("capture: gradients match a hand-applied chain rule on a toy graph") {
    // y = 2*A(0,0) + 3*A(1,2): dy/dA is 2 and 3 at those cells, 0 elsewhere.
    auto a = ad::parameter(ad::Tensor({2, 3}, {1, 2, 3, 4, 5, 6}), "a");
    auto y = ad::add(ad::scale(ad::slice(a, 0, 1, 0, 1), 2.0),
                     ad::scale(ad::slice(a, 1, 2, 2, 3), 3.0));
    ad::backward(y);
    CHECK(a->grad_ref().at(0, 0) == doctest::Approx(2.0));
    CHECK(a->grad_ref().at(1, 2) == doctest::Approx(3.0));
    CHECK(a->grad_ref().at(0, 1) == 0.0);
    CHECK(a->grad_ref().at(1, 1) == 0.0);
}

TEST_CASE("capture: errors on missing head and bad class") {
    auto m = tiny_model(2);
    CHECK_THROWS_AS(capture(m, random_epoch(2, 32, 1), model::Modality::eeg, "none", 0),
                    DataError);
    CHECK_THROWS_AS(capture(m, random_epoch(2, 32, 1), model::Modality::eeg, "bin", 5),
                    DataError);
}

TEST_CASE("capture leaves no gradient residue on parameters") {
    auto m = tiny_model(3);
    (void)capture(m, random_epoch(2, 32, 4), model::Modality::eeg, "bin", 0);
    for (const auto& [name, p] : m.named_params) {
        if (!p->grad_allocated) continue;
        for (double g : p->grad.flat()) CHECK(g == 0.0);
    }
}

TEST_CASE("sample_saliency: uniform capture gives uniform saliency") {
    ActivationCapture cap;
    cap.activations = Matrix(3, 4, 1.0);
    cap.gradients = Matrix(3, 4, 1.0);
    auto s = sample_saliency(cap);
    for (double v : s) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("sample_saliency: non-positive products vanish under the rectifier") {
    ActivationCapture cap;
    cap.activations = Matrix(2, 3, 1.0);
    cap.gradients = Matrix(2, 3, -0.5);
    for (double v : sample_saliency(cap)) CHECK(v == 0.0);
}

TEST_CASE("sample_saliency: two-channel three-step hand evaluation") {
    // w1 = mean(0.3,0.3,0.6) = 0.4; w2 = mean(-0.6,0,0.3) = -0.1
    // relu(w1*[1,-2,3]) = [0.4,0,1.2]; relu(-0.1*[0,2,-1]) = [0,0,0.1]
    // channel mean = [0.2, 0, 0.65]
    ActivationCapture cap;
    cap.activations = Matrix::from_rows({{1, -2, 3}, {0, 2, -1}});
    cap.gradients = Matrix::from_rows({{0.3, 0.3, 0.6}, {-0.6, 0.0, 0.3}});
    auto s = sample_saliency(cap);
    REQUIRE(s.size() == 3);
    CHECK(s[0] == doctest::Approx(0.2));
    CHECK(s[1] == doctest::Approx(0.0));
    CHECK(s[2] == doctest::Approx(0.65));
}

TEST_CASE("group_profile: single sample is its normalized copy") {
    auto p = group_profile({{0.5, 1.0, 0.25}}, 10.0);
    CHECK(p.profile[0] == doctest::Approx(0.5));
    CHECK(p.profile[1] == doctest::Approx(1.0));
    CHECK(p.profile[2] == doctest::Approx(0.25));
    CHECK(p.n_samples == 1);
}

TEST_CASE("group_profile: averaging then normalizing") {
    auto p = group_profile({{0.0, 2.0}, {2.0, 0.0}}, 5.0);
    CHECK(p.profile[0] == doctest::Approx(1.0));
    CHECK(p.profile[1] == doctest::Approx(1.0));
}

TEST_CASE("group_profile: degenerate all-zero input stays zero and is flagged") {
    auto p = group_profile({{0.0, 0.0}, {0.0, 0.0}}, 5.0);
    CHECK(p.degenerate);
    CHECK(p.profile[0] == 0.0);
    CHECK(!onset_delay(p).has_value());
}

TEST_CASE("group_profile: errors on empty and ragged input") {
    CHECK_THROWS_AS(group_profile({}, 1.0), DataError);
    CHECK_THROWS_AS(group_profile({{1.0, 2.0}, {1.0}}, 1.0), ShapeError);
}

TEST_CASE("onset_delay: immediate crossing, interpolation, and no crossing") {
    SaliencyProfile p;
    p.fs_feature = 1.0;
    p.profile = {1.0, 0.9, 0.8};
    CHECK(*onset_delay(p) == doctest::Approx(0.0));

    p.profile = {0.1, 0.2, 0.5, 0.8};
    CHECK(*onset_delay(p) == doctest::Approx(1.0 + (0.4 - 0.2) / (0.5 - 0.2)));

    p.profile = {0.1, 0.2, 0.3};
    CHECK(!onset_delay(p).has_value());

    p.fs_feature = 4.0;
    p.profile = {0.0, 0.8};
    CHECK(*onset_delay(p) == doctest::Approx(0.5 / 4.0));
}

TEST_CASE("positive rescaling of activations leaves the onset estimate unchanged") {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    ActivationCapture cap;
    cap.activations = Matrix(4, 12);
    cap.gradients = Matrix(4, 12);
    for (auto& v : cap.activations.flat()) v = u(rng);
    for (auto& v : cap.gradients.flat()) v = u(rng);

    auto base = sample_saliency(cap);
    ActivationCapture scaled = cap;
    for (auto& v : scaled.activations.flat()) v *= 7.5;
    auto big = sample_saliency(scaled);
    for (std::size_t t = 0; t < base.size(); ++t)
        CHECK(big[t] == doctest::Approx(7.5 * base[t]));

    auto p1 = group_profile({base}, 2.0);
    auto p2 = group_profile({big}, 2.0);
    for (std::size_t t = 0; t < p1.profile.size(); ++t)
        CHECK(p1.profile[t] == doctest::Approx(p2.profile[t]));
    const auto d1 = onset_delay(p1), d2 = onset_delay(p2);
    CHECK(d1.has_value() == d2.has_value());
    if (d1) CHECK(*d1 == doctest::Approx(*d2));
}

TEST_CASE("saliency profiles are non-negative by construction") {
    std::mt19937_64 rng(44);
    std::normal_distribution<double> g(0.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        ActivationCapture cap;
        cap.activations = Matrix(3, 8);
        cap.gradients = Matrix(3, 8);
        for (auto& v : cap.activations.flat()) v = g(rng);
        for (auto& v : cap.gradients.flat()) v = g(rng);
        for (double v : sample_saliency(cap)) CHECK(v >= 0.0);
    }
}

TEST_CASE("capture on a trained-ish model produces a usable profile end to end") {
    auto m = tiny_model(5);
    std::vector<std::vector<double>> profs;
    for (int i = 0; i < 3; ++i) {
        auto cap = capture(m, random_epoch(3, 24, 100 + i), model::Modality::fnirs,
                           "bin", 1);
        profs.push_back(sample_saliency(cap));
    }
    auto p = group_profile(profs, 6.0);
    CHECK(p.profile.size() == 12);
    CHECK(p.n_samples == 3);
}
