#include "neuroclip/stats.hpp"

#include <algorithm>
#include <cmath>

#include "neuroclip/errors.hpp"

namespace neuroclip::stats {

namespace {

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& pre,
                                    const std::vector<double>& post) {
    if (pre.size() != post.size() || pre.empty())
        throw DataError("wilcoxon: need equal nonempty paired lists");

    std::vector<double> diffs;
    for (std::size_t i = 0; i < pre.size(); ++i) {
        const double d = post[i] - pre[i];
        if (d != 0.0) diffs.push_back(d);
    }
    if (diffs.empty())
        throw DataError("wilcoxon: all differences are zero (degenerate data)");

    const std::size_t n = diffs.size();
    // Mid-ranks of |d|.
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(diffs[a]) < std::abs(diffs[b]);
    });
    std::vector<double> ranks(n, 0.0);
    double tie_correction = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && std::abs(diffs[order[j]]) == std::abs(diffs[order[i]])) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j - 1)) / 2.0 +
                           1.0;  // 1-based
        for (std::size_t k = i; k < j; ++k) ranks[order[k]] = mid;
        const double t = static_cast<double>(j - i);
        tie_correction += t * t * t - t;
        i = j;
    }

    WilcoxonResult res;
    res.n_effective = n;
    for (std::size_t i = 0; i < n; ++i)
        if (diffs[i] > 0.0) res.w_statistic += ranks[i];

    if (n <= 20) {
        // Exact null: every sign assignment equally likely given the ranks.
        res.exact = true;
        const std::uint64_t total = 1ULL << n;
        std::uint64_t n_le = 0, n_ge = 0;
        const double eps = 1e-12;
        for (std::uint64_t mask = 0; mask < total; ++mask) {
            double w = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (mask & (1ULL << i)) w += ranks[i];
            if (w <= res.w_statistic + eps) ++n_le;
            if (w >= res.w_statistic - eps) ++n_ge;
        }
        const double p_le = static_cast<double>(n_le) / static_cast<double>(total);
        const double p_ge = static_cast<double>(n_ge) / static_cast<double>(total);
        res.p_two_sided = std::min(1.0, 2.0 * std::min(p_le, p_ge));
    } else {
        const double nn = static_cast<double>(n);
        const double mu = nn * (nn + 1.0) / 4.0;
        const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 -
                           tie_correction / 48.0;
        const double sd = std::sqrt(var);
        // Continuity correction toward the mean.
        double z;
        if (res.w_statistic > mu)
            z = (res.w_statistic - mu - 0.5) / sd;
        else if (res.w_statistic < mu)
            z = (res.w_statistic - mu + 0.5) / sd;
        else
            z = 0.0;
        res.p_two_sided = std::min(1.0, 2.0 * normal_sf(std::abs(z)));
    }
    return res;
}

std::vector<std::pair<std::string, CravingLevel>> craving_level_labels(
    std::vector<std::pair<std::string, double>> scores) {
    if (scores.empty() || scores.size() % 3 != 0)
        throw DataError("craving_level_labels: item count " +
                        std::to_string(scores.size()) + " is not a multiple of 3");
    std::sort(scores.begin(), scores.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    const std::size_t third = scores.size() / 3;
    std::vector<std::pair<std::string, CravingLevel>> out;
    out.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        CravingLevel level = i < third ? CravingLevel::high
                             : i < 2 * third ? CravingLevel::medium
                                             : CravingLevel::low;
        out.emplace_back(scores[i].first, level);
    }
    return out;
}

}  // namespace neuroclip::stats
