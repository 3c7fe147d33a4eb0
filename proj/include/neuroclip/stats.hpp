#pragma once

// Paired nonparametric statistics and the craving-level labeling rule.

#include <cstddef>
#include <string>
#include <vector>

#include "neuroclip/dataset.hpp"

namespace neuroclip::stats {

struct WilcoxonResult {
    double w_statistic = 0.0;  // sum of ranks of positive differences
    double p_two_sided = 1.0;
    std::size_t n_effective = 0;  // pairs remaining after dropping zero differences
    bool exact = false;           // exact sign enumeration vs normal approximation
};

// Zero differences dropped, ties mid-ranked; exact two-sided p by enumerating
// all 2^n sign assignments for n <= 20, normal approximation with continuity
// and tie corrections above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& pre,
                                    const std::vector<double>& post);

// Sort descending by score, ties broken by id (lexicographic ascending);
// top/middle/bottom thirds labeled high/medium/low.
std::vector<std::pair<std::string, CravingLevel>> craving_level_labels(
    std::vector<std::pair<std::string, double>> scores);

}  // namespace neuroclip::stats
