#pragma once

// Confusion-matrix metrics with macro/micro averaging for multi-class tasks.

#include <cstddef>
#include <string>
#include <vector>

namespace neuroclip::metrics {

struct Metrics {
    std::size_t n = 0;
    std::size_t n_classes = 2;
    std::size_t positive_class = 1;
    double accuracy = 0.0;     // fraction correct == micro accuracy
    double sensitivity = 0.0;  // recall of the designated positive class
    double precision = 0.0;    // positive class
    double recall = 0.0;       // positive class
    double f1 = 0.0;           // positive class
    double macro_precision = 0.0, macro_recall = 0.0, macro_f1 = 0.0;
    double micro_precision = 0.0, micro_recall = 0.0, micro_f1 = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [label][pred]
};

Metrics compute_metrics(const std::vector<std::size_t>& preds,
                        const std::vector<std::size_t>& labels,
                        std::size_t positive_class, std::size_t n_classes);

struct MetricsReport {
    std::vector<Metrics> per_fold;
    double mean_accuracy = 0.0, sd_accuracy = 0.0;
    double mean_sensitivity = 0.0, sd_sensitivity = 0.0;
    double mean_precision = 0.0, sd_precision = 0.0;
    double mean_recall = 0.0, sd_recall = 0.0;
    double mean_f1 = 0.0, sd_f1 = 0.0;
    double mean_macro_f1 = 0.0, sd_macro_f1 = 0.0;
};

MetricsReport aggregate_folds(const std::vector<Metrics>& folds);

std::string to_text(const MetricsReport& r);
std::string to_csv(const MetricsReport& r);

}  // namespace neuroclip::metrics
