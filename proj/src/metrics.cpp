#include "neuroclip/metrics.hpp"

#include <cmath>
#include <sstream>
#include <tuple>

#include "neuroclip/errors.hpp"

namespace neuroclip::metrics {

namespace {

double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double f1_of(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

Metrics compute_metrics(const std::vector<std::size_t>& preds,
                        const std::vector<std::size_t>& labels,
                        std::size_t positive_class, std::size_t n_classes) {
    if (preds.size() != labels.size() || preds.empty())
        throw DataError("compute_metrics: need equal nonempty prediction/label lists");
    if (n_classes < 2) throw DataError("compute_metrics: need >= 2 classes");
    if (positive_class >= n_classes)
        throw DataError("compute_metrics: positive class out of range");

    Metrics m;
    m.n = preds.size();
    m.n_classes = n_classes;
    m.positive_class = positive_class;
    m.confusion.assign(n_classes, std::vector<std::size_t>(n_classes, 0));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] >= n_classes || labels[i] >= n_classes)
            throw DataError("compute_metrics: label outside class set at index " +
                            std::to_string(i));
        m.confusion[labels[i]][preds[i]]++;
        if (preds[i] == labels[i]) ++correct;
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(m.n);

    auto class_counts = [&](std::size_t c) {
        double tp = static_cast<double>(m.confusion[c][c]);
        double fn = 0.0, fp = 0.0;
        for (std::size_t j = 0; j < n_classes; ++j) {
            if (j == c) continue;
            fn += static_cast<double>(m.confusion[c][j]);
            fp += static_cast<double>(m.confusion[j][c]);
        }
        return std::tuple{tp, fp, fn};
    };

    double macro_p = 0.0, macro_r = 0.0, macro_f = 0.0;
    double tp_all = 0.0, fp_all = 0.0, fn_all = 0.0;
    for (std::size_t c = 0; c < n_classes; ++c) {
        auto [tp, fp, fn] = class_counts(c);
        const double p = safe_div(tp, tp + fp);
        const double r = safe_div(tp, tp + fn);
        macro_p += p;
        macro_r += r;
        macro_f += f1_of(p, r);
        tp_all += tp;
        fp_all += fp;
        fn_all += fn;
        if (c == positive_class) {
            m.precision = p;
            m.recall = r;
            m.sensitivity = r;
            m.f1 = f1_of(p, r);
        }
    }
    m.macro_precision = macro_p / static_cast<double>(n_classes);
    m.macro_recall = macro_r / static_cast<double>(n_classes);
    m.macro_f1 = macro_f / static_cast<double>(n_classes);
    m.micro_precision = safe_div(tp_all, tp_all + fp_all);
    m.micro_recall = safe_div(tp_all, tp_all + fn_all);
    m.micro_f1 = f1_of(m.micro_precision, m.micro_recall);
    return m;
}

MetricsReport aggregate_folds(const std::vector<Metrics>& folds) {
    if (folds.empty()) throw DataError("aggregate_folds: no folds");
    MetricsReport r;
    r.per_fold = folds;
    auto mean_sd = [&](auto get, double& mean, double& sd) {
        double acc = 0.0;
        for (const auto& f : folds) acc += get(f);
        mean = acc / static_cast<double>(folds.size());
        double ss = 0.0;
        for (const auto& f : folds) {
            const double d = get(f) - mean;
            ss += d * d;
        }
        sd = folds.size() > 1
                 ? std::sqrt(ss / static_cast<double>(folds.size() - 1))
                 : 0.0;
    };
    mean_sd([](const Metrics& m) { return m.accuracy; }, r.mean_accuracy, r.sd_accuracy);
    mean_sd([](const Metrics& m) { return m.sensitivity; }, r.mean_sensitivity,
            r.sd_sensitivity);
    mean_sd([](const Metrics& m) { return m.precision; }, r.mean_precision,
            r.sd_precision);
    mean_sd([](const Metrics& m) { return m.recall; }, r.mean_recall, r.sd_recall);
    mean_sd([](const Metrics& m) { return m.f1; }, r.mean_f1, r.sd_f1);
    mean_sd([](const Metrics& m) { return m.macro_f1; }, r.mean_macro_f1, r.sd_macro_f1);
    return r;
}

std::string to_text(const MetricsReport& r) {
    std::ostringstream out;
    out.precision(4);
    out << std::fixed;
    auto line = [&](const char* name, double mean, double sd) {
        out << name << ": " << mean << " (" << mean * 100.0 << "%) +- " << sd << "\n";
    };
    line("accuracy", r.mean_accuracy, r.sd_accuracy);
    line("sensitivity", r.mean_sensitivity, r.sd_sensitivity);
    line("precision", r.mean_precision, r.sd_precision);
    line("recall", r.mean_recall, r.sd_recall);
    line("f1", r.mean_f1, r.sd_f1);
    line("macro_f1", r.mean_macro_f1, r.sd_macro_f1);
    out << "folds: " << r.per_fold.size() << "\n";
    return out.str();
}

std::string to_csv(const MetricsReport& r) {
    std::ostringstream out;
    out << "fold,n,accuracy,sensitivity,precision,recall,f1,macro_f1\n";
    for (std::size_t i = 0; i < r.per_fold.size(); ++i) {
        const auto& m = r.per_fold[i];
        out << i << "," << m.n << "," << m.accuracy << "," << m.sensitivity << ","
            << m.precision << "," << m.recall << "," << m.f1 << "," << m.macro_f1
            << "\n";
    }
    out << "mean," << "," << r.mean_accuracy << "," << r.mean_sensitivity << ","
        << r.mean_precision << "," << r.mean_recall << "," << r.mean_f1 << ","
        << r.mean_macro_f1 << "\n";
    out << "sd," << "," << r.sd_accuracy << "," << r.sd_sensitivity << ","
        << r.sd_precision << "," << r.sd_recall << "," << r.sd_f1 << ","
        << r.sd_macro_f1 << "\n";
    return out.str();
}

}  // namespace neuroclip::metrics
