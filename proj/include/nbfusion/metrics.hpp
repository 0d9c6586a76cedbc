// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nbf {

// Row = true class, column = predicted class.
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::int64_t> counts;  // classes x classes, row-major

    explicit ConfusionMatrix(std::size_t k) : classes(k), counts(k * k, 0) {}

    std::int64_t& at(std::size_t truth, std::size_t pred) { return counts[truth * classes + pred]; }
    std::int64_t at(std::size_t truth, std::size_t pred) const { return counts[truth * classes + pred]; }
    std::int64_t total() const;
    std::int64_t row_sum(std::size_t i) const;
    std::int64_t col_sum(std::size_t j) const;
    std::int64_t trace() const;
};

ConfusionMatrix confusion(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                          std::size_t classes);

struct MetricsReport {
    double acc = 0.0;
    double bacc = 0.0;
    double kappa = 0.0;
    double f1_weighted = 0.0;
    double prec_weighted = 0.0;
    double rec_weighted = 0.0;
    double auroc = 0.0;  // NaN until scores are supplied

    // Diagnostics, not serialized.
    std::vector<std::size_t> zero_support_classes;
    std::vector<std::size_t> auroc_skipped_classes;

    // Flat key=value record, six decimal places, keys
    // acc, bacc, kappa, f1, prec, rec, auroc.
    std::string to_record() const;
};

// Everything except AUROC, from the confusion matrix alone. Multiclass
// reduction: one-vs-rest per class; support weighting for precision, recall
// and F1; unweighted class mean for balanced accuracy. Classes with a zero
// denominator contribute 0 and are flagged.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

// Macro one-vs-rest AUROC from per-sample score vectors via the midrank
// statistic (ties get half credit). Classes lacking positives or negatives
// are skipped; if every class is skipped the value is undefined.
double auroc(const std::vector<std::vector<double>>& scores, const std::vector<std::size_t>& labels,
             std::vector<std::size_t>* skipped = nullptr);

// Full report: confusion-matrix metrics plus AUROC from scores.
MetricsReport evaluate_predictions(const std::vector<std::vector<double>>& scores,
                                   const std::vector<std::size_t>& labels, std::size_t classes);

}  // namespace nbf
