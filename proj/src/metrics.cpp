// SPDX-License-Identifier: Apache-2.0
#include "nbfusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "nbfusion/errors.hpp"

namespace nbf {

std::int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::row_sum(std::size_t i) const {
    std::int64_t s = 0;
    for (std::size_t j = 0; j < classes; ++j) s += at(i, j);
    return s;
}

std::int64_t ConfusionMatrix::col_sum(std::size_t j) const {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < classes; ++i) s += at(i, j);
    return s;
}

std::int64_t ConfusionMatrix::trace() const {
    std::int64_t s = 0;
    for (std::size_t i = 0; i < classes; ++i) s += at(i, i);
    return s;
}

ConfusionMatrix confusion(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels,
                          std::size_t classes) {
    if (preds.size() != labels.size()) {
        throw Error("confusion: " + std::to_string(preds.size()) + " predictions vs " +
                    std::to_string(labels.size()) + " labels");
    }
    if (preds.empty()) throw Error("confusion: empty input");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] >= classes) {
            throw IndexError("confusion: label " + std::to_string(labels[i]) + " out of range for " +
                             std::to_string(classes) + " classes");
        }
        if (preds[i] >= classes) {
            throw IndexError("confusion: prediction " + std::to_string(preds[i]) + " out of range for " +
                             std::to_string(classes) + " classes");
        }
        cm.at(labels[i], preds[i]) += 1;
    }
    return cm;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
    const std::int64_t n = cm.total();
    if (n < 1) throw Error("compute_metrics: empty confusion matrix");
    const double total = static_cast<double>(n);
    const std::size_t k = cm.classes;

    MetricsReport rep;
    rep.acc = static_cast<double>(cm.trace()) / total;

    double bacc_sum = 0.0;
    double prec_w = 0.0, rec_w = 0.0, f1_w = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        const double tp = static_cast<double>(cm.at(c, c));
        const double support = static_cast<double>(cm.row_sum(c));
        const double predicted = static_cast<double>(cm.col_sum(c));
        if (support == 0.0) rep.zero_support_classes.push_back(c);
        const double recall = support > 0.0 ? tp / support : 0.0;
        const double precision = predicted > 0.0 ? tp / predicted : 0.0;
        const double f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall)
                                                     : 0.0;
        bacc_sum += recall;
        const double weight = support / total;
        prec_w += weight * precision;
        rec_w += weight * recall;
        f1_w += weight * f1;
    }
    rep.bacc = bacc_sum / static_cast<double>(k);
    rep.prec_weighted = prec_w;
    rep.rec_weighted = rec_w;
    rep.f1_weighted = f1_w;

    double pe = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        pe += static_cast<double>(cm.row_sum(c)) * static_cast<double>(cm.col_sum(c));
    }
    pe /= total * total;
    rep.kappa = pe >= 1.0 ? 0.0 : (rep.acc - pe) / (1.0 - pe);

    rep.auroc = std::nan("");
    return rep;
}

double auroc(const std::vector<std::vector<double>>& scores, const std::vector<std::size_t>& labels,
             std::vector<std::size_t>* skipped) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw Error("auroc: scores and labels must be nonempty and aligned");
    }
    const std::size_t k = scores.front().size();
    if (k < 2) throw Error("auroc: need at least two classes");
    const std::size_t n = scores.size();
    for (const auto& row : scores) {
        if (row.size() != k) throw Error("auroc: ragged score rows");
        for (double v : row) {
            if (!std::isfinite(v)) throw EvalError("auroc: non-finite score");
        }
    }

    double sum = 0.0;
    std::size_t used = 0;
    std::vector<std::size_t> order(n);
    std::vector<double> col(n);
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t pos = 0;
        for (std::size_t i = 0; i < n; ++i) {
            col[i] = scores[i][c];
            if (labels[i] == c) ++pos;
        }
        const std::size_t neg = n - pos;
        if (pos == 0 || neg == 0) {
            if (skipped) skipped->push_back(c);
            continue;
        }
        // Midrank statistic: AUC = (R_pos - pos(pos+1)/2) / (pos * neg),
        // with tied scores sharing the average rank.
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return col[a] < col[b]; });
        double rank_sum_pos = 0.0;
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j < n && col[order[j]] == col[order[i]]) ++j;
            const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
            for (std::size_t t = i; t < j; ++t) {
                if (labels[order[t]] == c) rank_sum_pos += midrank;
            }
            i = j;
        }
        const double p = static_cast<double>(pos), q = static_cast<double>(neg);
        sum += (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q);
        ++used;
    }
    if (used == 0) throw EvalError("auroc: undefined, every class lacks positives or negatives");
    return sum / static_cast<double>(used);
}

MetricsReport evaluate_predictions(const std::vector<std::vector<double>>& scores,
                                   const std::vector<std::size_t>& labels, std::size_t classes) {
    std::vector<std::size_t> preds(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        preds[i] = static_cast<std::size_t>(
            std::max_element(scores[i].begin(), scores[i].end()) - scores[i].begin());
    }
    MetricsReport rep = compute_metrics(confusion(preds, labels, classes));
    rep.auroc = auroc(scores, labels, &rep.auroc_skipped_classes);
    return rep;
}

std::string MetricsReport::to_record() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "acc=%.6f\nbacc=%.6f\nkappa=%.6f\nf1=%.6f\nprec=%.6f\nrec=%.6f\nauroc=%.6f\n", acc,
                  bacc, kappa, f1_weighted, prec_weighted, rec_weighted, auroc);
    return buf;
}

}  // namespace nbf
