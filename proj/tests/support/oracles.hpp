// SPDX-License-Identifier: Apache-2.0
// Test-side reference implementations, kept independent of the library code
// they check: definitional metric arithmetic, threshold-sweep AUROC, a tiny
// one-sided Jacobi SVD, a scalar Adam recurrence and a logistic-regression
// probe.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <set>
#include <vector>

#include "nbfusion/metrics.hpp"
#include "nbfusion/rng.hpp"

namespace oracles {

struct NaiveMetrics {
    double acc = 0.0;
    double bacc = 0.0;
    double kappa = 0.0;
    double f1_weighted = 0.0;
    double prec_weighted = 0.0;
    double rec_weighted = 0.0;
};

// Direct arithmetic of the one-vs-rest definitions, no shared code with the
// library implementation.
inline NaiveMetrics naive_metrics(const nbf::ConfusionMatrix& cm) {
    const std::size_t k = cm.classes;
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) total += static_cast<double>(cm.at(i, j));
    }
    NaiveMetrics m;
    double diag = 0.0;
    for (std::size_t i = 0; i < k; ++i) diag += static_cast<double>(cm.at(i, i));
    m.acc = diag / total;

    for (std::size_t c = 0; c < k; ++c) {
        double tp = static_cast<double>(cm.at(c, c));
        double fn = 0.0, fp = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (j != c) {
                fn += static_cast<double>(cm.at(c, j));
                fp += static_cast<double>(cm.at(j, c));
            }
        }
        const double support = tp + fn;
        const double rec = (tp + fn) > 0.0 ? tp / (tp + fn) : 0.0;
        const double prec = (tp + fp) > 0.0 ? tp / (tp + fp) : 0.0;
        const double f1 = (prec + rec) > 0.0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
        m.bacc += rec / static_cast<double>(k);
        m.rec_weighted += (support / total) * rec;
        m.prec_weighted += (support / total) * prec;
        m.f1_weighted += (support / total) * f1;
    }

    double pe = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double row = 0.0, col = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            row += static_cast<double>(cm.at(c, j));
            col += static_cast<double>(cm.at(j, c));
        }
        pe += (row / total) * (col / total);
    }
    m.kappa = pe >= 1.0 ? 0.0 : (m.acc - pe) / (1.0 - pe);
    return m;
}

// Binary AUROC by sweeping every distinct threshold and integrating TPR over
// FPR with the trapezoid rule.
inline double sweep_auroc(const std::vector<double>& scores, const std::vector<bool>& positive) {
    std::set<double> uniq(scores.begin(), scores.end());
    std::vector<double> thresholds(uniq.rbegin(), uniq.rend());  // descending
    double pos = 0.0, neg = 0.0;
    for (bool p : positive) (p ? pos : neg) += 1.0;

    std::vector<std::pair<double, double>> roc;  // (fpr, tpr)
    roc.emplace_back(0.0, 0.0);
    for (double thr : thresholds) {
        double tp = 0.0, fp = 0.0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (scores[i] >= thr) {
                if (positive[i]) {
                    tp += 1.0;
                } else {
                    fp += 1.0;
                }
            }
        }
        roc.emplace_back(fp / neg, tp / pos);
    }
    double area = 0.0;
    for (std::size_t i = 1; i < roc.size(); ++i) {
        area += 0.5 * (roc[i].first - roc[i - 1].first) * (roc[i].second + roc[i - 1].second);
    }
    return area;
}

// Macro one-vs-rest over classes that have both positives and negatives.
inline double sweep_auroc_macro(const std::vector<std::vector<double>>& scores,
                                const std::vector<std::size_t>& labels) {
    const std::size_t k = scores.front().size();
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<double> col(scores.size());
        std::vector<bool> pos(scores.size());
        std::size_t npos = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            col[i] = scores[i][c];
            pos[i] = labels[i] == c;
            npos += pos[i] ? 1 : 0;
        }
        if (npos == 0 || npos == scores.size()) continue;
        sum += sweep_auroc(col, pos);
        ++used;
    }
    return sum / static_cast<double>(used);
}

// Singular values of a small dense matrix via one-sided Jacobi rotations.
inline std::vector<double> singular_values(std::vector<std::vector<double>> a) {
    const std::size_t rows = a.size(), cols = a.front().size();
    // Work on columns of the rows x cols matrix.
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < cols; ++p) {
            for (std::size_t q = p + 1; q < cols; ++q) {
                double app = 0.0, aqq = 0.0, apq = 0.0;
                for (std::size_t i = 0; i < rows; ++i) {
                    app += a[i][p] * a[i][p];
                    aqq += a[i][q] * a[i][q];
                    apq += a[i][p] * a[i][q];
                }
                off = std::max(off, std::fabs(apq));
                if (std::fabs(apq) < 1e-15 * std::sqrt(app * aqq) || apq == 0.0) continue;
                const double tau = (aqq - app) / (2.0 * apq);
                const double t = (tau >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(tau) + std::sqrt(1.0 + tau * tau));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < rows; ++i) {
                    const double aip = a[i][p], aiq = a[i][q];
                    a[i][p] = c * aip - s * aiq;
                    a[i][q] = s * aip + c * aiq;
                }
            }
        }
        if (off < 1e-14) break;
    }
    std::vector<double> sv(cols, 0.0);
    for (std::size_t p = 0; p < cols; ++p) {
        double norm2 = 0.0;
        for (std::size_t i = 0; i < rows; ++i) norm2 += a[i][p] * a[i][p];
        sv[p] = std::sqrt(norm2);
    }
    std::sort(sv.rbegin(), sv.rend());
    return sv;
}

// Scalar Adam recurrence, written out step by step.
struct ScalarAdam {
    double m = 0.0, v = 0.0;
    std::size_t t = 0;
    double update(double theta, double grad, double lr, double b1, double b2, double eps) {
        t += 1;
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad * grad;
        const double mhat = m / (1.0 - std::pow(b1, static_cast<double>(t)));
        const double vhat = v / (1.0 - std::pow(b2, static_cast<double>(t)));
        return theta - lr * mhat / (std::sqrt(vhat) + eps);
    }
};

// Multinomial logistic-regression probe trained with plain gradient descent;
// returns accuracy on the eval set. Feature vectors are float (as stored).
inline double linear_probe_accuracy(const std::vector<const std::vector<float>*>& train_x,
                                    const std::vector<std::size_t>& train_y,
                                    const std::vector<const std::vector<float>*>& eval_x,
                                    const std::vector<std::size_t>& eval_y, std::size_t classes,
                                    std::size_t epochs = 400, double lr = 4.0, double l2 = 1e-3) {
    const std::size_t dim = train_x.front()->size();
    std::vector<double> w(classes * dim, 0.0), b(classes, 0.0);
    std::vector<double> logits(classes), grad_w(classes * dim), grad_b(classes);
    const double inv_n = 1.0 / static_cast<double>(train_x.size());
    for (std::size_t e = 0; e < epochs; ++e) {
        std::fill(grad_w.begin(), grad_w.end(), 0.0);
        std::fill(grad_b.begin(), grad_b.end(), 0.0);
        for (std::size_t i = 0; i < train_x.size(); ++i) {
            const std::vector<float>& x = *train_x[i];
            for (std::size_t c = 0; c < classes; ++c) {
                double z = b[c];
                for (std::size_t j = 0; j < dim; ++j) z += w[c * dim + j] * static_cast<double>(x[j]);
                logits[c] = z;
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double sum = 0.0;
            for (double& z : logits) {
                z = std::exp(z - mx);
                sum += z;
            }
            for (std::size_t c = 0; c < classes; ++c) {
                const double p = logits[c] / sum - (train_y[i] == c ? 1.0 : 0.0);
                grad_b[c] += p * inv_n;
                for (std::size_t j = 0; j < dim; ++j) {
                    grad_w[c * dim + j] += p * static_cast<double>(x[j]) * inv_n;
                }
            }
        }
        for (std::size_t idx = 0; idx < w.size(); ++idx) {
            w[idx] -= lr * (grad_w[idx] + l2 * w[idx]);
        }
        for (std::size_t c = 0; c < classes; ++c) b[c] -= lr * grad_b[c];
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < eval_x.size(); ++i) {
        const std::vector<float>& x = *eval_x[i];
        std::size_t best = 0;
        double best_z = -1e300;
        for (std::size_t c = 0; c < classes; ++c) {
            double z = b[c];
            for (std::size_t j = 0; j < dim; ++j) z += w[c * dim + j] * static_cast<double>(x[j]);
            if (z > best_z) {
                best_z = z;
                best = c;
            }
        }
        if (best == eval_y[i]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(eval_x.size());
}

}  // namespace oracles
