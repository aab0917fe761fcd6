// Test-only reference implementations, deliberately independent of the paths
// they check: naive loops, brute-force counting, and central finite
// differences. Nothing here may call into the library's own kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mole/tensor.hpp"

namespace oracle {

/// Plain triple loop in ijk order, accumulating over k ascending.
inline mole::Tensor2D matmul_ijk(const mole::Tensor2D& a, const mole::Tensor2D& b) {
    mole::Tensor2D c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        for (int j = 0; j < b.cols; ++j) {
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(k, j);
            c.at(i, j) = acc;
        }
    }
    return c;
}

/// exp-then-normalize without the max-subtraction trick (safe for small logits).
inline std::vector<double> softmax_naive(const std::vector<double>& z) {
    std::vector<double> e(z.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        e[i] = std::exp(z[i]);
        sum += e[i];
    }
    for (double& v : e) v /= sum;
    return e;
}

/// Central difference of a scalar function with respect to *x.
inline double central_diff(const std::function<double()>& f, double* x, double h = 1e-5) {
    const double orig = *x;
    *x = orig + h;
    const double fp = f();
    *x = orig - h;
    const double fm = f();
    *x = orig;
    return (fp - fm) / (2.0 * h);
}

inline double rel_err(double a, double b) {
    const double denom = std::max({std::fabs(a), std::fabs(b), 1e-6});
    return std::fabs(a - b) / denom;
}

/// Brute-force modified n-gram precision by scanning every candidate n-gram
/// against the reference with positional clipping.
inline double ngram_precision_brute(const std::vector<std::string>& hyp,
                                    const std::vector<std::string>& ref, int n, long long* matches,
                                    long long* total) {
    *matches = 0;
    *total = 0;
    const int h = static_cast<int>(hyp.size());
    const int r = static_cast<int>(ref.size());
    std::vector<std::vector<std::string>> hyp_grams, ref_grams;
    for (int i = 0; i + n <= h; ++i) {
        hyp_grams.emplace_back(hyp.begin() + i, hyp.begin() + i + n);
    }
    for (int i = 0; i + n <= r; ++i) {
        ref_grams.emplace_back(ref.begin() + i, ref.begin() + i + n);
    }
    std::vector<bool> used(ref_grams.size(), false);
    for (const auto& g : hyp_grams) {
        ++*total;
        for (std::size_t j = 0; j < ref_grams.size(); ++j) {
            if (!used[j] && ref_grams[j] == g) {
                used[j] = true;
                ++*matches;
                break;
            }
        }
    }
    return *total == 0 ? 0.0 : static_cast<double>(*matches) / static_cast<double>(*total);
}

/// BLEU-4 recomputed from the brute-force precisions (same pinned formula,
/// different counting machinery).
inline double bleu4_brute(const std::vector<std::string>& hyp, const std::vector<std::string>& ref,
                          bool smooth = true) {
    if (hyp.empty()) return 0.0;
    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        long long matches = 0, total = 0;
        ngram_precision_brute(hyp, ref, n, &matches, &total);
        double p;
        if (matches > 0) {
            p = static_cast<double>(matches) / static_cast<double>(total);
        } else if (n > 1 && smooth) {
            p = 1.0 / static_cast<double>(total + 1);
        } else {
            return 0.0;
        }
        log_sum += std::log(p);
    }
    const double geo = std::exp(log_sum / 4.0);
    const double h = static_cast<double>(hyp.size());
    const double r = static_cast<double>(ref.size());
    return (h >= r ? 1.0 : std::exp(1.0 - r / h)) * geo;
}

/// Exponential-time recursive LCS; only for short sequences.
inline int lcs_recursive(const std::vector<std::string>& a, const std::vector<std::string>& b,
                         std::size_t i, std::size_t j) {
    if (i == a.size() || j == b.size()) return 0;
    if (a[i] == b[j]) return 1 + lcs_recursive(a, b, i + 1, j + 1);
    return std::max(lcs_recursive(a, b, i + 1, j), lcs_recursive(a, b, i, j + 1));
}

inline double rouge_l_brute(const std::vector<std::string>& hyp,
                            const std::vector<std::string>& ref) {
    if (hyp.empty() || ref.empty()) return 0.0;
    const double lcs = lcs_recursive(hyp, ref, 0, 0);
    const double r = lcs / static_cast<double>(ref.size());
    const double p = lcs / static_cast<double>(hyp.size());
    const double beta = 1.2;
    const double denom = r + beta * beta * p;
    return denom == 0.0 ? 0.0 : (1.0 + beta * beta) * r * p / denom;
}

struct ConfusionScores {
    double precision = 0.0, recall = 0.0, f1 = 0.0, accuracy = 0.0;
};

/// Confusion-matrix metrics built from an explicit matrix walk.
inline ConfusionScores binary_from_confusion(const std::vector<std::string>& preds,
                                             const std::vector<std::string>& golds,
                                             const std::string& positive) {
    std::map<std::pair<std::string, std::string>, int> m;
    for (std::size_t i = 0; i < preds.size(); ++i) ++m[{golds[i], preds[i]}];
    int tp = 0, fp = 0, fn = 0, correct = 0, total = 0;
    for (const auto& [key, count] : m) {
        const auto& [gold, pred] = key;
        total += count;
        if (gold == pred) correct += count;
        if (pred == positive && gold == positive) tp += count;
        if (pred == positive && gold != positive) fp += count;
        if (pred != positive && gold == positive) fn += count;
    }
    ConfusionScores s;
    s.precision = (tp + fp) == 0 ? 0.0 : double(tp) / (tp + fp);
    s.recall = (tp + fn) == 0 ? 0.0 : double(tp) / (tp + fn);
    s.f1 = (s.precision + s.recall) == 0.0 ? 0.0
                                           : 2 * s.precision * s.recall / (s.precision + s.recall);
    s.accuracy = double(correct) / total;
    return s;
}

inline ConfusionScores macro_from_confusion(const std::vector<std::string>& preds,
                                            const std::vector<std::string>& golds,
                                            const std::vector<std::string>& classes) {
    ConfusionScores out;
    for (const std::string& cls : classes) {
        const ConfusionScores s = binary_from_confusion(preds, golds, cls);
        out.precision += s.precision;
        out.recall += s.recall;
        out.f1 += s.f1;
    }
    const double k = static_cast<double>(classes.size());
    out.precision /= k;
    out.recall /= k;
    out.f1 /= k;
    int correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == golds[i]) ++correct;
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
    return out;
}

} // namespace oracle
