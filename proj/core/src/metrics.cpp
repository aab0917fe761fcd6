#include "mole/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>

namespace mole {

namespace {

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool starts_with(const std::string& s, const char* prefix) {
    return s.rfind(prefix, 0) == 0;
}

} // namespace

DetectionLabel parse_detection(const std::string& text) {
    const std::string t = lower(trim(text));
    if (starts_with(t, "yes")) return DetectionLabel::yes;
    if (starts_with(t, "no")) return DetectionLabel::no;
    if (t.find("there is no laugh") != std::string::npos) return DetectionLabel::no;
    if (t.find("there is laugh") != std::string::npos) return DetectionLabel::yes;
    return DetectionLabel::unparseable;
}

ClassificationLabel parse_classification(const std::string& text) {
    std::string t = lower(trim(text));
    const char* kTemplate = "the laugh type is";
    const std::size_t tpl = t.find(kTemplate);
    std::string scope = (tpl != std::string::npos) ? t.substr(tpl) : t;

    // first keyword by position wins
    struct Hit {
        std::size_t pos;
        ClassificationLabel label;
    };
    std::vector<Hit> hits;
    const std::pair<const char*, ClassificationLabel> keys[] = {
        {"mirthful", ClassificationLabel::mirthful},
        {"polite", ClassificationLabel::polite},
        {"satirical", ClassificationLabel::satirical},
    };
    for (const auto& [kw, label] : keys) {
        const std::size_t pos = scope.find(kw);
        if (pos != std::string::npos) hits.push_back({pos, label});
    }
    if (hits.empty()) return ClassificationLabel::unparseable;
    const Hit* best = &hits[0];
    for (const Hit& h : hits) {
        if (h.pos < best->pos) best = &h;
    }
    return best->label;
}

std::string parse_reasoning(const std::string& text) { return trim(text); }

std::string to_string(DetectionLabel v) {
    switch (v) {
        case DetectionLabel::yes: return "yes";
        case DetectionLabel::no: return "no";
        case DetectionLabel::unparseable: return "unparseable";
    }
    return "unparseable";
}

std::string to_string(ClassificationLabel v) {
    switch (v) {
        case ClassificationLabel::mirthful: return "mirthful";
        case ClassificationLabel::polite: return "polite";
        case ClassificationLabel::satirical: return "satirical";
        case ClassificationLabel::unparseable: return "unparseable";
    }
    return "unparseable";
}

namespace {

void check_lengths(const std::vector<std::string>& preds, const std::vector<std::string>& golds) {
    if (preds.size() != golds.size() || preds.empty()) {
        throw ShapeError("classification_metrics: preds (" + std::to_string(preds.size()) +
                         ") and golds (" + std::to_string(golds.size()) +
                         ") must be equal-length and nonempty");
    }
}

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double f1_of(double p, double r) { return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

} // namespace

ClassificationScores binary_classification_metrics(const std::vector<std::string>& preds,
                                                   const std::vector<std::string>& golds,
                                                   const std::string& positive) {
    check_lengths(preds, golds);
    int tp = 0, fp = 0, fn = 0, correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool p = preds[i] == positive;
        const bool g = golds[i] == positive;
        if (p && g) ++tp;
        if (p && !g) ++fp;
        if (!p && g) ++fn;
        if (preds[i] == golds[i]) ++correct;
    }
    ClassificationScores s;
    s.mode = AveragingMode::binary_positive;
    s.precision = safe_div(tp, tp + fp);
    s.recall = safe_div(tp, tp + fn);
    s.f1 = f1_of(s.precision, s.recall);
    s.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
    return s;
}

ClassificationScores macro_classification_metrics(const std::vector<std::string>& preds,
                                                  const std::vector<std::string>& golds,
                                                  const std::vector<std::string>& classes) {
    check_lengths(preds, golds);
    if (classes.empty()) throw ShapeError("macro_classification_metrics: empty class universe");
    double p_sum = 0.0, r_sum = 0.0, f_sum = 0.0;
    int correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == golds[i]) ++correct;
    }
    for (const std::string& cls : classes) {
        int tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const bool p = preds[i] == cls;
            const bool g = golds[i] == cls;
            if (p && g) ++tp;
            if (p && !g) ++fp;
            if (!p && g) ++fn;
        }
        const double p = safe_div(tp, tp + fp);
        const double r = safe_div(tp, tp + fn);
        p_sum += p;
        r_sum += r;
        f_sum += f1_of(p, r);
    }
    ClassificationScores s;
    s.mode = AveragingMode::macro;
    const double k = static_cast<double>(classes.size());
    s.precision = p_sum / k;
    s.recall = r_sum / k;
    s.f1 = f_sum / k;
    s.accuracy = static_cast<double>(correct) / static_cast<double>(preds.size());
    return s;
}

ClassificationScores classification_metrics(const std::vector<std::string>& preds,
                                            const std::vector<std::string>& golds,
                                            AveragingMode mode) {
    if (mode == AveragingMode::binary_positive) {
        return binary_classification_metrics(preds, golds, "yes");
    }
    return macro_classification_metrics(preds, golds, {"mirthful", "polite", "satirical"});
}

std::vector<std::string> metric_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char raw : text) {
        const unsigned char c = static_cast<unsigned char>(raw);
        if (std::isspace(c)) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

namespace {

std::map<std::string, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
    std::map<std::string, int> counts;
    const int len = static_cast<int>(tokens.size());
    for (int i = 0; i + n <= len; ++i) {
        std::string key;
        for (int j = 0; j < n; ++j) {
            if (j > 0) key.push_back('\x1f');
            key += tokens[static_cast<std::size_t>(i + j)];
        }
        ++counts[key];
    }
    return counts;
}

} // namespace

double bleu4(const std::string& hypothesis, const std::string& reference, bool smooth) {
    const std::vector<std::string> hyp = metric_tokens(hypothesis);
    const std::vector<std::string> ref = metric_tokens(reference);
    if (hyp.empty()) return 0.0;

    double log_sum = 0.0;
    for (int n = 1; n <= 4; ++n) {
        const auto hyp_counts = ngram_counts(hyp, n);
        const auto ref_counts = ngram_counts(ref, n);
        std::int64_t candidates = 0;
        std::int64_t matches = 0;
        for (const auto& [gram, count] : hyp_counts) {
            candidates += count;
            const auto it = ref_counts.find(gram);
            if (it != ref_counts.end()) matches += std::min(count, it->second);
        }
        double precision;
        if (matches > 0) {
            precision = static_cast<double>(matches) / static_cast<double>(candidates);
        } else if (n > 1 && smooth) {
            precision = 1.0 / static_cast<double>(candidates + 1);
        } else {
            return 0.0;
        }
        log_sum += std::log(precision);
    }
    const double geo_mean = std::exp(log_sum / 4.0);
    const double h = static_cast<double>(hyp.size());
    const double r = static_cast<double>(ref.size());
    const double bp = (h >= r) ? 1.0 : std::exp(1.0 - r / h);
    return bp * geo_mean;
}

double rouge_l(const std::string& hypothesis, const std::string& reference) {
    const std::vector<std::string> hyp = metric_tokens(hypothesis);
    const std::vector<std::string> ref = metric_tokens(reference);
    if (hyp.empty() || ref.empty()) return 0.0;

    // quadratic LCS with two rolling rows
    const std::size_t m = hyp.size();
    const std::size_t n = ref.size();
    std::vector<int> prev(n + 1, 0);
    std::vector<int> cur(n + 1, 0);
    for (std::size_t i = 1; i <= m; ++i) {
        for (std::size_t j = 1; j <= n; ++j) {
            if (hyp[i - 1] == ref[j - 1]) {
                cur[j] = prev[j - 1] + 1;
            } else {
                cur[j] = std::max(prev[j], cur[j - 1]);
            }
        }
        std::swap(prev, cur);
    }
    const double lcs = static_cast<double>(prev[n]);
    const double r = lcs / static_cast<double>(n);
    const double p = lcs / static_cast<double>(m);
    const double beta = 1.2;
    const double denom = r + beta * beta * p;
    if (denom == 0.0) return 0.0;
    return (1.0 + beta * beta) * r * p / denom;
}

} // namespace mole
