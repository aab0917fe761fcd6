#pragma once

#include <string>
#include <vector>

#include "mole/data.hpp"

namespace mole {

/// Task-aware reading of generated text. Unparseable is a value, never an
/// error; callers score it as a wrong prediction.
enum class DetectionLabel { yes, no, unparseable };
enum class ClassificationLabel { mirthful, polite, satirical, unparseable };

DetectionLabel parse_detection(const std::string& text);
ClassificationLabel parse_classification(const std::string& text);
/// Whitespace-trimmed free text.
std::string parse_reasoning(const std::string& text);

std::string to_string(DetectionLabel v);
std::string to_string(ClassificationLabel v);

enum class AveragingMode { binary_positive, macro };

struct ClassificationScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double accuracy = 0.0;
    AveragingMode mode = AveragingMode::binary_positive;
};

/// Precision/recall/F1 on one positive label plus overall accuracy.
/// F1 is 0 when precision + recall is 0, otherwise their harmonic mean.
ClassificationScores binary_classification_metrics(const std::vector<std::string>& preds,
                                                   const std::vector<std::string>& golds,
                                                   const std::string& positive);

/// Macro average over the given class universe: per-class precision, recall,
/// and F1 are averaged with equal class weight. A class absent from both
/// preds and golds contributes zeros to the mean.
ClassificationScores macro_classification_metrics(const std::vector<std::string>& preds,
                                                  const std::vector<std::string>& golds,
                                                  const std::vector<std::string>& classes);

/// Dispatch with the task defaults: binary mode scores positive label "yes"
/// (detection); macro mode averages over the three laughter types.
ClassificationScores classification_metrics(const std::vector<std::string>& preds,
                                            const std::vector<std::string>& golds,
                                            AveragingMode mode);

/// BLEU with n-grams up to 4: geometric mean of modified precisions times the
/// brevity penalty. Tokens are case-folded whitespace words. With smoothing
/// (the default), zero-match higher-order counts get add-one smoothing;
/// exact mode returns 0 instead.
double bleu4(const std::string& hypothesis, const std::string& reference, bool smooth = true);

/// LCS-based F-measure with beta = 1.2, case-folded whitespace tokens.
double rouge_l(const std::string& hypothesis, const std::string& reference);

/// Shared tokenizer for the text metrics: case-fold, split on whitespace.
std::vector<std::string> metric_tokens(const std::string& text);

} // namespace mole
