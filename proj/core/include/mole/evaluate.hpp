#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mole/data.hpp"
#include "mole/metrics.hpp"
#include "mole/model.hpp"

namespace mole {

struct TaskEvalResult {
    TaskKind task = TaskKind::detection;
    int count = 0;
    int failures = 0; // unparseable predictions + records that could not be generated
    std::optional<ClassificationScores> scores;   // detection / classification
    std::optional<double> bleu4_mean;             // reasoning / self_instruct
    std::optional<double> rouge_l_mean;
    std::optional<double> exact_match;            // reasoning template match rate
};

struct EvalReport {
    std::string mask_letters;
    std::string split;
    std::vector<TaskEvalResult> tasks;

    const TaskEvalResult* find(TaskKind task) const;

    std::string to_csv() const; // one row per task; lossless round trip
    static EvalReport from_csv(const std::string& csv);
    std::string summary() const;
};

struct EvalOptions {
    /// 0 means a per-task budget sized to the task's answer grammar.
    int max_new_tokens = 0;
};

/// Greedy-decode every record of the split under the given cue mask and score
/// per task. Unparseable or ungeneratable records count as wrong, never
/// dropped. Deterministic in (model, split, mask).
EvalReport evaluate(const TinyLM& model, const std::vector<QARecord>& corpus, Split split,
                    const CueMask& mask, const EvalOptions& options = {});

/// Transcript-only versus all-cues comparison on the same checkpoint.
struct AblationReport {
    EvalReport transcript_only;
    EvalReport full;
    std::string to_csv() const; // rows = task x mask
    std::string summary() const;
};

AblationReport ablate(const TinyLM& model, const std::vector<QARecord>& corpus, Split split,
                      const EvalOptions& options = {});

/// Per-task mean router weights over every MoLE linear and prompt token.
struct RouterReport {
    std::vector<std::pair<std::string, Tensor1D>> rows; // task -> length-T mean
    std::string to_csv() const; // header: task,expert_1,...,expert_T
};

RouterReport router_analysis(const TinyLM& model, const std::vector<QARecord>& corpus,
                             Split split);

// ---- latency ---------------------------------------------------------------

struct LatencyRow {
    std::string task;     // "detection", "classification", "reasoning", "all"
    double mean_ms = 0.0; // per-sample wall clock
    std::string variant;  // "single_expert" or "mole"
};

struct LatencyOptions {
    int repetitions = 3;
    int warmup = 3;            // untimed generations before measuring
    int token_budget = 16;     // fixed decode length; EOS does not stop the clock
    int samples_per_task = 3;
};

/// Wall-clock per-sample decode cost for the mixture model versus a
/// single-expert variant on identical inputs. Strictly single-threaded.
std::vector<LatencyRow> latency_bench(const TinyLM& mole_model, const TinyLM& single_expert_model,
                                      const std::vector<QARecord>& sample,
                                      const LatencyOptions& options = {});

/// Renders rows into the comparison table (one line per variant plus a
/// difference line). Integral millisecond values print without decimals.
std::string render_latency_csv(const std::vector<LatencyRow>& rows);

} // namespace mole
